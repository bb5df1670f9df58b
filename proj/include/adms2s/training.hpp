#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "adms2s/corpus.hpp"
#include "adms2s/model.hpp"

namespace adms2s {

enum class OptimizerKind { kAdam, kSgd };
OptimizerKind optimizer_kind_from_string(const std::string& name);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Parameters must be passed in a stable order across calls. Throws
  // GradientError when a parameter carries no gradient buffer.
  virtual void step(const std::vector<Tensor>& params) = 0;
  virtual OptimizerKind kind() const = 0;
  static void zero_grad(const std::vector<Tensor>& params);
};

class SgdOptimizer : public Optimizer {
 public:
  explicit SgdOptimizer(double lr) : lr_(lr) {}
  void step(const std::vector<Tensor>& params) override;
  OptimizerKind kind() const override { return OptimizerKind::kSgd; }

 private:
  double lr_;
};

// Adam with bias correction, default settings.
class AdamOptimizer : public Optimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Tensor>& params) override;
  OptimizerKind kind() const override { return OptimizerKind::kAdam; }
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

// Scales all gradients so the global L2 norm does not exceed max_norm;
// returns the pre-clip norm.
double clip_gradients(const std::vector<Tensor>& params, double max_norm);

struct TrainSchedule {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t shuffle_seed = 1;
  double clip_norm = 5.0;
  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::size_t dev_every = 0;         // epochs between dev BLEU evaluations; 0 = never
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double dev_bleu = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  double wall_seconds = 0.0;
  std::string log_line() const;  // "epoch=.. mean_loss=.. dev_bleu=.. wall_seconds=.."
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Deterministic given the rng seed and schedule: batches are bucketed by
// source length, their order reshuffled per epoch from the schedule seed,
// each example's loss is the per-step mean cross-entropy and gradients are
// averaged over the batch before clipping and the optimizer step.
TrainResult train(Seq2SeqModel& model, const std::vector<EncodedPair>& corpus,
                  const std::vector<EncodedPair>* dev_corpus, const Vocabulary* tgt_vocab,
                  const TrainSchedule& schedule, Optimizer& optimizer, SplitMix64& rng,
                  std::size_t dev_beam_width, const EpochCallback& on_epoch);

struct GradCheckEntry {
  std::size_t param_index = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string summary() const;
};

// Central finite differences of the batch loss against the tape gradient on
// `samples` randomly chosen scalar parameters. Runs in inference mode so the
// loss is deterministic. Relative error is |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport gradcheck(const Seq2SeqModel& model, const std::vector<EncodedPair>& batch,
                          std::size_t samples, double step, SplitMix64& rng);

// Small model re-weighted onto a well-conditioned audit point: training-scale
// init leaves many derivatives below what double-precision central
// differences can resolve, so the audit uses per-tensor-class magnitudes
// large enough that gradients clear the finite-difference noise floor
// without saturating the gates.
Seq2SeqModel gradcheck_reference_model(AttentionKind kind, std::uint64_t seed);
// The gradcheck toy batch: two pairs, source buffers of at most five tokens.
std::vector<EncodedPair> gradcheck_reference_batch();

}  // namespace adms2s
