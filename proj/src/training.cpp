#include "adms2s/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "adms2s/evaluation.hpp"

namespace adms2s {

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

void Optimizer::zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) p.zero_grad();
}

namespace {

const double* require_grad(const Tensor& p) {
  const double* g = p.grad_data();
  if (!g) throw GradientError("optimizer: parameter gradient was never populated");
  return g;
}

}  // namespace

void SgdOptimizer::step(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    const double* g = require_grad(p);
    Tensor t = p;
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] -= lr_ * g[i];
  }
}

void AdamOptimizer::step(const std::vector<Tensor>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size(), 0.0);
      v_[i].assign(params[i].size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw GradientError("adam: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double* g = require_grad(params[i]);
    Tensor p = params[i];
    if (m_[i].size() != p.size()) throw GradientError("adam: parameter shape changed");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m_[i][j] / bc1;
      const double v_hat = v_[i][j] / bc2;
      p.data()[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::kAdam) return std::make_unique<AdamOptimizer>(lr);
  return std::make_unique<SgdOptimizer>(lr);
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor& p : params) {
    const double* g = require_grad(p);
    for (std::size_t i = 0; i < p.size(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const Tensor& p : params) {
      for (double& v : p.grad()) v *= factor;
    }
  }
  return norm;
}

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("schedule: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("schedule: batch_size must be at least 1");
  if (clip_norm <= 0.0) throw ConfigError("schedule: clip_norm must be positive");
}

std::string EpochRecord::log_line() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%zu mean_loss=%.6f dev_bleu=%.2f wall_seconds=%.3f",
                epoch, mean_loss, dev_bleu, wall_seconds);
  return buf;
}

namespace {

double evaluate_dev_bleu(const Seq2SeqModel& model, const std::vector<EncodedPair>& dev,
                         const Vocabulary& tgt_vocab, std::size_t beam_width) {
  std::vector<std::string> hyps, refs;
  hyps.reserve(dev.size());
  refs.reserve(dev.size());
  for (const auto& [src, tgt] : dev) {
    std::vector<int> out = model.translate(src, beam_width, model.config().max_decode_len);
    hyps.push_back(decode_tokens(tgt_vocab, out));
    refs.push_back(decode_tokens(tgt_vocab, tgt));
  }
  return corpus_bleu_lines(hyps, refs, 4, BleuSmoothing::kAddOne).bleu;
}

}  // namespace

TrainResult train(Seq2SeqModel& model, const std::vector<EncodedPair>& corpus,
                  const std::vector<EncodedPair>* dev_corpus, const Vocabulary* tgt_vocab,
                  const TrainSchedule& schedule, Optimizer& optimizer, SplitMix64& rng,
                  std::size_t dev_beam_width, const EpochCallback& on_epoch) {
  schedule.validate();
  if (corpus.empty()) throw EmptyInputError("train: empty corpus");
  for (const auto& [src, tgt] : corpus) {
    for (int tok : src) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= model.config().src_vocab_size) {
        throw ConfigError("train: corpus token outside the model's source vocabulary");
      }
    }
    for (int tok : tgt) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= model.config().tgt_vocab_size) {
        throw ConfigError("train: corpus token outside the model's target vocabulary");
      }
    }
  }

  const std::vector<Tensor> params = model.parameters();
  std::vector<Batch> batches = make_batches(corpus, schedule.batch_size);
  SplitMix64 order_rng(schedule.shuffle_seed);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(batches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 epoch_rng = order_rng.derive(epoch);
    shuffle(order, epoch_rng);

    double loss_sum = 0.0;
    std::size_t examples = 0;
    for (std::size_t bi : order) {
      const Batch& batch = batches[bi];
      Optimizer::zero_grad(params);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (std::size_t e = 0; e < batch.size(); ++e) {
        Tape tape;
        tape.register_parameters(params);
        DropoutCtx drop{model.config().dropout, &rng};
        auto forward = model.forward_teacher_forced(batch.source[e], batch.source_len[e],
                                                    batch.target[e], batch.target_len[e], drop);
        loss_sum += forward.loss.item();
        ++examples;
        tape.backward(scale(forward.loss, inv));
      }
      clip_gradients(params, schedule.clip_norm);
      optimizer.step(params);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(examples);
    if (dev_corpus != nullptr && tgt_vocab != nullptr && schedule.dev_every > 0 &&
        epoch % schedule.dev_every == 0) {
      record.dev_bleu = evaluate_dev_bleu(model, *dev_corpus, *tgt_vocab, dev_beam_width);
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

Seq2SeqModel gradcheck_reference_model(AttentionKind kind, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.attention_kind = kind;
  cfg.embed_dim = 6;
  cfg.model_dim = 8;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 2;
  cfg.attention_inner_dim = 5;
  cfg.dropout = 0.0;
  cfg.max_decode_len = 8;
  cfg.src_vocab_size = 12;
  cfg.tgt_vocab_size = 12;
  SplitMix64 build_rng(seed);
  Seq2SeqModel model(cfg, build_rng);

  SplitMix64 weight_rng = SplitMix64(seed).derive(0x67726164);
  auto fill = [&weight_rng](Tensor t, double scale) {
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = weight_rng.uniform(-scale, scale);
  };
  fill(model.source_embedding, 2.0);
  fill(model.target_embedding, 2.0);
  auto fill_cell = [&fill](LstmCell& cell) {
    fill(cell.w_input, 0.6);
    fill(cell.w_hidden, 0.6);
    fill(cell.bias, 0.3);
  };
  for (LstmCell& cell : model.encoder.forward_cells) fill_cell(cell);
  for (LstmCell& cell : model.encoder.backward_cells) fill_cell(cell);
  for (LstmCell& cell : model.decoder.cells()) fill_cell(cell);
  for (std::size_t l = 0; l < model.init_weight.size(); ++l) {
    fill(model.init_weight[l], 0.8);
    fill(model.init_bias[l], 0.4);
  }
  fill(model.attention.w_state, 1.2);
  fill(model.attention.w_memory, 1.2);
  fill(model.attention.score_vec, 1.2);
  fill(model.attention.bias, 0.6);
  if (model.attention.pair_weight.defined()) fill(model.attention.pair_weight, 1.2);
  fill(model.out_weight, 2.0);
  fill(model.out_bias, 1.0);
  return model;
}

std::vector<EncodedPair> gradcheck_reference_batch() {
  return {{{1, 4, 5, 2}, {1, 5, 4, 6, 2}}, {{1, 6, 7, 8, 2}, {1, 8, 6, 2}}};
}

std::string GradCheckReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "checked=%zu max_rel_error=%.3e mean_rel_error=%.3e",
                entries.size(), max_rel_error, mean_rel_error);
  return buf;
}

GradCheckReport gradcheck(const Seq2SeqModel& model, const std::vector<EncodedPair>& batch,
                          std::size_t samples, double step, SplitMix64& rng) {
  if (batch.empty()) throw EmptyInputError("gradcheck: empty batch");
  const std::vector<Tensor> params = model.parameters();

  auto batch_loss = [&model, &batch]() -> Tensor {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& [src, tgt] : batch) {
      auto fwd = model.forward_teacher_forced(src, src.size(), tgt, tgt.size(), DropoutCtx{});
      total = add(total, fwd.loss);
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
  };

  Optimizer::zero_grad(params);
  {
    Tape tape;
    tape.register_parameters(params);
    tape.backward(batch_loss());
  }

  std::size_t total_scalars = 0;
  for (const Tensor& p : params) total_scalars += p.size();
  std::vector<std::size_t> chosen;
  if (samples >= total_scalars) {
    chosen.resize(total_scalars);
    for (std::size_t i = 0; i < total_scalars; ++i) chosen[i] = i;
  } else {
    std::vector<std::size_t> all(total_scalars);
    for (std::size_t i = 0; i < total_scalars; ++i) all[i] = i;
    shuffle(all, rng);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(samples));
    std::sort(chosen.begin(), chosen.end());
  }

  GradCheckReport report;
  double err_sum = 0.0;
  for (std::size_t flat : chosen) {
    std::size_t pi = 0, offset = flat;
    while (offset >= params[pi].size()) {
      offset -= params[pi].size();
      ++pi;
    }
    Tensor p = params[pi];
    const double analytic = p.grad()[offset];
    const double saved = p.data()[offset];
    p.data()[offset] = saved + step;
    const double plus = batch_loss().item();
    p.data()[offset] = saved - step;
    const double minus = batch_loss().item();
    p.data()[offset] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    report.entries.push_back({pi, offset, analytic, numeric, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    err_sum += rel;
  }
  report.mean_rel_error = report.entries.empty() ? 0.0 : err_sum / report.entries.size();
  return report;
}

}  // namespace adms2s
