#pragma once

#include <string>
#include <vector>

#include "adms2s/attention.hpp"
#include "adms2s/decoding.hpp"
#include "adms2s/recurrent.hpp"
#include "adms2s/tensor.hpp"

namespace adms2s {

struct ModelConfig {
  AttentionKind attention_kind = AttentionKind::kSoft;
  std::size_t embed_dim = 256;
  std::size_t model_dim = 256;  // decoder state width and concatenated encoding width
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t attention_inner_dim = 256;
  double dropout = 0.2;
  std::size_t max_decode_len = 50;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;

  void validate() const;
  std::string serialize() const;  // key=value lines
  static ModelConfig deserialize(const std::string& text);
};

// Embeddings, bidirectional encoder, attention head, decoder and output
// projection over concat(state, context).
class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& cfg, SplitMix64& rng);
  static Seq2SeqModel zero_initialized(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  // All trainable tensors in declaration order (the checkpoint layout).
  std::vector<Tensor> parameters() const;
  static std::size_t parameter_count(const ModelConfig& cfg);

  // Everything that is constant across the decoding steps of one source
  // sentence: encodings, the alignment memory projection, the pair tensor
  // (pairwise kinds only) and the learned initial decoder state.
  struct SentenceContext {
    EncoderOutput encoder;
    Tensor memory_proj;
    PairTensor pair;
    LstmState initial_state;
  };

  SentenceContext encode_source(const std::vector<int>& tokens, std::size_t true_len,
                                const DropoutCtx& drop) const;

  struct StepResult {
    Tensor state;    // top-layer decoder state
    Tensor context;  // attention context
    Tensor weights;  // attention distribution over source positions
    Tensor logits;   // unnormalized output scores
    LstmState next_state;
  };
  StepResult decode_step(int prev_token, const LstmState& state, const SentenceContext& ctx,
                         const DropoutCtx& drop) const;

  Tensor output_logits(const Tensor& state, const Tensor& context) const;
  // Log-probabilities over the target vocabulary.
  Tensor output_distribution(const Tensor& state, const Tensor& context) const;

  struct TeacherForcedResult {
    Tensor loss;                        // mean cross-entropy over valid target steps
    std::vector<double> step_log_probs;  // gold log-probability per step
  };
  // Sequences carry bos/eos sentinels; positions beyond the true lengths are
  // pads and do not contribute.
  TeacherForcedResult forward_teacher_forced(const std::vector<int>& source,
                                             std::size_t source_len,
                                             const std::vector<int>& target,
                                             std::size_t target_len,
                                             const DropoutCtx& drop) const;

  // Beam-decode a source sentence (sentinels included); returns generated
  // tokens without the end sentinel.
  std::vector<int> translate(const std::vector<int>& source, std::size_t beam_width,
                             std::size_t max_len) const;

  void save_checkpoint(const std::string& path) const;
  static Seq2SeqModel load_checkpoint(const std::string& path);

  Tensor source_embedding;  // [V_src × E]
  Tensor target_embedding;  // [V_tgt × E]
  BiLstmEncoder encoder;
  LstmStack decoder;
  std::vector<Tensor> init_weight;  // per decoder layer [2H × model_dim]
  std::vector<Tensor> init_bias;    // per decoder layer [2H]
  AttentionParams attention;
  Tensor out_weight;  // [V_tgt × 2·model_dim]
  Tensor out_bias;    // [V_tgt]

 private:
  explicit Seq2SeqModel(const ModelConfig& cfg);
  ModelConfig cfg_;
};

// Adapter driving beam search with a trained model. Construct outside any
// tape scope; encoding happens at construction.
class ModelBeamScorer : public BeamScorer {
 public:
  ModelBeamScorer(const Seq2SeqModel& model, const std::vector<int>& source,
                  std::size_t source_len);
  std::size_t vocab_size() const override;
  std::any begin() const override;
  std::pair<std::vector<double>, std::any> step(const std::any& state,
                                                int prev_token) const override;

 private:
  const Seq2SeqModel& model_;
  Seq2SeqModel::SentenceContext ctx_;
};

}  // namespace adms2s
