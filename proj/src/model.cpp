#include "adms2s/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace adms2s {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'D', 'M', 'S', '2', 'S', '0', '1'};
constexpr int kBosToken = 1;
constexpr int kEosToken = 2;

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || model_dim == 0 || attention_inner_dim == 0) {
    throw ConfigError("model config: dimensions must be positive");
  }
  if (model_dim % 2 != 0) {
    throw ConfigError("model config: model_dim must be even (it splits across encoder directions)");
  }
  if (encoder_layers == 0 || decoder_layers == 0) {
    throw ConfigError("model config: layer counts must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model config: dropout must lie in [0, 1)");
  }
  if (max_decode_len == 0) throw ConfigError("model config: max_decode_len must be positive");
  if (src_vocab_size < 4 || tgt_vocab_size < 4) {
    throw ConfigError("model config: vocabulary sizes must cover the four reserved specials");
  }
}

std::string ModelConfig::serialize() const {
  std::ostringstream out;
  out << "attention_kind=" << to_string(attention_kind) << "\n";
  out << "embed_dim=" << embed_dim << "\n";
  out << "model_dim=" << model_dim << "\n";
  out << "encoder_layers=" << encoder_layers << "\n";
  out << "decoder_layers=" << decoder_layers << "\n";
  out << "attention_inner_dim=" << attention_inner_dim << "\n";
  out << "dropout=" << format_double(dropout) << "\n";
  out << "max_decode_len=" << max_decode_len << "\n";
  out << "src_vocab_size=" << src_vocab_size << "\n";
  out << "tgt_vocab_size=" << tgt_vocab_size << "\n";
  return out.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "attention_kind") {
        cfg.attention_kind = attention_kind_from_string(value);
      } else if (key == "embed_dim") {
        cfg.embed_dim = std::stoul(value);
      } else if (key == "model_dim") {
        cfg.model_dim = std::stoul(value);
      } else if (key == "encoder_layers") {
        cfg.encoder_layers = std::stoul(value);
      } else if (key == "decoder_layers") {
        cfg.decoder_layers = std::stoul(value);
      } else if (key == "attention_inner_dim") {
        cfg.attention_inner_dim = std::stoul(value);
      } else if (key == "dropout") {
        cfg.dropout = std::stod(value);
      } else if (key == "max_decode_len") {
        cfg.max_decode_len = std::stoul(value);
      } else if (key == "src_vocab_size") {
        cfg.src_vocab_size = std::stoul(value);
      } else if (key == "tgt_vocab_size") {
        cfg.tgt_vocab_size = std::stoul(value);
      } else {
        throw ConfigError("model config: unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("model config: bad value for '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("model config: bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg, SplitMix64& rng) : Seq2SeqModel(cfg) {
  const std::size_t dim = cfg_.model_dim;
  source_embedding = Tensor::param({cfg_.src_vocab_size, cfg_.embed_dim}, rng);
  target_embedding = Tensor::param({cfg_.tgt_vocab_size, cfg_.embed_dim}, rng);
  encoder = BiLstmEncoder(cfg_.encoder_layers, cfg_.embed_dim, dim, rng);
  decoder = LstmStack(cfg_.decoder_layers, cfg_.embed_dim, dim, rng);
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    init_weight.push_back(Tensor::param({2 * dim, dim}, rng));
    init_bias.push_back(Tensor::param({2 * dim}, rng, 0.0, 0.0));
  }
  attention = AttentionParams(cfg_.attention_kind, dim, dim, cfg_.attention_inner_dim, rng);
  out_weight = Tensor::param({cfg_.tgt_vocab_size, 2 * dim}, rng);
  out_bias = Tensor::param({cfg_.tgt_vocab_size}, rng, 0.0, 0.0);
}

Seq2SeqModel Seq2SeqModel::zero_initialized(const ModelConfig& cfg) {
  SplitMix64 rng(0);
  Seq2SeqModel model(cfg, rng);
  for (Tensor& p : model.parameters()) {
    for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] = 0.0;
  }
  return model;
}

std::vector<Tensor> Seq2SeqModel::parameters() const {
  std::vector<Tensor> out = {source_embedding, target_embedding};
  auto append = [&out](const std::vector<Tensor>& ps) {
    out.insert(out.end(), ps.begin(), ps.end());
  };
  append(encoder.parameters());
  append(decoder.parameters());
  for (std::size_t l = 0; l < init_weight.size(); ++l) {
    out.push_back(init_weight[l]);
    out.push_back(init_bias[l]);
  }
  append(attention.parameters());
  out.push_back(out_weight);
  out.push_back(out_bias);
  return out;
}

std::size_t Seq2SeqModel::parameter_count(const ModelConfig& cfg) {
  const std::size_t dim = cfg.model_dim;
  const std::size_t half = dim / 2;
  std::size_t total = cfg.src_vocab_size * cfg.embed_dim + cfg.tgt_vocab_size * cfg.embed_dim;
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : dim;
    total += 2 * (4 * half * in + 4 * half * half + 4 * half);
  }
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : dim;
    total += 4 * dim * in + 4 * dim * dim + 4 * dim;
  }
  total += cfg.decoder_layers * (2 * dim * dim + 2 * dim);
  total += cfg.attention_inner_dim * dim * 2 + 2 * cfg.attention_inner_dim;
  if (cfg.attention_kind == AttentionKind::kMqt) total += 1;
  if (cfg.attention_kind == AttentionKind::kAqt) total += dim;
  total += cfg.tgt_vocab_size * 2 * dim + cfg.tgt_vocab_size;
  return total;
}

Seq2SeqModel::SentenceContext Seq2SeqModel::encode_source(const std::vector<int>& tokens,
                                                          std::size_t true_len,
                                                          const DropoutCtx& drop) const {
  if (true_len == 0 || tokens.empty()) throw EmptyInputError("encode_source: empty source");
  if (true_len > tokens.size()) throw ShapeError("encode_source: true length exceeds buffer");
  std::vector<Tensor> embedded(tokens.size());
  for (std::size_t j = 0; j < true_len; ++j) {
    const int tok = tokens[j];
    if (tok < 0 || static_cast<std::size_t>(tok) >= cfg_.src_vocab_size) {
      throw IndexError("encode_source: token index " + std::to_string(tok) +
                       " outside the source vocabulary");
    }
    embedded[j] = drop.apply(embedding_row(source_embedding, static_cast<std::size_t>(tok)));
  }
  SentenceContext ctx;
  ctx.encoder = encoder.encode(embedded, true_len, drop);
  ctx.memory_proj = memory_projection(ctx.encoder.source, attention);
  if (cfg_.attention_kind != AttentionKind::kSoft) {
    ctx.pair = build_pair_tensor(ctx.encoder.source);
  }
  const std::size_t dim = cfg_.model_dim;
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    const std::size_t enc_layer = std::min(l, cfg_.encoder_layers - 1);
    Tensor summary =
        concat(ctx.encoder.final_forward[enc_layer], ctx.encoder.first_backward[enc_layer]);
    Tensor mapped = add(matvec(init_weight[l], summary), init_bias[l]);
    ctx.initial_state.h.push_back(tanh_ew(slice(mapped, 0, dim)));
    ctx.initial_state.c.push_back(slice(mapped, dim, dim));
  }
  return ctx;
}

Seq2SeqModel::StepResult Seq2SeqModel::decode_step(int prev_token, const LstmState& state,
                                                   const SentenceContext& ctx,
                                                   const DropoutCtx& drop) const {
  if (prev_token < 0 || static_cast<std::size_t>(prev_token) >= cfg_.tgt_vocab_size) {
    throw IndexError("decode_step: token index " + std::to_string(prev_token) +
                     " outside the target vocabulary");
  }
  Tensor embedded =
      drop.apply(embedding_row(target_embedding, static_cast<std::size_t>(prev_token)));
  auto [state_top, next_state] = decoder.step(embedded, state, drop);

  StepResult result;
  result.state = state_top;
  result.next_state = next_state;
  switch (cfg_.attention_kind) {
    case AttentionKind::kSoft: {
      Tensor scores =
          additive_scores_cached(state_top, ctx.encoder.source, attention, ctx.memory_proj);
      result.weights = softmax_masked(scores, ctx.encoder.source.mask);
      result.context = matvec(ctx.encoder.source.states, result.weights);
      break;
    }
    case AttentionKind::kMqt:
    case AttentionKind::kAqt: {
      Tensor diag =
          additive_scores_cached(state_top, ctx.encoder.source, attention, ctx.memory_proj);
      Tensor pair_state = attention.attended_state(state_top);
      Tensor pair_scores = cfg_.attention_kind == AttentionKind::kMqt
                               ? mqt_offdiagonals(ctx.pair, pair_state, attention.pair_weight)
                               : aqt_offdiagonals(ctx.pair, pair_state, attention.pair_weight);
      AttentionDensityMatrix adm = build_adm(diag, pair_scores, ctx.encoder.source.mask);
      std::tie(result.context, result.weights) = adm_context(adm, ctx.encoder.source);
      break;
    }
  }
  result.logits = output_logits(state_top, result.context);
  return result;
}

Tensor Seq2SeqModel::output_logits(const Tensor& state, const Tensor& context) const {
  return add(matvec(out_weight, concat(state, context)), out_bias);
}

Tensor Seq2SeqModel::output_distribution(const Tensor& state, const Tensor& context) const {
  return log_softmax(output_logits(state, context));
}

Seq2SeqModel::TeacherForcedResult Seq2SeqModel::forward_teacher_forced(
    const std::vector<int>& source, std::size_t source_len, const std::vector<int>& target,
    std::size_t target_len, const DropoutCtx& drop) const {
  if (target_len < 2 || target.size() < 2) {
    throw EmptyInputError("forward_teacher_forced: target needs at least the two sentinels");
  }
  if (target_len > target.size()) {
    throw ShapeError("forward_teacher_forced: target length exceeds buffer");
  }
  SentenceContext ctx = encode_source(source, source_len, drop);
  LstmState state = ctx.initial_state;

  TeacherForcedResult result;
  Tensor total = Tensor::scalar(0.0);
  const std::size_t steps = target_len - 1;
  for (std::size_t i = 1; i <= steps; ++i) {
    StepResult step = decode_step(target[i - 1], state, ctx, drop);
    const int gold = target[i];
    if (gold < 0 || static_cast<std::size_t>(gold) >= cfg_.tgt_vocab_size) {
      throw IndexError("forward_teacher_forced: gold token outside the target vocabulary");
    }
    Tensor step_loss = cross_entropy(step.logits, static_cast<std::size_t>(gold));
    result.step_log_probs.push_back(-step_loss.item());
    total = add(total, step_loss);
    state = step.next_state;
  }
  result.loss = scale(total, 1.0 / static_cast<double>(steps));
  return result;
}

std::vector<int> Seq2SeqModel::translate(const std::vector<int>& source, std::size_t beam_width,
                                         std::size_t max_len) const {
  ModelBeamScorer scorer(*this, source, source.size());
  BeamResult result = beam_decode(scorer, kBosToken, kEosToken, beam_width, max_len);
  std::vector<int> tokens = result.best.tokens;
  if (!tokens.empty() && tokens.back() == kEosToken) tokens.pop_back();
  return tokens;
}

void Seq2SeqModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string cfg_text = cfg_.serialize();
  const std::uint64_t len = cfg_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  for (const Tensor& p : parameters()) {
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failure on checkpoint " + path);
}

Seq2SeqModel Seq2SeqModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointVersionError("checkpoint " + path + " has an unsupported format version");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 20)) {
    throw CheckpointCorruptError("checkpoint " + path + " has a corrupt config block");
  }
  std::string cfg_text(len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointCorruptError("checkpoint " + path + " is truncated in the config block");

  ModelConfig cfg;
  try {
    cfg = ModelConfig::deserialize(cfg_text);
  } catch (const ConfigError& e) {
    throw CheckpointConfigError("checkpoint " + path + ": " + e.what());
  }
  Seq2SeqModel model = zero_initialized(cfg);
  for (Tensor& p : model.parameters()) {
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!in) {
      throw CheckpointCorruptError("checkpoint " + path + " is truncated in the parameter block");
    }
  }
  in.peek();
  if (!in.eof()) {
    throw CheckpointCorruptError("checkpoint " + path + " carries trailing bytes");
  }
  return model;
}

ModelBeamScorer::ModelBeamScorer(const Seq2SeqModel& model, const std::vector<int>& source,
                                 std::size_t source_len)
    : model_(model), ctx_(model.encode_source(source, source_len, DropoutCtx{})) {}

std::size_t ModelBeamScorer::vocab_size() const { return model_.config().tgt_vocab_size; }

std::any ModelBeamScorer::begin() const { return ctx_.initial_state; }

std::pair<std::vector<double>, std::any> ModelBeamScorer::step(const std::any& state,
                                                               int prev_token) const {
  const LstmState& st = std::any_cast<const LstmState&>(state);
  Seq2SeqModel::StepResult step = model_.decode_step(prev_token, st, ctx_, DropoutCtx{});
  Tensor log_probs = log_softmax(step.logits);
  return {log_probs.values(), std::any(step.next_state)};
}

}  // namespace adms2s
