#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adms2s/model.hpp"
#include "adms2s/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adms2s;
using adms2s::testing::random_tensor;

namespace {

ModelConfig tiny_config(AttentionKind kind) {
  ModelConfig cfg;
  cfg.attention_kind = kind;
  cfg.embed_dim = 5;
  cfg.model_dim = 6;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 2;
  cfg.attention_inner_dim = 4;
  cfg.dropout = 0.0;
  cfg.max_decode_len = 12;
  cfg.src_vocab_size = 9;
  cfg.tgt_vocab_size = 9;
  return cfg;
}

const std::vector<int> kSrc = {1, 4, 5, 6, 2};
const std::vector<int> kTgt = {1, 6, 5, 4, 2};

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("output distribution of a zero model is uniform") {
  Seq2SeqModel model = Seq2SeqModel::zero_initialized(tiny_config(AttentionKind::kSoft));
  SplitMix64 rng(3);
  Tensor state = random_tensor({6}, rng);
  Tensor context = random_tensor({6}, rng);
  Tensor log_probs = model.output_distribution(state, context);
  for (std::size_t v = 0; v < 9; ++v) {
    CHECK(log_probs.at(v) == doctest::Approx(-std::log(9.0)).epsilon(1e-12));
  }
}

TEST_CASE("output distribution normalizes and matches the loop oracle") {
  SplitMix64 rng(5);
  Seq2SeqModel model(tiny_config(AttentionKind::kSoft), rng);
  Tensor state = random_tensor({6}, rng);
  Tensor context = random_tensor({6}, rng);
  Tensor log_probs = model.output_distribution(state, context);

  double total = 0.0;
  for (std::size_t v = 0; v < 9; ++v) total += std::exp(log_probs.at(v));
  CHECK(std::abs(total - 1.0) < 1e-12);

  std::vector<double> logits(9, 0.0);
  for (std::size_t v = 0; v < 9; ++v) {
    double acc = model.out_bias.at(v);
    for (std::size_t e = 0; e < 6; ++e) acc += model.out_weight.at(v, e) * state.at(e);
    for (std::size_t e = 0; e < 6; ++e) acc += model.out_weight.at(v, 6 + e) * context.at(e);
    logits[v] = acc;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  for (std::size_t v = 0; v < 9; ++v) {
    CHECK(log_probs.at(v) == doctest::Approx(logits[v] - lse).epsilon(1e-12));
  }
}

TEST_CASE("teacher-forced loss of a zero model is log V") {
  for (AttentionKind kind : {AttentionKind::kSoft, AttentionKind::kMqt, AttentionKind::kAqt}) {
    Seq2SeqModel model = Seq2SeqModel::zero_initialized(tiny_config(kind));
    auto result = model.forward_teacher_forced(kSrc, kSrc.size(), kTgt, kTgt.size(), DropoutCtx{});
    CHECK(result.loss.item() == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  }
}

TEST_CASE("teacher-forced loss ignores pads beyond the end sentinel") {
  SplitMix64 rng(7);
  Seq2SeqModel model(tiny_config(AttentionKind::kMqt), rng);
  auto exact = model.forward_teacher_forced(kSrc, kSrc.size(), kTgt, kTgt.size(), DropoutCtx{});
  std::vector<int> padded_tgt = kTgt;
  padded_tgt.insert(padded_tgt.end(), {0, 0, 0});
  std::vector<int> padded_src = kSrc;
  padded_src.insert(padded_src.end(), {0, 0});
  auto padded = model.forward_teacher_forced(padded_src, kSrc.size(), padded_tgt, kTgt.size(),
                                             DropoutCtx{});
  CHECK(exact.loss.item() == padded.loss.item());
}

TEST_CASE("empty sequences are rejected") {
  SplitMix64 rng(8);
  Seq2SeqModel model(tiny_config(AttentionKind::kSoft), rng);
  CHECK_THROWS_AS(model.forward_teacher_forced({}, 0, kTgt, kTgt.size(), DropoutCtx{}),
                  EmptyInputError);
  CHECK_THROWS_AS(model.forward_teacher_forced(kSrc, kSrc.size(), {1}, 1, DropoutCtx{}),
                  EmptyInputError);
}

TEST_CASE("sequence log-probability equals the sum of stepwise gold log-probs") {
  SplitMix64 rng(9);
  Seq2SeqModel model(tiny_config(AttentionKind::kMqt), rng);
  auto result = model.forward_teacher_forced(kSrc, kSrc.size(), kTgt, kTgt.size(), DropoutCtx{});

  auto ctx = model.encode_source(kSrc, kSrc.size(), DropoutCtx{});
  LstmState state = ctx.initial_state;
  double manual_total = 0.0;
  for (std::size_t i = 1; i < kTgt.size(); ++i) {
    auto step = model.decode_step(kTgt[i - 1], state, ctx, DropoutCtx{});
    Tensor log_probs = log_softmax(step.logits);
    manual_total += log_probs.at(static_cast<std::size_t>(kTgt[i]));
    CHECK(result.step_log_probs[i - 1] ==
          doctest::Approx(log_probs.at(static_cast<std::size_t>(kTgt[i]))).epsilon(1e-12));
    state = step.next_state;
  }
  double reported = 0.0;
  for (double lp : result.step_log_probs) reported += lp;
  CHECK(reported == doctest::Approx(manual_total).epsilon(1e-12));
  CHECK(result.loss.item() ==
        doctest::Approx(-manual_total / static_cast<double>(kTgt.size() - 1)).epsilon(1e-12));
}

TEST_CASE("parameter count is a pure function of the config") {
  for (AttentionKind kind : {AttentionKind::kSoft, AttentionKind::kMqt, AttentionKind::kAqt}) {
    ModelConfig cfg = tiny_config(kind);
    SplitMix64 rng(11);
    Seq2SeqModel model(cfg, rng);
    std::size_t total = 0;
    for (const Tensor& p : model.parameters()) total += p.size();
    CHECK(total == Seq2SeqModel::parameter_count(cfg));
  }
}

TEST_CASE("checkpoint round-trips bitwise") {
  SplitMix64 rng(13);
  ModelConfig cfg = tiny_config(AttentionKind::kAqt);
  Seq2SeqModel model(cfg, rng);
  const auto path = temp_file("adms2s_roundtrip.ckpt");
  model.save_checkpoint(path.string());
  Seq2SeqModel loaded = Seq2SeqModel::load_checkpoint(path.string());

  auto before = model.parameters();
  auto after = loaded.parameters();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    REQUIRE(before[i].size() == after[i].size());
    for (std::size_t j = 0; j < before[i].size(); ++j) {
      CHECK(before[i].data()[j] == after[i].data()[j]);
    }
  }
  auto a = model.forward_teacher_forced(kSrc, kSrc.size(), kTgt, kTgt.size(), DropoutCtx{});
  auto b = loaded.forward_teacher_forced(kSrc, kSrc.size(), kTgt, kTgt.size(), DropoutCtx{});
  CHECK(a.loss.item() == b.loss.item());
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint size equals header plus parameter payload") {
  SplitMix64 rng(14);
  ModelConfig cfg = tiny_config(AttentionKind::kMqt);
  Seq2SeqModel model(cfg, rng);
  const auto path = temp_file("adms2s_size.ckpt");
  model.save_checkpoint(path.string());

  // independent accounting of the declared layout
  std::size_t params = cfg.src_vocab_size * cfg.embed_dim + cfg.tgt_vocab_size * cfg.embed_dim;
  const std::size_t dim = cfg.model_dim, half = dim / 2;
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : dim;
    params += 2 * (4 * half * (in + half + 1));
  }
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : dim;
    params += 4 * dim * (in + dim + 1);
  }
  params += cfg.decoder_layers * (2 * dim * dim + 2 * dim);
  params += 2 * cfg.attention_inner_dim * dim + 2 * cfg.attention_inner_dim + 1;  // + mqt weight
  params += cfg.tgt_vocab_size * (2 * dim + 1);

  const std::size_t header = 8 + 8 + cfg.serialize().size();
  CHECK(std::filesystem::file_size(path) == header + 8 * params);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints raise distinct errors") {
  SplitMix64 rng(15);
  ModelConfig cfg = tiny_config(AttentionKind::kSoft);
  Seq2SeqModel model(cfg, rng);
  const auto path = temp_file("adms2s_corrupt.ckpt");
  model.save_checkpoint(path.string());
  const auto full_size = std::filesystem::file_size(path);

  SUBCASE("truncated parameter block") {
    std::filesystem::resize_file(path, full_size - 64);
    CHECK_THROWS_AS(Seq2SeqModel::load_checkpoint(path.string()), CheckpointCorruptError);
  }
  SUBCASE("trailing bytes") {
    std::ofstream app(path, std::ios::binary | std::ios::app);
    app.write("xx", 2);
    app.close();
    CHECK_THROWS_AS(Seq2SeqModel::load_checkpoint(path.string()), CheckpointCorruptError);
  }
  SUBCASE("wrong magic") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("BOGUS999", 8);
    f.close();
    CHECK_THROWS_AS(Seq2SeqModel::load_checkpoint(path.string()), CheckpointVersionError);
  }
  SUBCASE("unusable config block") {
    // rewrite with a config block whose dims are invalid
    std::string text = "attention_kind=sa\nembed_dim=0\n";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write("ADMS2S01", 8);
    std::uint64_t len = text.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.close();
    CHECK_THROWS_AS(Seq2SeqModel::load_checkpoint(path.string()), CheckpointConfigError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("soft and mqt models share attention rankings when the pair weight is zero") {
  ModelConfig sa_cfg = tiny_config(AttentionKind::kSoft);
  ModelConfig mqt_cfg = tiny_config(AttentionKind::kMqt);
  SplitMix64 rng_a(99), rng_b(99);
  Seq2SeqModel sa(sa_cfg, rng_a);
  Seq2SeqModel mqt(mqt_cfg, rng_b);
  mqt.attention.pair_weight.data()[0] = 0.0;

  auto sa_ctx = sa.encode_source(kSrc, kSrc.size(), DropoutCtx{});
  auto mqt_ctx = mqt.encode_source(kSrc, kSrc.size(), DropoutCtx{});
  LstmState sa_state = sa_ctx.initial_state;
  LstmState mqt_state = mqt_ctx.initial_state;
  for (std::size_t i = 1; i < kTgt.size(); ++i) {
    auto sa_step = sa.decode_step(kTgt[i - 1], sa_state, sa_ctx, DropoutCtx{});
    auto mqt_step = mqt.decode_step(kTgt[i - 1], mqt_state, mqt_ctx, DropoutCtx{});
    std::size_t sa_argmax = 0, mqt_argmax = 0;
    for (std::size_t j = 0; j < kSrc.size(); ++j) {
      if (sa_step.weights.at(j) > sa_step.weights.at(sa_argmax)) sa_argmax = j;
      if (mqt_step.weights.at(j) > mqt_step.weights.at(mqt_argmax)) mqt_argmax = j;
    }
    CHECK(sa_argmax == mqt_argmax);
    sa_state = sa_step.next_state;
    mqt_state = mqt_step.next_state;
  }
}

TEST_CASE("end-to-end gradients match finite differences for every attention kind") {
  std::vector<EncodedPair> batch = gradcheck_reference_batch();
  for (AttentionKind kind : {AttentionKind::kSoft, AttentionKind::kMqt, AttentionKind::kAqt}) {
    INFO(to_string(kind));
    Seq2SeqModel model = gradcheck_reference_model(kind, 7);
    SplitMix64 pick(55);
    GradCheckReport report = gradcheck(model, batch, 24, 1e-5, pick);
    CHECK(report.entries.size() >= 20);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("model config validation rejects bad values") {
  ModelConfig cfg = tiny_config(AttentionKind::kSoft);
  cfg.model_dim = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(AttentionKind::kSoft);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(AttentionKind::kSoft);
  cfg.src_vocab_size = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("model config round-trips through its text form") {
  ModelConfig cfg = tiny_config(AttentionKind::kAqt);
  cfg.dropout = 0.2;
  ModelConfig back = ModelConfig::deserialize(cfg.serialize());
  CHECK(back.attention_kind == cfg.attention_kind);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.model_dim == cfg.model_dim);
  CHECK(back.dropout == cfg.dropout);
  CHECK(back.tgt_vocab_size == cfg.tgt_vocab_size);
  CHECK_THROWS_AS(ModelConfig::deserialize("mystery=1\n"), ConfigError);
}
