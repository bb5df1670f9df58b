// adms2s: train, decode and evaluate sequence-to-sequence translation models
// with classical soft attention or density-matrix-style pairwise attention.
//
// Commands: synth, train, translate, evaluate, gradcheck, analyze_freq.
// Exit codes: 0 ok, 1 internal, 2 usage, 3 data, 4 model, 5 check failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adms2s/corpus.hpp"
#include "adms2s/evaluation.hpp"
#include "adms2s/model.hpp"
#include "adms2s/training.hpp"

namespace fs = std::filesystem;
using namespace adms2s;

namespace {

const char* kUsage =
    "usage: adms2s <command> [--config FILE] [--key value ...]\n"
    "\n"
    "commands:\n"
    "  synth         generate a synthetic parallel corpus (copy/reverse/lexicon)\n"
    "  train         train a model on a parallel corpus\n"
    "  translate     beam-decode an input file with a trained checkpoint\n"
    "  evaluate      corpus BLEU of a hypothesis file against a reference file\n"
    "  gradcheck     finite-difference audit of the end-to-end gradients\n"
    "  analyze_freq  rare-word frequency deviation of model outputs\n"
    "\n"
    "Config files hold one key=value per line with # comments; flags mirror the\n"
    "keys exactly and override the file. Run a command with a missing required\n"
    "key to see its key set.\n";

// Resolved key=value configuration for one command. Defaults are installed
// first, then the config file, then flags; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig(std::string command, std::map<std::string, std::string> defaults,
            const std::vector<std::string>& args)
      : command_(std::move(command)), values_(std::move(defaults)) {
    std::map<std::string, std::string> file_values, flag_values;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const std::string& arg = args[i];
      if (arg.rfind("--", 0) != 0) throw UsageError("expected a --flag, got '" + arg + "'");
      if (i + 1 >= args.size()) throw UsageError("flag '" + arg + "' is missing a value");
      const std::string key = arg.substr(2);
      const std::string value = args[++i];
      if (key == "config") {
        merge_file(value, file_values);
      } else {
        flag_values[key] = value;
      }
    }
    for (const auto& [k, v] : file_values) set_known(k, v);
    for (const auto& [k, v] : flag_values) set_known(k, v);
  }

  const std::string& command() const { return command_; }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("internal: unregistered key '" + key + "'");
    return it->second;
  }

  const std::string& require(const std::string& key) const {
    const std::string& v = get(key);
    if (v.empty()) {
      std::string keys;
      for (const auto& [k, unused] : values_) keys += " --" + k;
      throw UsageError(command_ + ": missing required --" + key + " (accepted keys:" + keys + ")");
    }
    return v;
  }

  bool has(const std::string& key) const { return !get(key).empty(); }

  std::uint64_t get_u64(const std::string& key) const {
    try {
      std::size_t used = 0;
      const std::string& v = require(key);
      const std::uint64_t out = std::stoull(v, &used);
      if (used != v.size()) throw UsageError("");
      return out;
    } catch (const std::exception&) {
      throw UsageError(command_ + ": --" + key + " expects a nonnegative integer, got '" +
                       get(key) + "'");
    }
  }

  double get_double(const std::string& key) const {
    try {
      std::size_t used = 0;
      const std::string& v = require(key);
      const double out = std::stod(v, &used);
      if (used != v.size()) throw UsageError("");
      return out;
    } catch (const std::exception&) {
      throw UsageError(command_ + ": --" + key + " expects a number, got '" + get(key) + "'");
    }
  }

  // Echo of the fully resolved configuration, stable across runs.
  std::string echo() const {
    std::string out = "command=" + command_ + "\n";
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  void write_echo(const fs::path& dir) const {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.echo", std::ios::binary);
    if (!out) throw DataError("cannot write config echo under " + dir.string());
    out << echo();
  }

 private:
  void set_known(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      throw UsageError(command_ + ": unknown key '" + key + "'");
    }
    it->second = value;
  }

  void merge_file(const std::string& path, std::map<std::string, std::string>& into) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config file " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
        line.pop_back();
      }
      std::size_t start = line.find_first_not_of(" \t");
      if (start == std::string::npos) continue;
      const auto eq = line.find('=', start);
      if (eq == std::string::npos) {
        throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
      }
      into[line.substr(start, eq - start)] = line.substr(eq + 1);
    }
  }

  std::string command_;
  std::map<std::string, std::string> values_;
};

std::vector<std::pair<double, double>> parse_bands(const std::string& text) {
  std::vector<std::pair<double, double>> bands;
  std::size_t at = 0;
  while (at < text.size()) {
    const auto comma = text.find(',', at);
    const std::string part = text.substr(at, comma == std::string::npos ? comma : comma - at);
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      throw UsageError("bands expect lo:hi[,lo:hi...], got '" + text + "'");
    }
    try {
      bands.emplace_back(std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("bands expect numeric bounds, got '" + part + "'");
    }
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  if (bands.empty()) throw UsageError("bands expect at least one lo:hi interval");
  return bands;
}

ModelConfig model_config_from(const RunConfig& cfg, std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig mc;
  mc.attention_kind = attention_kind_from_string(cfg.require("attention_kind"));
  mc.embed_dim = cfg.get_u64("embed_dim");
  mc.model_dim = cfg.get_u64("model_dim");
  mc.encoder_layers = cfg.get_u64("encoder_layers");
  mc.decoder_layers = cfg.get_u64("decoder_layers");
  mc.attention_inner_dim = cfg.get_u64("attention_inner_dim");
  mc.dropout = cfg.get_double("dropout");
  mc.max_decode_len = cfg.get_u64("max_decode_len");
  mc.src_vocab_size = src_vocab;
  mc.tgt_vocab_size = tgt_vocab;
  mc.validate();
  return mc;
}

// rng stream labels fanned out of the master seed
constexpr std::uint64_t kParamStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

int cmd_synth(const RunConfig& cfg) {
  const fs::path out_dir = cfg.require("out_dir");
  const std::size_t pairs = cfg.get_u64("pairs");
  const std::size_t test_pairs = cfg.get_u64("test_pairs");
  const SyntheticKind kind = synthetic_kind_from_string(cfg.require("kind"));
  ParallelCorpus all = make_synthetic_task(kind, cfg.get_u64("vocab_size"), cfg.get_u64("min_len"),
                                           cfg.get_u64("max_len"), pairs + test_pairs,
                                           cfg.get_u64("seed"));
  fs::create_directories(out_dir);
  ParallelCorpus head;
  head.pairs.assign(all.pairs.begin(), all.pairs.begin() + static_cast<std::ptrdiff_t>(pairs));
  write_parallel(head, (out_dir / "train.src").string(), (out_dir / "train.tgt").string());
  if (test_pairs > 0) {
    ParallelCorpus tail;
    tail.pairs.assign(all.pairs.begin() + static_cast<std::ptrdiff_t>(pairs), all.pairs.end());
    write_parallel(tail, (out_dir / "test.src").string(), (out_dir / "test.tgt").string());
  }
  cfg.write_echo(out_dir);
  std::cout << "wrote " << pairs << " train pairs";
  if (test_pairs > 0) std::cout << " and " << test_pairs << " test pairs";
  std::cout << " under " << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path out_dir = cfg.require("out_dir");
  ParallelCorpus corpus = load_parallel(cfg.require("train_src"), cfg.require("train_tgt"));
  if (corpus.pairs.empty()) throw DataError("train: corpus holds no usable pairs");

  const std::size_t vocab_max = cfg.get_u64("vocab_max_size");
  const std::size_t vocab_min_count = cfg.get_u64("vocab_min_count");
  Vocabulary src_vocab = Vocabulary::build(read_lines(cfg.require("train_src")), vocab_max,
                                           vocab_min_count);
  Vocabulary tgt_vocab = Vocabulary::build(read_lines(cfg.require("train_tgt")), vocab_max,
                                           vocab_min_count);
  std::vector<EncodedPair> encoded = encode_corpus(corpus, src_vocab, tgt_vocab);

  std::vector<EncodedPair> dev;
  const bool have_dev = cfg.has("dev_src") && cfg.has("dev_tgt");
  if (have_dev) {
    dev = encode_corpus(load_parallel(cfg.get("dev_src"), cfg.get("dev_tgt")), src_vocab,
                        tgt_vocab);
  }

  ModelConfig mc = model_config_from(cfg, src_vocab.size(), tgt_vocab.size());
  SplitMix64 master(cfg.get_u64("seed"));
  SplitMix64 param_rng = master.derive(kParamStream);
  SplitMix64 dropout_rng = master.derive(kDropoutStream);
  SplitMix64 shuffle_rng = master.derive(kShuffleStream);
  Seq2SeqModel model(mc, param_rng);

  TrainSchedule schedule;
  schedule.epochs = cfg.get_u64("epochs");
  schedule.batch_size = cfg.get_u64("batch_size");
  schedule.shuffle_seed = shuffle_rng.next();
  schedule.clip_norm = cfg.get_double("clip_norm");
  schedule.checkpoint_every = cfg.get_u64("checkpoint_every");
  schedule.dev_every = have_dev ? cfg.get_u64("dev_every") : 0;
  schedule.validate();

  const OptimizerKind opt_kind = optimizer_kind_from_string(cfg.require("optimizer"));
  double lr = cfg.has("lr") ? cfg.get_double("lr")
                            : (opt_kind == OptimizerKind::kAdam ? 1e-3 : 1.0);
  auto optimizer = make_optimizer(opt_kind, lr);

  fs::create_directories(out_dir);
  cfg.write_echo(out_dir);
  src_vocab.save((out_dir / "vocab.src.txt").string());
  tgt_vocab.save((out_dir / "vocab.tgt.txt").string());

  std::ofstream log(out_dir / "train.log", std::ios::binary);
  if (!log) throw DataError("cannot write training log under " + out_dir.string());
  const std::size_t beam_width = cfg.get_u64("beam_width");
  auto on_epoch = [&](const EpochRecord& record) {
    log << record.log_line() << "\n";
    log.flush();
    std::cout << record.log_line() << std::endl;
    if (schedule.checkpoint_every > 0 && record.epoch % schedule.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%03zu.bin", record.epoch);
      model.save_checkpoint((out_dir / name).string());
    }
  };
  train(model, encoded, have_dev ? &dev : nullptr, have_dev ? &tgt_vocab : nullptr, schedule,
        *optimizer, dropout_rng, beam_width, on_epoch);
  model.save_checkpoint((out_dir / "checkpoint.bin").string());
  std::cout << "checkpoint written to " << (out_dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_translate(const RunConfig& cfg) {
  const fs::path ckpt_path = cfg.require("checkpoint");
  Seq2SeqModel model = Seq2SeqModel::load_checkpoint(ckpt_path.string());

  const fs::path default_dir = ckpt_path.parent_path();
  const std::string src_vocab_path =
      cfg.has("src_vocab") ? cfg.get("src_vocab") : (default_dir / "vocab.src.txt").string();
  const std::string tgt_vocab_path =
      cfg.has("tgt_vocab") ? cfg.get("tgt_vocab") : (default_dir / "vocab.tgt.txt").string();
  Vocabulary src_vocab = Vocabulary::load(src_vocab_path);
  Vocabulary tgt_vocab = Vocabulary::load(tgt_vocab_path);
  if (src_vocab.size() != model.config().src_vocab_size ||
      tgt_vocab.size() != model.config().tgt_vocab_size) {
    throw CheckpointConfigError("translate: vocabulary sizes disagree with the checkpoint (" +
                                std::to_string(src_vocab.size()) + "/" +
                                std::to_string(tgt_vocab.size()) + " vs " +
                                std::to_string(model.config().src_vocab_size) + "/" +
                                std::to_string(model.config().tgt_vocab_size) + ")");
  }

  const std::size_t beam_width = cfg.get_u64("beam_width");
  const std::size_t max_len = cfg.get_u64("max_len");
  std::vector<std::string> inputs = read_lines(cfg.require("input"));
  std::vector<std::string> outputs;
  outputs.reserve(inputs.size());
  for (const std::string& line : inputs) {
    std::vector<int> tokens = encode_sentence(src_vocab, line);
    std::vector<int> translated = model.translate(tokens, beam_width, max_len);
    outputs.push_back(decode_tokens(tgt_vocab, translated));
  }
  const fs::path output_path = cfg.require("output");
  if (output_path.has_parent_path()) fs::create_directories(output_path.parent_path());
  write_lines(output_path.string(), outputs);
  const fs::path echo_dir = cfg.has("out_dir")
                                ? fs::path(cfg.get("out_dir"))
                                : (output_path.has_parent_path() ? output_path.parent_path()
                                                                 : fs::path("."));
  cfg.write_echo(echo_dir);
  std::cout << "translated " << outputs.size() << " lines to " << output_path.string() << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  BleuReport report = corpus_bleu_lines(read_lines(cfg.require("hyp")),
                                        read_lines(cfg.require("ref")), cfg.get_u64("max_order"),
                                        bleu_smoothing_from_string(cfg.require("smoothing")));
  const std::string format = cfg.require("format");
  if (format == "fields") {
    std::cout << report.fields();
  } else if (format == "table") {
    std::cout << report.table();
  } else {
    throw UsageError("evaluate: --format expects table or fields");
  }
  if (cfg.has("out_dir")) cfg.write_echo(cfg.get("out_dir"));
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const AttentionKind kind = attention_kind_from_string(cfg.require("attention_kind"));
  const std::uint64_t seed = cfg.get_u64("seed");
  Seq2SeqModel model = gradcheck_reference_model(kind, seed);
  const std::vector<EncodedPair> batch = gradcheck_reference_batch();
  const double tolerance = cfg.has("tolerance")
                               ? cfg.get_double("tolerance")
                               : (kind == AttentionKind::kSoft ? 1e-5 : 1e-4);
  SplitMix64 pick_rng = SplitMix64(seed).derive(4);
  GradCheckReport report =
      gradcheck(model, batch, cfg.get_u64("samples"), cfg.get_double("step"), pick_rng);
  const bool ok = report.passed(tolerance);
  std::cout << "gradcheck attention_kind=" << to_string(kind) << " " << report.summary()
            << " tolerance=" << tolerance << " => " << (ok ? "PASS" : "FAIL") << "\n";
  if (cfg.has("out_dir")) cfg.write_echo(cfg.get("out_dir"));
  return ok ? 0 : 5;
}

int cmd_analyze_freq(const RunConfig& cfg) {
  FrequencyDeviationReport report = frequency_deviation(
      read_lines(cfg.require("train_tgt")), read_lines(cfg.require("ref")),
      read_lines(cfg.require("hyp")), parse_bands(cfg.require("bands")));
  const std::string format = cfg.require("format");
  if (format == "fields") {
    std::cout << report.fields();
  } else if (format == "table") {
    std::cout << report.table();
  } else {
    throw UsageError("analyze_freq: --format expects table or fields");
  }
  if (cfg.has("out_dir")) cfg.write_echo(cfg.get("out_dir"));
  return 0;
}

int dispatch(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 2;
  }
  const std::string command = argv[1];
  std::vector<std::string> args(argv + 2, argv + argc);

  if (command == "synth") {
    RunConfig cfg(command,
                  {{"kind", ""},
                   {"vocab_size", "20"},
                   {"min_len", "3"},
                   {"max_len", "8"},
                   {"pairs", "2000"},
                   {"test_pairs", "0"},
                   {"seed", "1"},
                   {"out_dir", ""}},
                  args);
    return cmd_synth(cfg);
  }
  if (command == "train") {
    RunConfig cfg(command,
                  {{"train_src", ""},    {"train_tgt", ""},
                   {"dev_src", ""},      {"dev_tgt", ""},
                   {"out_dir", ""},      {"attention_kind", "sa"},
                   {"embed_dim", "256"}, {"model_dim", "256"},
                   {"encoder_layers", "2"}, {"decoder_layers", "2"},
                   {"attention_inner_dim", "256"}, {"dropout", "0.2"},
                   {"max_decode_len", "50"}, {"vocab_max_size", "50000"},
                   {"vocab_min_count", "1"}, {"epochs", "12"},
                   {"batch_size", "32"}, {"optimizer", "adam"},
                   {"lr", ""},           {"clip_norm", "5.0"},
                   {"checkpoint_every", "0"}, {"dev_every", "0"},
                   {"beam_width", "10"}, {"seed", "1"}},
                  args);
    return cmd_train(cfg);
  }
  if (command == "translate") {
    RunConfig cfg(command,
                  {{"checkpoint", ""},
                   {"input", ""},
                   {"output", ""},
                   {"src_vocab", ""},
                   {"tgt_vocab", ""},
                   {"beam_width", "10"},
                   {"max_len", "50"},
                   {"out_dir", ""},
                   {"seed", "1"}},
                  args);
    return cmd_translate(cfg);
  }
  if (command == "evaluate") {
    RunConfig cfg(command,
                  {{"hyp", ""}, {"ref", ""}, {"max_order", "4"}, {"smoothing", "off"},
                   {"format", "table"}, {"out_dir", ""}},
                  args);
    return cmd_evaluate(cfg);
  }
  if (command == "gradcheck") {
    RunConfig cfg(command,
                  {{"attention_kind", "sa"},
                   {"seed", "1"},
                   {"samples", "25"},
                   {"tolerance", ""},
                   {"step", "1e-5"},
                   {"out_dir", ""}},
                  args);
    return cmd_gradcheck(cfg);
  }
  if (command == "analyze_freq") {
    RunConfig cfg(command,
                  {{"train_tgt", ""}, {"ref", ""}, {"hyp", ""}, {"bands", "0:30"},
                   {"format", "table"}, {"out_dir", ""}},
                  args);
    return cmd_analyze_freq(cfg);
  }
  std::cerr << "unknown command '" << command << "'\n" << kUsage;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const EmptyInputError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
