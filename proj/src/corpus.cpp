#include "adms2s/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace adms2s {

namespace {

const char* kSpecialSurface[] = {"<pad>", "<s>", "</s>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (std::size_t i = 0; i < kSpecials; ++i) {
    tokens_.emplace_back(kSpecialSurface[i]);
    counts_.push_back(0);
    index_[tokens_.back()] = static_cast<int>(i);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, std::size_t max_size,
                             std::size_t min_count) {
  std::map<std::string, long long> counts;
  long long total = 0;
  for (const std::string& line : lines) {
    for (const std::string& tok : tokenize(line)) {
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw EmptyInputError("build_vocab: no tokens in input");

  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, cnt] : ranked) {
    const bool is_special = vocab.index_.count(tok) &&
                            vocab.index_.at(tok) < static_cast<int>(kSpecials);
    if (is_special) {
      vocab.counts_[static_cast<std::size_t>(vocab.index_.at(tok))] += cnt;
      continue;
    }
    if (vocab.tokens_.size() >= max_size || cnt < static_cast<long long>(min_count)) {
      vocab.counts_[kUnk] += cnt;
      continue;
    }
    vocab.index_[tok] = static_cast<int>(vocab.tokens_.size());
    vocab.tokens_.push_back(tok);
    vocab.counts_.push_back(cnt);
  }
  return vocab;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::surface(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
    throw IndexError("vocabulary index " + std::to_string(index) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(index)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path);
  for (const std::string& tok : tokens_) out << tok << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kSpecials) throw DataError("vocabulary file " + path + " is missing the specials header");
  for (std::size_t i = 0; i < kSpecials; ++i) {
    if (lines[i] != kSpecialSurface[i]) {
      throw DataError("vocabulary file " + path + " has a malformed specials header");
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kSpecials; i < lines.size(); ++i) {
    if (lines[i].empty()) throw DataError("vocabulary file " + path + " has an empty token line");
    if (vocab.index_.count(lines[i])) {
      throw DataError("vocabulary file " + path + " repeats token '" + lines[i] + "'");
    }
    vocab.index_[lines[i]] = static_cast<int>(vocab.tokens_.size());
    vocab.tokens_.push_back(lines[i]);
    vocab.counts_.push_back(0);
  }
  return vocab;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<int> encode_sentence(const Vocabulary& vocab, const std::string& line) {
  std::vector<int> out = {Vocabulary::kBos};
  for (const std::string& tok : tokenize(line)) out.push_back(vocab.lookup(tok));
  out.push_back(Vocabulary::kEos);
  return out;
}

std::string decode_tokens(const Vocabulary& vocab, const std::vector<int>& tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == Vocabulary::kPad || t == Vocabulary::kBos || t == Vocabulary::kEos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.surface(t);
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& line : lines) out << line << "\n";
}

ParallelCorpus load_parallel(const std::string& source_path, const std::string& target_path) {
  std::vector<std::string> src = read_lines(source_path);
  std::vector<std::string> tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw DataError("parallel corpus line counts differ: " + source_path + " has " +
                    std::to_string(src.size()) + ", " + target_path + " has " +
                    std::to_string(tgt.size()));
  }
  ParallelCorpus corpus;
  corpus.source_path = source_path;
  corpus.target_path = target_path;
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = tokenize(src[i]);
    auto t = tokenize(tgt[i]);
    if (s.empty() || t.empty()) continue;
    corpus.pairs.emplace_back(std::move(s), std::move(t));
  }
  return corpus;
}

void write_parallel(const ParallelCorpus& corpus, const std::string& source_path,
                    const std::string& target_path) {
  std::vector<std::string> src, tgt;
  src.reserve(corpus.pairs.size());
  tgt.reserve(corpus.pairs.size());
  for (const auto& [s, t] : corpus.pairs) {
    std::string line;
    for (const auto& tok : s) {
      if (!line.empty()) line += ' ';
      line += tok;
    }
    src.push_back(line);
    line.clear();
    for (const auto& tok : t) {
      if (!line.empty()) line += ' ';
      line += tok;
    }
    tgt.push_back(line);
  }
  write_lines(source_path, src);
  write_lines(target_path, tgt);
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "copy") return SyntheticKind::kCopy;
  if (name == "reverse") return SyntheticKind::kReverse;
  if (name == "lexicon") return SyntheticKind::kLexicon;
  throw ConfigError("unknown synthetic task '" + name + "' (expected copy, reverse or lexicon)");
}

std::vector<std::size_t> lexicon_bijection(std::size_t vocab_size, std::uint64_t seed) {
  std::vector<std::size_t> map(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) map[i] = i;
  SplitMix64 rng = SplitMix64(seed).derive(0x6C6578);  // lexicon stream
  shuffle(map, rng);
  return map;
}

ParallelCorpus make_synthetic_task(SyntheticKind kind, std::size_t vocab_size,
                                   std::size_t min_len, std::size_t max_len, std::size_t n_pairs,
                                   std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("synthetic task: vocab_size must be at least 2");
  if (n_pairs < 1) throw ConfigError("synthetic task: n_pairs must be at least 1");
  if (min_len < 1 || min_len > max_len) {
    throw ConfigError("synthetic task: need 1 <= min_len <= max_len");
  }
  std::vector<std::size_t> mapping;
  if (kind == SyntheticKind::kLexicon) mapping = lexicon_bijection(vocab_size, seed);

  SplitMix64 rng = SplitMix64(seed).derive(0x706169);  // pair stream
  ParallelCorpus corpus;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t len = min_len + static_cast<std::size_t>(rng.below(max_len - min_len + 1));
    std::vector<std::string> src(len), tgt(len);
    std::vector<std::size_t> ids(len);
    for (std::size_t i = 0; i < len; ++i) {
      ids[i] = static_cast<std::size_t>(rng.below(vocab_size));
      src[i] = "w" + std::to_string(ids[i]);
    }
    switch (kind) {
      case SyntheticKind::kCopy:
        tgt = src;
        break;
      case SyntheticKind::kReverse:
        tgt.assign(src.rbegin(), src.rend());
        break;
      case SyntheticKind::kLexicon:
        for (std::size_t i = 0; i < len; ++i) tgt[i] = "w" + std::to_string(mapping[ids[i]]);
        break;
    }
    corpus.pairs.emplace_back(std::move(src), std::move(tgt));
  }
  return corpus;
}

std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(corpus.pairs.size());
  for (const auto& [src, tgt] : corpus.pairs) {
    std::vector<int> s = {Vocabulary::kBos};
    for (const std::string& tok : src) s.push_back(src_vocab.lookup(tok));
    s.push_back(Vocabulary::kEos);
    std::vector<int> t = {Vocabulary::kBos};
    for (const std::string& tok : tgt) t.push_back(tgt_vocab.lookup(tok));
    t.push_back(Vocabulary::kEos);
    out.emplace_back(std::move(s), std::move(t));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&pairs](std::size_t a, std::size_t b) {
    return pairs[a].first.size() < pairs[b].first.size();
  });

  std::vector<Batch> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t end = std::min(at + batch_size, order.size());
    Batch batch;
    std::size_t max_src = 0, max_tgt = 0;
    for (std::size_t i = at; i < end; ++i) {
      max_src = std::max(max_src, pairs[order[i]].first.size());
      max_tgt = std::max(max_tgt, pairs[order[i]].second.size());
    }
    for (std::size_t i = at; i < end; ++i) {
      const auto& [src, tgt] = pairs[order[i]];
      std::vector<int> s = src, t = tgt;
      batch.source_len.push_back(s.size());
      batch.target_len.push_back(t.size());
      s.resize(max_src, Vocabulary::kPad);
      t.resize(max_tgt, Vocabulary::kPad);
      batch.source.push_back(std::move(s));
      batch.target.push_back(std::move(t));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace adms2s
