#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adms2s/errors.hpp"
#include "adms2s/rng.hpp"

namespace adms2s {

// Token <-> index map with reserved specials and build-time counts.
// Specials: pad=0, bos=1, eos=2, unk=3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kSpecials = 4;

  Vocabulary();

  // Tokens ranked by count (ties broken lexicographically), truncated to
  // max_size entries including the specials; tokens below min_count fold
  // into unk. Throws EmptyInputError when no line holds a token.
  static Vocabulary build(const std::vector<std::string>& lines, std::size_t max_size,
                          std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  int lookup(const std::string& token) const;  // kUnk when absent
  const std::string& surface(int index) const;
  long long count(int index) const { return counts_[static_cast<std::size_t>(index)]; }

  // One token per line in index order; the first four lines are the
  // specials.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  std::vector<long long> counts_;
};

std::vector<std::string> tokenize(const std::string& line);

// bos + token indices + eos; unknown tokens map to unk.
std::vector<int> encode_sentence(const Vocabulary& vocab, const std::string& line);
// Surfaces of the non-sentinel tokens, joined by single spaces.
std::string decode_tokens(const Vocabulary& vocab, const std::vector<int>& tokens);

struct ParallelCorpus {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
  std::string source_path;
  std::string target_path;
};

// Line-aligned parallel files; a pair with an empty side is dropped.
ParallelCorpus load_parallel(const std::string& source_path, const std::string& target_path);
void write_parallel(const ParallelCorpus& corpus, const std::string& source_path,
                    const std::string& target_path);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

enum class SyntheticKind { kCopy, kReverse, kLexicon };
SyntheticKind synthetic_kind_from_string(const std::string& name);

// Deterministic toy tasks over a synthetic token inventory w0..w{V-1}:
// copy (target = source), reverse, lexicon (fixed random bijection applied
// tokenwise).
ParallelCorpus make_synthetic_task(SyntheticKind kind, std::size_t vocab_size,
                                   std::size_t min_len, std::size_t max_len, std::size_t n_pairs,
                                   std::uint64_t seed);
// The bijection used by the lexicon task for the given seed and vocab size.
std::vector<std::size_t> lexicon_bijection(std::size_t vocab_size, std::uint64_t seed);

using EncodedPair = std::pair<std::vector<int>, std::vector<int>>;

std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab);

// One padded batch; lengths record the true (pre-pad) sequence lengths.
struct Batch {
  std::vector<std::vector<int>> source;
  std::vector<std::vector<int>> target;
  std::vector<std::size_t> source_len;
  std::vector<std::size_t> target_len;
  std::size_t size() const { return source.size(); }
};

// Buckets examples by source length, then cuts batches of at most
// batch_size; every example lands in exactly one batch.
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, std::size_t batch_size);

}  // namespace adms2s
