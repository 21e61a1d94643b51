#pragma once

#include "posrep/model.hpp"
#include "posrep/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace posrep {

enum class TaskKind { copy, reverse, mapped_copy };

TaskKind parse_task_kind(std::string_view text);
std::string to_string(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::mapped_copy;
  int vocab_size = 64;
  int min_length = 5;
  int max_length = 20;
  double zipf_exponent = 1.2;
  std::uint64_t seed = 1;

  int content_vocab() const { return vocab_size - SpecialTokens::first_content; }
  void validate() const;
  Metadata to_metadata() const;
};

struct SequencePair {
  std::vector<int> src;
  std::vector<int> tgt;
  // Indices of the separator tokens in src / tgt (empty for single sentences).
  std::vector<int> src_boundaries;
  std::vector<int> tgt_boundaries;

  std::size_t sentences() const { return src_boundaries.size() + 1; }
  friend bool operator==(const SequencePair&, const SequencePair&) = default;
};

using Corpus = std::vector<SequencePair>;

// Target for `x` under a task. `permutation` maps content ids to content ids
// and is only read for mapped-copy.
std::vector<int> apply_task(TaskKind kind, std::span<const int> x, std::span<const int> permutation);

// Seed-derived bijection on content ids, indexed by id (special ids map to themselves).
std::vector<int> content_permutation(const TaskSpec& spec);

// Draws content tokens with P(rank r) proportional to r^-s, rank r <-> id first_content + r - 1.
class ZipfSampler {
 public:
  ZipfSampler(int content_vocab, double exponent);
  int sample(Rng& rng) const;
  double probability(int id) const;

 private:
  std::vector<double> cdf_;
};

class TaskGenerator {
 public:
  explicit TaskGenerator(TaskSpec spec);
  SequencePair next(Rng& rng) const;
  const TaskSpec& spec() const { return spec_; }
  const std::vector<int>& permutation() const { return permutation_; }

 private:
  TaskSpec spec_;
  ZipfSampler sampler_;
  std::vector<int> permutation_;
};

SequencePair gen_pair(const TaskSpec& spec, Rng& rng);
Corpus gen_corpus(const TaskSpec& spec, std::size_t count, Rng& rng);

struct Splits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// The last n_valid + n_test pairs become valid and test (unfiltered); the
// rest is training data without pairs whose source or target exceeds l_train.
Splits make_extrapolate_split(const Corpus& corpus, int l_train, std::size_t n_valid, std::size_t n_test);

// Merges consecutive groups of n_concat pairs, joining sentences with sep_id.
// A trailing group shorter than n_concat is dropped.
Corpus make_interpolate_dataset(const Corpus& corpus, int n_concat, int sep_id = SpecialTokens::sep);

// Moves the first sentence of both sides after the last one.
SequencePair swap_first_to_end(const SequencePair& pair, int sep_id = SpecialTokens::sep);

std::vector<std::vector<int>> split_on(std::span<const int> seq, int sep_id);
std::vector<int> join_with(std::span<const std::vector<int>> parts, int sep_id);
std::vector<int> boundaries_of(std::span<const int> seq, int sep_id);

// Occurrences of each target-side token id in `corpus`.
std::vector<std::int64_t> target_token_counts(const Corpus& corpus, int vocab_size);

}  // namespace posrep
