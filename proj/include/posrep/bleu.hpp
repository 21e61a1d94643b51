#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace posrep {

using TokenSeq = std::vector<int>;

struct NgramCounts {
  std::int64_t matches = 0;  // clipped by reference counts
  std::int64_t total = 0;    // candidate n-grams
};

// Corpus-level modified precision for n-grams of order n.
NgramCounts modified_precision(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references, int n);

// min(1, exp(1 - ref_len / cand_len)); 0 when the candidate corpus is empty.
double brevity_penalty(std::int64_t candidate_length, std::int64_t reference_length);

enum class BleuSmoothing { none, exp };

// Corpus BLEU on token ids, in [0, 100]: geometric mean of the modified
// 1..4-gram precisions times the brevity penalty. Orders with no candidate
// n-grams at all are left out of the mean, so corpus_bleu(c, c) == 100.
// Without smoothing any zero precision gives 0; `exp` smoothing replaces the
// k-th zero-match order by 1 / (2^k * total).
double corpus_bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
                   BleuSmoothing smoothing = BleuSmoothing::none);

}  // namespace posrep
