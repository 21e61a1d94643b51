#pragma once

#include "posrep/evaluate.hpp"
#include "posrep/model.hpp"
#include "posrep/tasks.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace posrep {

struct SimilarityMatrix {
  std::vector<int> offsets;
  Matrix<double> values;
};

// Mean over the |x| token positions of cos(h_i^{k1}, h_i^{k2}), where h^k are
// encoder states computed with all positions shifted by k. Throws
// std::invalid_argument for the relative scheme.
SimilarityMatrix offset_similarity(const Transformer<float>& model, std::span<const int> x,
                                   std::span<const int> offsets);
// Elementwise mean of the per-sequence matrices.
SimilarityMatrix offset_similarity(const Transformer<float>& model, std::span<const std::vector<int>> xs,
                                   std::span<const int> offsets);

double mean_off_diagonal(const SimilarityMatrix& m);

struct SwappedResult {
  double bleu_original = 0.0;
  double bleu_swapped = 0.0;
  double drop = 0.0;
  std::int64_t pairs = 0;
  // Outputs whose sep structure did not match the source and were cut proportionally.
  std::int64_t fallback_original = 0;
  std::int64_t fallback_swapped = 0;
};

// Segment of `output` aligned with sentence `which` (0 = first, -1 = last) of
// a target with `expected` sentences. When the output does not split into
// exactly that many sentences, a proportional cut of length
// round(|output| * fraction) is taken from the matching end instead.
std::vector<int> extract_segment(std::span<const int> output, std::size_t expected, bool last, double fraction,
                                 int sep_id, bool& fallback);

// Throws std::invalid_argument when a pair has a single sentence.
SwappedResult swapped_order_eval(const Transformer<float>& model, const Corpus& concat_corpus,
                                 const DecodeOptions& opts, int jobs = 1);

// log p(y_j | x, y_<j) for every target token (EOS excluded), offsets 0.
std::vector<std::vector<double>> tokenwise_scores(const Transformer<float>& model, const Corpus& corpus);

struct WinRatioCell {
  std::int64_t count = 0;
  double wins = 0.0;  // ties count half
  std::optional<double> ratio() const {
    if (count == 0) return std::nullopt;
    return wins / static_cast<double>(count);
  }
};

struct WinRatioGrid {
  int pos_bucket_width = 5;
  std::vector<int> pos_lo;             // row lower edges (1-based positions)
  std::vector<std::int64_t> freq_lo;  // column lower edges; last column unbounded
  std::vector<std::vector<WinRatioCell>> cells;  // [pos][freq]
  // Tokens whose training count is below freq_lo[0].
  std::int64_t unbucketed = 0;

  WinRatioCell total() const;
  // Pooled over positions, per frequency column.
  std::vector<WinRatioCell> by_frequency() const;
};

inline const std::vector<std::int64_t>& default_frequency_edges() {
  static const std::vector<std::int64_t> edges{1, 3, 9, 33, 129, 513, 2049, 8193};
  return edges;
}

// `train_counts[id]` are training-corpus occurrences of target token ids.
WinRatioGrid win_ratio_grid(const std::vector<std::vector<double>>& scores_a,
                            const std::vector<std::vector<double>>& scores_b, const Corpus& corpus,
                            std::span<const std::int64_t> train_counts, int pos_bucket_width = 5,
                            std::span<const std::int64_t> freq_edges = default_frequency_edges());

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& m);
void write_swapped_csv(std::ostream& out, const SwappedResult& r);
void write_win_ratio_csv(std::ostream& out, const WinRatioGrid& grid);

// Plain PGM (P2). Values are scaled linearly from [min, max] to 0..255; NaN
// entries are written as 0. The comment line records min and max.
void write_pgm(std::ostream& out, const Matrix<double>& values);
Matrix<double> win_ratio_matrix(const WinRatioGrid& grid);

}  // namespace posrep
