#include "posrep/analysis.hpp"

#include "posrep/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace posrep {

namespace {

double row_cosine(const Matrix<float>& a, const Matrix<float>& b, Index row) {
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (Index c = 0; c < a.cols(); ++c) {
    const double x = a(row, c);
    const double y = b(row, c);
    dot += x * y;
    xx += x * x;
    yy += y * y;
  }
  // sqrt(xx * xx) == xx exactly, so identical rows give exactly 1
  const double denom = std::sqrt(xx * yy);
  if (denom == 0.0) return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

}  // namespace

SimilarityMatrix offset_similarity(const Transformer<float>& model, std::span<const int> x,
                                   std::span<const int> offsets) {
  const auto& cfg = model.config();
  if (!cfg.scheme.absolute()) {
    throw std::invalid_argument("offset similarity needs absolute positions; the relative scheme has no offsets");
  }
  if (x.empty()) throw std::invalid_argument("offset similarity: empty input");
  std::vector<Matrix<float>> states;
  states.reserve(offsets.size());
  for (const int k : offsets) {
    if (k < 0) throw std::invalid_argument("offset similarity: negative offset");
    if (k + static_cast<int>(x.size()) > cfg.max_position) {
      throw std::out_of_range("offset " + std::to_string(k) + " with length " + std::to_string(x.size()) +
                              " exceeds max_position " + std::to_string(cfg.max_position));
    }
    states.push_back(model.encode_ids(x, k));
  }
  const Index n = static_cast<Index>(offsets.size());
  SimilarityMatrix m{{offsets.begin(), offsets.end()}, Matrix<double>::Zero(n, n)};
  for (Index a = 0; a < n; ++a) {
    for (Index b = a; b < n; ++b) {
      double total = 0.0;
      for (Index i = 0; i < static_cast<Index>(x.size()); ++i) total += row_cosine(states[a], states[b], i);
      const double v = total / static_cast<double>(x.size());
      m.values(a, b) = v;
      m.values(b, a) = v;
    }
  }
  return m;
}

SimilarityMatrix offset_similarity(const Transformer<float>& model, std::span<const std::vector<int>> xs,
                                   std::span<const int> offsets) {
  if (xs.empty()) throw std::invalid_argument("offset similarity: no sequences");
  SimilarityMatrix acc = offset_similarity(model, xs[0], offsets);
  for (std::size_t s = 1; s < xs.size(); ++s) acc.values += offset_similarity(model, xs[s], offsets).values;
  acc.values /= static_cast<double>(xs.size());
  return acc;
}

double mean_off_diagonal(const SimilarityMatrix& m) {
  const Index n = m.values.rows();
  if (n < 2) return 1.0;
  double total = 0.0;
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a != b) total += m.values(a, b);
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

std::vector<int> extract_segment(std::span<const int> output, std::size_t expected, bool last, double fraction,
                                 int sep_id, bool& fallback) {
  const auto parts = split_on(output, sep_id);
  if (parts.size() == expected) {
    fallback = false;
    return last ? parts.back() : parts.front();
  }
  fallback = true;
  std::vector<int> content;
  for (const int t : output) {
    if (t != sep_id) content.push_back(t);
  }
  const auto n = static_cast<std::size_t>(std::lround(static_cast<double>(content.size()) * fraction));
  const std::size_t take = std::min(n, content.size());
  if (last) return {content.end() - static_cast<std::ptrdiff_t>(take), content.end()};
  return {content.begin(), content.begin() + static_cast<std::ptrdiff_t>(take)};
}

SwappedResult swapped_order_eval(const Transformer<float>& model, const Corpus& concat_corpus,
                                 const DecodeOptions& opts, int jobs) {
  const int sep = model.config().sep_id;
  Corpus swapped;
  swapped.reserve(concat_corpus.size());
  for (const auto& p : concat_corpus) {
    if (p.src_boundaries.empty() || p.tgt_boundaries.empty()) {
      throw std::invalid_argument("swapped-order probe needs concatenated pairs (no separator found)");
    }
    swapped.push_back(swap_first_to_end(p, sep));
  }
  const auto out_original = decode_all(model, concat_corpus, opts, jobs);
  const auto out_swapped = decode_all(model, swapped, opts, jobs);

  SwappedResult r;
  r.pairs = static_cast<std::int64_t>(concat_corpus.size());
  std::vector<TokenSeq> hyp_o, hyp_s, refs;
  for (std::size_t i = 0; i < concat_corpus.size(); ++i) {
    const auto& p = concat_corpus[i];
    const auto sentences = split_on(p.tgt, sep);
    const std::size_t content = p.tgt.size() - p.tgt_boundaries.size();
    const double fraction =
        content == 0 ? 0.0 : static_cast<double>(sentences.front().size()) / static_cast<double>(content);
    bool fb = false;
    hyp_o.push_back(extract_segment(out_original[i], sentences.size(), false, fraction, sep, fb));
    r.fallback_original += fb;
    hyp_s.push_back(extract_segment(out_swapped[i], sentences.size(), true, fraction, sep, fb));
    r.fallback_swapped += fb;
    refs.push_back(sentences.front());
  }
  r.bleu_original = corpus_bleu(hyp_o, refs);
  r.bleu_swapped = corpus_bleu(hyp_s, refs);
  r.drop = r.bleu_original - r.bleu_swapped;
  return r;
}

std::vector<std::vector<double>> tokenwise_scores(const Transformer<float>& model, const Corpus& corpus) {
  std::vector<std::vector<double>> scores;
  scores.reserve(corpus.size());
  for (const auto& p : corpus) {
    const Matrix<double> logp = log_softmax_rows(Matrix<double>(model.forward_teacher_forced(p.src, p.tgt, 0, 0).template cast<double>()));
    std::vector<double> s(p.tgt.size());
    for (std::size_t j = 0; j < p.tgt.size(); ++j) s[j] = logp(static_cast<Index>(j), p.tgt[j]);
    scores.push_back(std::move(s));
  }
  return scores;
}

WinRatioCell WinRatioGrid::total() const {
  WinRatioCell t;
  for (const auto& row : cells) {
    for (const auto& c : row) {
      t.count += c.count;
      t.wins += c.wins;
    }
  }
  return t;
}

std::vector<WinRatioCell> WinRatioGrid::by_frequency() const {
  std::vector<WinRatioCell> out(freq_lo.size());
  for (const auto& row : cells) {
    for (std::size_t f = 0; f < row.size(); ++f) {
      out[f].count += row[f].count;
      out[f].wins += row[f].wins;
    }
  }
  return out;
}

WinRatioGrid win_ratio_grid(const std::vector<std::vector<double>>& scores_a,
                            const std::vector<std::vector<double>>& scores_b, const Corpus& corpus,
                            std::span<const std::int64_t> train_counts, int pos_bucket_width,
                            std::span<const std::int64_t> freq_edges) {
  if (scores_a.size() != corpus.size() || scores_b.size() != corpus.size()) {
    throw std::invalid_argument("win ratio: score sets and corpus differ in size");
  }
  if (freq_edges.empty() || !std::is_sorted(freq_edges.begin(), freq_edges.end()) ||
      std::adjacent_find(freq_edges.begin(), freq_edges.end()) != freq_edges.end()) {
    throw std::invalid_argument("win ratio: frequency edges must be strictly increasing");
  }
  if (pos_bucket_width < 1) throw std::invalid_argument("win ratio: bucket width must be >= 1");

  std::size_t max_len = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (scores_a[i].size() != corpus[i].tgt.size() || scores_b[i].size() != corpus[i].tgt.size()) {
      throw std::invalid_argument("win ratio: scores misaligned with corpus at pair " + std::to_string(i));
    }
    max_len = std::max(max_len, corpus[i].tgt.size());
  }

  WinRatioGrid grid;
  grid.pos_bucket_width = pos_bucket_width;
  grid.freq_lo.assign(freq_edges.begin(), freq_edges.end());
  const std::size_t rows = max_len == 0 ? 0 : (max_len - 1) / pos_bucket_width + 1;
  for (std::size_t r = 0; r < rows; ++r) grid.pos_lo.push_back(static_cast<int>(r) * pos_bucket_width + 1);
  grid.cells.assign(rows, std::vector<WinRatioCell>(freq_edges.size()));

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& y = corpus[i].tgt;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const std::int64_t freq =
          y[j] >= 0 && static_cast<std::size_t>(y[j]) < train_counts.size() ? train_counts[y[j]] : 0;
      const auto it = std::upper_bound(freq_edges.begin(), freq_edges.end(), freq);
      if (it == freq_edges.begin()) {
        ++grid.unbucketed;
        continue;
      }
      auto& cell = grid.cells[j / pos_bucket_width][static_cast<std::size_t>(it - freq_edges.begin() - 1)];
      ++cell.count;
      const double a = scores_a[i][j];
      const double b = scores_b[i][j];
      cell.wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
  }
  return grid;
}

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& m) {
  out << "k1,k2,mean_cos\n";
  out.precision(8);
  for (std::size_t a = 0; a < m.offsets.size(); ++a) {
    for (std::size_t b = 0; b < m.offsets.size(); ++b) {
      out << m.offsets[a] << ',' << m.offsets[b] << ',' << m.values(static_cast<Index>(a), static_cast<Index>(b))
          << '\n';
    }
  }
}

void write_swapped_csv(std::ostream& out, const SwappedResult& r) {
  out << "# pairs=" << r.pairs << " fallback_original=" << r.fallback_original
      << " fallback_swapped=" << r.fallback_swapped << '\n';
  out << "bleu_original,bleu_swapped,drop\n";
  out.precision(8);
  out << r.bleu_original << ',' << r.bleu_swapped << ',' << r.drop << '\n';
}

void write_win_ratio_csv(std::ostream& out, const WinRatioGrid& grid) {
  out << "pos_lo,pos_hi,freq_lo,freq_hi,count,ratio\n";
  out.precision(8);
  for (std::size_t r = 0; r < grid.cells.size(); ++r) {
    for (std::size_t f = 0; f < grid.freq_lo.size(); ++f) {
      const auto& c = grid.cells[r][f];
      out << grid.pos_lo[r] << ',' << grid.pos_lo[r] + grid.pos_bucket_width - 1 << ',' << grid.freq_lo[f] << ',';
      if (f + 1 < grid.freq_lo.size()) {
        out << grid.freq_lo[f + 1] - 1;
      } else {
        out << "inf";
      }
      out << ',' << c.count << ',';
      if (const auto v = c.ratio()) {
        out << *v;
      } else {
        out << "NA";
      }
      out << '\n';
    }
  }
}

Matrix<double> win_ratio_matrix(const WinRatioGrid& grid) {
  const Index rows = static_cast<Index>(grid.cells.size());
  const Index cols = static_cast<Index>(grid.freq_lo.size());
  Matrix<double> m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index f = 0; f < cols; ++f) {
      m(r, f) = grid.cells[r][f].ratio().value_or(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return m;
}

void write_pgm(std::ostream& out, const Matrix<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isnan(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo > hi) lo = hi = 0.0;
  out << "P2\n";
  out.precision(8);
  out << "# min=" << lo << " max=" << hi << '\n';
  out << values.cols() << ' ' << values.rows() << "\n255\n";
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      int g = 0;
      if (!std::isnan(v)) g = hi > lo ? static_cast<int>(std::lround((v - lo) / (hi - lo) * 255.0)) : 255;
      out << (c ? " " : "") << g;
    }
    out << '\n';
  }
}

}  // namespace posrep
