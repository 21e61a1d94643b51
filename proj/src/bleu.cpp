#include "posrep/bleu.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace posrep {

namespace {

std::map<std::vector<int>, std::int64_t> ngrams(const TokenSeq& seq, int n) {
  std::map<std::vector<int>, std::int64_t> out;
  const auto len = static_cast<std::ptrdiff_t>(seq.size());
  for (std::ptrdiff_t i = 0; i + n <= len; ++i) ++out[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
  return out;
}

void check_sizes(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references) {
  if (candidates.size() != references.size()) throw std::invalid_argument("bleu: corpus sizes differ");
  if (candidates.empty()) throw std::invalid_argument("bleu: empty corpus");
}

}  // namespace

NgramCounts modified_precision(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references, int n) {
  check_sizes(candidates, references);
  NgramCounts c;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = ngrams(candidates[i], n);
    const auto ref = ngrams(references[i], n);
    for (const auto& [gram, count] : cand) {
      c.total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) c.matches += std::min(count, it->second);
    }
  }
  return c;
}

double brevity_penalty(std::int64_t candidate_length, std::int64_t reference_length) {
  if (candidate_length <= 0) return 0.0;
  if (candidate_length >= reference_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_length) / static_cast<double>(candidate_length));
}

double corpus_bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
                   BleuSmoothing smoothing) {
  check_sizes(candidates, references);
  std::int64_t cand_len = 0;
  std::int64_t ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<std::int64_t>(candidates[i].size());
    ref_len += static_cast<std::int64_t>(references[i].size());
  }
  if (cand_len == 0) return ref_len == 0 ? 100.0 : 0.0;

  double log_sum = 0.0;
  int orders = 0;
  int zero_orders = 0;
  for (int n = 1; n <= 4; ++n) {
    const NgramCounts c = modified_precision(candidates, references, n);
    if (c.total == 0) continue;
    ++orders;
    if (c.matches == 0) {
      if (smoothing == BleuSmoothing::none) return 0.0;
      ++zero_orders;
      log_sum += std::log(1.0 / (std::pow(2.0, zero_orders) * static_cast<double>(c.total)));
    } else {
      log_sum += std::log(static_cast<double>(c.matches) / static_cast<double>(c.total));
    }
  }
  const double bp = brevity_penalty(cand_len, ref_len);
  return 100.0 * bp * std::exp(log_sum / orders);
}

}  // namespace posrep
