#include "posrep/decode.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace posrep {

std::vector<int> greedy_search(const StepFunction& step, int max_len, int eos_id) {
  std::vector<int> out;
  std::vector<std::vector<int>> prefix(1);
  for (int t = 0; t < max_len; ++t) {
    const Matrix<double> logp = step(prefix);
    Index best = 0;
    for (Index v = 1; v < logp.cols(); ++v) {
      if (logp(0, v) > logp(0, best)) best = v;
    }
    if (static_cast<int>(best) == eos_id) break;
    out.push_back(static_cast<int>(best));
    prefix[0] = out;
  }
  return out;
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;
  double score = 0.0;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<int> beam_search(const StepFunction& step, int width, int max_len, int eos_id) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  std::vector<Hypothesis> alive(1);
  std::vector<Hypothesis> finished;
  for (int t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(alive.size());
    for (const auto& h : alive) prefixes.push_back(h.tokens);
    const Matrix<double> logp = step(prefixes);

    std::vector<Hypothesis> candidates;
    candidates.reserve(alive.size() * static_cast<std::size_t>(logp.cols()));
    for (std::size_t a = 0; a < alive.size(); ++a) {
      for (Index v = 0; v < logp.cols(); ++v) {
        Hypothesis c{alive[a].tokens, alive[a].score + logp(static_cast<Index>(a), v)};
        c.tokens.push_back(static_cast<int>(v));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    candidates.resize(keep);

    alive.clear();
    for (auto& c : candidates) {
      if (c.tokens.back() == eos_id) {
        finished.push_back(std::move(c));
      } else {
        alive.push_back(std::move(c));
      }
    }
    // Log-probabilities are non-positive, so no alive hypothesis can overtake
    // a finished one that already scores better.
    if (!finished.empty() && !alive.empty()) {
      const auto best_finished = std::min_element(finished.begin(), finished.end(), better);
      if (best_finished->score > alive.front().score) break;
    }
  }
  std::vector<Hypothesis> pool = std::move(finished);
  pool.insert(pool.end(), alive.begin(), alive.end());
  if (pool.empty()) return {};
  auto best = *std::min_element(pool.begin(), pool.end(), better);
  if (!best.tokens.empty() && best.tokens.back() == eos_id) best.tokens.pop_back();
  return best.tokens;
}

}  // namespace posrep
