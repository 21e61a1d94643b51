#pragma once

#include "posrep/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace posrep {

// Returns one row of next-token log-probabilities per prefix.
using StepFunction = std::function<Matrix<double>(std::span<const std::vector<int>> prefixes)>;

// Argmax per step, ties to the lowest token id. Stops after EOS (not
// included in the output) or after max_len steps.
std::vector<int> greedy_search(const StepFunction& step, int max_len, int eos_id);

// Beam search over cumulative log-probabilities without length normalization.
// Each step keeps the best `width` expansions; expansions ending in EOS leave
// the beam and compete with the rest by total score. Ties are broken toward
// the lexicographically smallest token sequence.
std::vector<int> beam_search(const StepFunction& step, int width, int max_len, int eos_id);

}  // namespace posrep
