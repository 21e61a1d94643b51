#pragma once

#include "posrep/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace posrep {

// Noam schedule: factor * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double noam_lr(std::int64_t step, int d_model, int warmup, double factor);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
  AdamConfig config;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  std::int64_t step = 0;

  static OptimizerState for_parameters(const ParameterList<Scalar>& params, AdamConfig config = {});
};

// One bias-corrected Adam update from the gradients stored on each parameter.
// No gradient clipping. Throws NumericalError if any gradient is not finite.
template <typename Scalar>
void adam_step(OptimizerState<Scalar>& state, ParameterList<Scalar>& params, double lr);

template <typename Scalar>
void zero_grads(ParameterList<Scalar>& params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index coordinates_checked = 0;
  struct PerParameter {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    double max_abs_numeric = 0.0;
  };
  std::vector<PerParameter> per_parameter;
};

struct GradCheckOptions {
  double step = 1e-3;
  Index coords_per_tensor = 100;
  std::uint64_t seed = 7;
  // Denominator floor of the relative error, so that coordinates whose true
  // gradient is zero are judged by their absolute error.
  double floor = 1e-8;
};

// Central-difference check in double precision. `loss` must evaluate the
// objective for the current parameter values; when `accumulate_grads` is set
// it must also backpropagate into the parameters' grad buffers.
GradCheckResult finite_diff_check(ParameterList<double>& params,
                                  const std::function<double(bool accumulate_grads)>& loss,
                                  const GradCheckOptions& options = {});

}  // namespace posrep
