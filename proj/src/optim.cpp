#include "posrep/optim.hpp"

#include "posrep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace posrep {

double noam_lr(std::int64_t step, int d_model, int warmup, double factor) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (d_model < 1 || warmup < 1) throw std::invalid_argument("noam_lr: d_model and warmup must be positive");
  const double s = static_cast<double>(step);
  return factor * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

template <typename Scalar>
OptimizerState<Scalar> OptimizerState<Scalar>::for_parameters(const ParameterList<Scalar>& params,
                                                              AdamConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
    state.second_moment.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
  }
  return state;
}

template <typename Scalar>
void adam_step(OptimizerState<Scalar>& state, ParameterList<Scalar>& params, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameter list");
  }
  for (const auto& p : params) {
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
      throw NumericalError("adam_step: non-finite gradient in " + p.name);
    }
  }
  ++state.step;
  const double b1 = state.config.beta1;
  const double b2 = state.config.beta2;
  const double t = static_cast<double>(state.step);
  const Scalar c1 = Scalar(1.0 / (1.0 - std::pow(b1, t)));
  const Scalar c2 = Scalar(1.0 / (1.0 - std::pow(b2, t)));
  const Scalar eps = Scalar(state.config.epsilon);
  const Scalar step_lr = Scalar(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (!p.has_grad()) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.rows() != p.rows() || m.cols() != p.cols()) {
      throw ShapeError("adam_step: moment shape mismatch for " + params[i].name);
    }
    const auto& g = p.grad();
    m = Scalar(b1) * m + Scalar(1.0 - b1) * g;
    v = Scalar(b2) * v + Scalar(1.0 - b2) * g.cwiseAbs2();
    p.matrix().array() -= step_lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  }
}

template <typename Scalar>
void zero_grads(ParameterList<Scalar>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

GradCheckResult finite_diff_check(ParameterList<double>& params,
                                  const std::function<double(bool)>& loss,
                                  const GradCheckOptions& options) {
  zero_grads(params);
  loss(true);
  std::vector<Matrix<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.tensor.grad());

  Rng sampler = Rng::for_purpose(options.seed, "gradcheck");
  GradCheckResult result;
  const double h = options.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& tensor = params[t].tensor;
    const Index n = tensor.size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (n > options.coords_per_tensor) {
      // Partial Fisher-Yates: the first coords_per_tensor entries are a uniform sample.
      for (Index i = 0; i < options.coords_per_tensor; ++i) {
        const auto j = i + static_cast<Index>(sampler.uniform_int(static_cast<std::uint32_t>(n - 1 - i)));
        std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
      }
      coords.resize(static_cast<std::size_t>(options.coords_per_tensor));
    }
    double* data = tensor.data();
    auto& stats = result.per_parameter.emplace_back();
    stats.name = params[t].name;
    for (const Index c : coords) {
      const double saved = data[c];
      data[c] = saved + h;
      const double plus = loss(false);
      data[c] = saved - h;
      const double minus = loss(false);
      data[c] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[t].data()[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      stats.max_rel_error = std::max(stats.max_rel_error, rel);
      stats.max_abs_error = std::max(stats.max_abs_error, std::abs(a - numeric));
      stats.max_abs_numeric = std::max(stats.max_abs_numeric, std::abs(numeric));
      if (rel > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        if (rel >= result.max_rel_error) {
          result.worst_parameter = params[t].name;
          result.worst_index = c;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adam_step(OptimizerState<float>&, ParameterList<float>&, double);
template void adam_step(OptimizerState<double>&, ParameterList<double>&, double);
template void zero_grads(ParameterList<float>&);
template void zero_grads(ParameterList<double>&);

}  // namespace posrep
