#include "posrep/position.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace posrep {

template <typename Scalar>
SinusoidalTable<Scalar>::SinusoidalTable(Index max_position, Index dim) {
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal table dimension must be even and positive, got " +
                                std::to_string(dim));
  }
  if (max_position < 1) throw std::invalid_argument("sinusoidal table needs max_position >= 1");
  values_.resize(max_position, dim);
  for (Index m = 0; m < dim; m += 2) {
    const double inv_freq = std::pow(10000.0, -static_cast<double>(m) / static_cast<double>(dim));
    for (Index i = 0; i < max_position; ++i) {
      const double angle = static_cast<double>(i) * inv_freq;
      values_(i, m) = static_cast<Scalar>(std::sin(angle));
      values_(i, m + 1) = static_cast<Scalar>(std::cos(angle));
    }
  }
}

template <typename Scalar>
Matrix<Scalar> SinusoidalTable<Scalar>::rows(Index first, Index count) const {
  if (first < 0 || count < 0 || first + count > max_position()) {
    throw std::out_of_range("position table overflow: rows [" + std::to_string(first) + ", " +
                            std::to_string(first + count) + ") requested from a table of " +
                            std::to_string(max_position()));
  }
  return values_.middleRows(first, count);
}

template <typename Scalar>
Tensor<Scalar> add_positions(const Tensor<Scalar>& embeddings, const SinusoidalTable<Scalar>& table,
                             Index k) {
  if (embeddings.rank() != 2 || embeddings.cols() != table.dim()) {
    throw ShapeError("add_positions: embeddings must be [L x " + std::to_string(table.dim()) + "]");
  }
  Matrix<Scalar> out = embeddings.matrix() + table.rows(k, embeddings.rows());
  return Tensor<Scalar>(embeddings.shape(), std::move(out));
}

int sample_offset(Rng& rng, const ShapeConfig& cfg) {
  if (cfg.mode == ShapeMode::inference || cfg.max_shift <= 0) return 0;
  return static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(cfg.max_shift)));
}

namespace {

int parse_int_field(std::string_view text, std::string_view prefix, std::string_view whole) {
  if (text.substr(0, prefix.size()) != prefix) {
    throw std::invalid_argument("bad position scheme '" + std::string(whole) + "'");
  }
  const auto digits = text.substr(prefix.size());
  int value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty() || value < 0) {
    throw std::invalid_argument("bad integer in position scheme '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

PositionScheme PositionScheme::parse(std::string_view text) {
  if (text == "ape") return ape();
  if (text.starts_with("shape:")) return shape(parse_int_field(text.substr(6), "K=", text));
  if (text.starts_with("rpe:")) {
    const int limit = parse_int_field(text.substr(4), "limit=", text);
    if (limit < 1) throw std::invalid_argument("rpe limit must be >= 1");
    return rpe(limit);
  }
  throw std::invalid_argument("unknown position scheme '" + std::string(text) +
                              "' (expected ape, shape:K=<int>, rpe:limit=<int>)");
}

std::string PositionScheme::to_string() const {
  switch (kind) {
    case SchemeKind::ape:
      return "ape";
    case SchemeKind::shape:
      return max_shift == 0 ? "ape" : "shape:K=" + std::to_string(max_shift);
    case SchemeKind::rpe:
      return "rpe:limit=" + std::to_string(rpe_limit);
  }
  return "ape";
}

template class SinusoidalTable<float>;
template class SinusoidalTable<double>;
template Tensor<float> add_positions(const Tensor<float>&, const SinusoidalTable<float>&, Index);
template Tensor<double> add_positions(const Tensor<double>&, const SinusoidalTable<double>&, Index);

}  // namespace posrep
