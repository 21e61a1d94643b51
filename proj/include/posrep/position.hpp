#pragma once

#include "posrep/rng.hpp"
#include "posrep/tensor.hpp"

#include <string>
#include <string_view>

namespace posrep {

// Sinusoidal position table. Channel m of position i is sin(i / 10000^(2j/D))
// for even m and cos(i / 10000^(2j/D)) for odd m, where j = floor(m / 2), so
// channels (2j, 2j + 1) are a sin/cos pair on one frequency.
template <typename Scalar>
class SinusoidalTable {
 public:
  SinusoidalTable() = default;
  SinusoidalTable(Index max_position, Index dim);

  Index max_position() const { return values_.rows(); }
  Index dim() const { return values_.cols(); }
  const Matrix<Scalar>& values() const { return values_; }
  Scalar operator()(Index position, Index channel) const { return values_(position, channel); }

  // Rows [first, first + count); throws if the range leaves the table.
  Matrix<Scalar> rows(Index first, Index count) const;

 private:
  Matrix<Scalar> values_;
};

template <typename Scalar>
SinusoidalTable<Scalar> build_table(Index max_position, Index dim) {
  return SinusoidalTable<Scalar>(max_position, dim);
}

// Output row i = embeddings[i] + table[i + k]. Reading past the table is an
// error, never a wraparound.
template <typename Scalar>
Tensor<Scalar> add_positions(const Tensor<Scalar>& embeddings, const SinusoidalTable<Scalar>& table,
                             Index k);

enum class ShapeMode { training, inference };

struct ShapeConfig {
  int max_shift = 0;
  ShapeMode mode = ShapeMode::training;
};

// k ~ U{0, K} in training mode, 0 in inference mode.
int sample_offset(Rng& rng, const ShapeConfig& cfg);

// clamp(delta, -r, r) + r, the row of a relative-embedding table.
constexpr int clip_distance(int delta, int r) {
  return (delta < -r ? -r : (delta > r ? r : delta)) + r;
}

enum class SchemeKind { ape, shape, rpe };

struct PositionScheme {
  SchemeKind kind = SchemeKind::ape;
  int max_shift = 0;   // shape only
  int rpe_limit = 16;  // rpe only

  static PositionScheme ape() { return {}; }
  static PositionScheme shape(int k) { return {SchemeKind::shape, k, 16}; }
  static PositionScheme rpe(int limit = 16) { return {SchemeKind::rpe, 0, limit}; }

  // Accepts `ape`, `shape:K=<int>`, `rpe:limit=<int>`.
  static PositionScheme parse(std::string_view text);

  // Canonical spelling. SHAPE with K = 0 is APE and prints as `ape`.
  std::string to_string() const;

  bool absolute() const { return kind != SchemeKind::rpe; }
  int training_shift() const { return kind == SchemeKind::shape ? max_shift : 0; }

  friend bool operator==(const PositionScheme&, const PositionScheme&) = default;
};

// Learned relative embeddings for one attention stack: (2r + 1) rows indexed by
// clip_distance(j - i, r), one table added to keys and one to values.
template <typename Scalar>
struct RpeTable {
  int limit = 16;
  Matrix<Scalar> key;
  Matrix<Scalar> value;

  static RpeTable zeros(int limit, Index head_dim) {
    return {limit, Matrix<Scalar>::Zero(2 * limit + 1, head_dim),
            Matrix<Scalar>::Zero(2 * limit + 1, head_dim)};
  }
};

}  // namespace posrep
