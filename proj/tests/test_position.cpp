#include <doctest.h>

#include "posrep/position.hpp"

#include <cmath>

using namespace posrep;

TEST_SUITE("position") {

TEST_CASE("table entries match a float64 evaluation") {
  const Index n = 600, d = 64;
  const auto table = build_table<float>(n, d);
  REQUIRE(table.max_position() == n);
  REQUIRE(table.dim() == d);
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index m = 0; m < d; ++m) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(m / 2) / static_cast<double>(d));
      const double ref = m % 2 == 0 ? std::sin(static_cast<double>(i) * freq) : std::cos(static_cast<double>(i) * freq);
      worst = std::max(worst, std::abs(static_cast<double>(table(i, m)) - ref));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("position 0 is sin 0 / cos 0 and pairs lie on the unit circle") {
  const auto t = build_table<double>(50, 16);
  for (Index m = 0; m < 16; ++m) CHECK(t(0, m) == (m % 2 == 0 ? 0.0 : 1.0));
  for (Index i = 0; i < 50; ++i) {
    for (Index j = 0; j < 8; ++j) {
      CHECK(t(i, 2 * j) * t(i, 2 * j) + t(i, 2 * j + 1) * t(i, 2 * j + 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("odd dimensions are rejected") { CHECK_THROWS_AS(build_table<float>(10, 7), std::invalid_argument); }

TEST_CASE("add_positions shifts the table window") {
  const auto table = build_table<float>(40, 8);
  const Tensor<float> zeros({5, 8});
  const auto out = add_positions(zeros, table, 7);
  for (Index i = 0; i < 5; ++i) {
    for (Index m = 0; m < 8; ++m) CHECK(out.matrix()(i, m) == table(i + 7, m));
  }
  const auto same = add_positions(zeros, table, 0);
  CHECK(same.matrix() == table.rows(0, 5));
}

TEST_CASE("add_positions never wraps around") {
  const auto table = build_table<float>(32, 8);
  const Tensor<float> x({10, 8});
  CHECK_THROWS(add_positions(x, table, 32 - 5));
  CHECK_NOTHROW(add_positions(x, table, 22));
  CHECK_THROWS(add_positions(x, table, 23));
}

TEST_CASE("offsets: K = 0 and inference give zero, K = 500 stays in range") {
  Rng rng(4, 4);
  int hi = 0;
  for (int i = 0; i < 5000; ++i) {
    CHECK(sample_offset(rng, {0, ShapeMode::training}) == 0);
    CHECK(sample_offset(rng, {500, ShapeMode::inference}) == 0);
    const int k = sample_offset(rng, {500, ShapeMode::training});
    CHECK(k >= 0);
    CHECK(k <= 500);
    hi = std::max(hi, k);
  }
  CHECK(hi > 450);
}

TEST_CASE("clip_distance") {
  static_assert(clip_distance(0, 16) == 16);
  CHECK(clip_distance(-3, 16) == 13);
  CHECK(clip_distance(20, 16) == 32);
  CHECK(clip_distance(-20, 16) == 0);
  CHECK(clip_distance(16, 16) == 32);
  CHECK(clip_distance(-16, 16) == 0);
}

TEST_CASE("scheme strings") {
  CHECK(PositionScheme::parse("ape") == PositionScheme::ape());
  CHECK(PositionScheme::parse("shape:K=20") == PositionScheme::shape(20));
  CHECK(PositionScheme::parse("rpe:limit=16") == PositionScheme::rpe(16));
  CHECK(PositionScheme::parse("shape:K=40").to_string() == "shape:K=40");
  CHECK(PositionScheme::parse("shape:K=0").to_string() == "ape");
  CHECK(PositionScheme::parse("rpe:limit=8").to_string() == "rpe:limit=8");
  CHECK_THROWS(PositionScheme::parse("shape"));
  CHECK_THROWS(PositionScheme::parse("shape:K=-1"));
  CHECK_THROWS(PositionScheme::parse("rpe:limit=0"));
  CHECK_THROWS(PositionScheme::parse("alibi"));
}

}
