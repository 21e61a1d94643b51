#include <doctest.h>

#include "posrep/analysis.hpp"
#include "posrep/ops.hpp"

#include <cmath>
#include <sstream>

using namespace posrep;

namespace {

ModelConfig cfg(PositionScheme scheme) {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.src_vocab = 10;
  c.tgt_vocab = 10;
  c.max_position = 80;
  c.scheme = scheme;
  return c;
}

Corpus toy_corpus() {
  Corpus c(3);
  c[0].src = {4, 5, 6};
  c[0].tgt = {6, 5, 4};
  c[1].src = {7, 8};
  c[1].tgt = {8, 7};
  c[2].src = {9, 4, 4, 5, 6, 7, 8};
  c[2].tgt = {8, 7, 6, 5, 4, 4, 9};
  return c;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("similarity matrix has a unit diagonal and is symmetric") {
  const Transformer<float> m(cfg(PositionScheme::shape(10)), 5);
  const std::vector<int> x{4, 5, 6, 7, 8, 9};
  const std::vector<int> offs{0, 10, 25, 50};
  const auto s = offset_similarity(m, x, offs);
  REQUIRE(s.values.rows() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(s.values(i, i) == 1.0);
    for (int j = 0; j < 4; ++j) {
      CHECK(s.values(i, j) == doctest::Approx(s.values(j, i)));
      CHECK(s.values(i, j) <= 1.0 + 1e-12);
      CHECK(s.values(i, j) >= -1.0 - 1e-12);
    }
  }
  CHECK(mean_off_diagonal(s) < 1.0);
  const std::vector<std::vector<int>> xs{x, x};
  CHECK(offset_similarity(m, xs, offs).values.isApprox(s.values));
}

TEST_CASE("similarity follows the cosine of encoder states") {
  const Transformer<float> m(cfg(PositionScheme::ape()), 6);
  const std::vector<int> x{4, 9, 7};
  const std::vector<int> offs{0, 3};
  const auto s = offset_similarity(m, x, offs);
  const Matrix<float> a = m.encode_ids(x, 0);
  const Matrix<float> b = m.encode_ids(x, 3);
  double expect = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const Eigen::VectorXd u = a.row(i).cast<double>(), v = b.row(i).cast<double>();
    expect += u.dot(v) / (u.norm() * v.norm());
  }
  expect /= static_cast<double>(a.rows());
  CHECK(s.values(0, 1) == doctest::Approx(expect).epsilon(1e-9));
  const double mean = mean_off_diagonal(s);
  CHECK(mean == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("similarity rejects the relative scheme and large offsets") {
  const std::vector<int> x{4, 5};
  const std::vector<int> offs{0, 10};
  CHECK_THROWS_AS(offset_similarity(Transformer<float>(cfg(PositionScheme::rpe(4)), 1), x, offs),
                  std::invalid_argument);
  const std::vector<int> big{0, 79};
  CHECK_THROWS_AS(offset_similarity(Transformer<float>(cfg(PositionScheme::ape()), 1), x, big), std::out_of_range);
}

TEST_CASE("token scores of a model with constant logits") {
  Transformer<float> m(cfg(PositionScheme::ape()), 2);
  for (auto& p : m.parameters())
    if (p.name.rfind("out_proj", 0) == 0) p.tensor.matrix().setZero();
  const Corpus c = toy_corpus();
  const auto s = tokenwise_scores(m, c);
  REQUIRE(s.size() == 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    REQUIRE(s[i].size() == c[i].tgt.size());
    for (const double v : s[i]) CHECK(v == doctest::Approx(-std::log(10.0)).epsilon(1e-6));
  }
}

TEST_CASE("token scores agree with teacher forced logits") {
  const Transformer<float> m(cfg(PositionScheme::rpe(4)), 3);
  const Corpus c = toy_corpus();
  const auto s = tokenwise_scores(m, c);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Matrix<float> logits = m.forward_teacher_forced(c[i].src, c[i].tgt, 0, 0);
    for (std::size_t j = 0; j < c[i].tgt.size(); ++j) {
      const Eigen::VectorXd row = logits.row(static_cast<Index>(j)).cast<double>();
      const double lse = row.maxCoeff() + std::log((row.array() - row.maxCoeff()).exp().sum());
      CHECK(s[i][j] == doctest::Approx(row(c[i].tgt[j]) - lse).epsilon(1e-5));
    }
  }
}

TEST_CASE("win ratio of a score set against itself is one half") {
  const Corpus c = toy_corpus();
  const Transformer<float> m(cfg(PositionScheme::ape()), 4);
  const auto s = tokenwise_scores(m, c);
  const auto counts = target_token_counts(c, 10);
  const auto g = win_ratio_grid(s, s, c, counts, 2);
  std::int64_t n = 0;
  for (const auto& row : g.cells)
    for (const auto& cell : row) {
      if (cell.count == 0) {
        CHECK_FALSE(cell.ratio().has_value());
      } else {
        CHECK(*cell.ratio() == 0.5);
      }
      n += cell.count;
    }
  CHECK(n == 12);
  CHECK(g.total().count == 12);
  CHECK(*g.total().ratio() == 0.5);
  CHECK(g.unbucketed == 0);
}

TEST_CASE("win ratio counts wins by position and frequency") {
  const Corpus c = toy_corpus();
  std::vector<std::vector<double>> a, b;
  for (const auto& p : c) {
    a.emplace_back(p.tgt.size(), -1.0);
    b.emplace_back(p.tgt.size(), -2.0);
  }
  // one loss for A at position 1 of the first pair
  a[0][0] = -3.0;
  const auto counts = target_token_counts(c, 10);
  // token 4 appears 3 times, token 9 once
  CHECK(counts[4] == 3);
  CHECK(counts[9] == 1);
  const std::vector<std::int64_t> edges{1, 2, 4};
  const auto g = win_ratio_grid(a, b, c, counts, 5, edges);
  REQUIRE(g.pos_lo.size() == 2);
  CHECK(g.pos_lo[1] == 6);
  CHECK(g.total().count == 12);
  CHECK(g.total().wins == 11.0);
  // row 0 has positions 1..5: pair0 all, pair1 all, pair2 first five
  std::int64_t row0 = 0;
  for (const auto& cell : g.cells[0]) row0 += cell.count;
  CHECK(row0 == 10);
  const auto byf = g.by_frequency();
  REQUIRE(byf.size() == 3);
  CHECK(byf[0].count + byf[1].count + byf[2].count == 12);
  // token 6 (count 2) sits in the [2,4) column; its pair0 occurrence lost
  CHECK(byf[1].wins == byf[1].count - 1.0);
  CHECK(*byf[0].ratio() == 1.0);
  CHECK(byf[2].count == 0);
}

TEST_CASE("win ratio errors and unbucketed tokens") {
  const Corpus c = toy_corpus();
  std::vector<std::vector<double>> a;
  for (const auto& p : c) a.emplace_back(p.tgt.size(), 0.0);
  auto bad = a;
  bad[1].pop_back();
  const auto counts = target_token_counts(c, 10);
  CHECK_THROWS(win_ratio_grid(a, bad, c, counts));
  bad = a;
  bad.pop_back();
  CHECK_THROWS(win_ratio_grid(a, bad, c, counts));
  std::vector<std::int64_t> zero(10, 0);
  const auto g = win_ratio_grid(a, a, c, zero);
  CHECK(g.unbucketed == 12);
  CHECK(g.total().count == 0);
}

TEST_CASE("win ratio csv and pgm") {
  const Corpus c = toy_corpus();
  std::vector<std::vector<double>> a, b;
  for (const auto& p : c) {
    a.emplace_back(p.tgt.size(), 0.0);
    b.emplace_back(p.tgt.size(), -1.0);
  }
  const auto counts = target_token_counts(c, 10);
  const std::vector<std::int64_t> edges{1, 2};
  const auto g = win_ratio_grid(a, b, c, counts, 5, edges);
  std::ostringstream csv;
  write_win_ratio_csv(csv, g);
  CHECK(csv.str().rfind("pos_lo,pos_hi,freq_lo,freq_hi,count,ratio\n1,5,1,1,", 0) == 0);
  CHECK(csv.str().find(",inf,") != std::string::npos);

  Matrix<double> v(2, 2);
  v << 0.0, 0.5, std::nan(""), 1.0;
  std::ostringstream pgm;
  write_pgm(pgm, v);
  std::istringstream in(pgm.str());
  std::string magic, comment;
  in >> magic;
  CHECK(magic == "P2");
  in >> std::ws;
  std::getline(in, comment);
  CHECK(comment.find("min=0") != std::string::npos);
  CHECK(comment.find("max=1") != std::string::npos);
  int w = 0, h = 0, maxv = 0;
  in >> w >> h >> maxv;
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(maxv == 255);
  std::vector<int> px(4);
  for (auto& p : px) in >> p;
  CHECK(px == std::vector<int>{0, 128, 0, 255});
}

TEST_CASE("segment extraction") {
  bool fb = false;
  const std::vector<int> out{4, 5, 3, 6, 7, 3, 8};
  CHECK(extract_segment(out, 3, false, 0.5, 3, fb) == std::vector<int>{4, 5});
  CHECK_FALSE(fb);
  CHECK(extract_segment(out, 3, true, 0.5, 3, fb) == std::vector<int>{8});
  CHECK_FALSE(fb);
  CHECK(extract_segment(out, 2, false, 0.5, 3, fb) == std::vector<int>{4, 5, 6});
  CHECK(fb);
  fb = false;
  CHECK(extract_segment(out, 2, true, 2.0 / 7.0, 3, fb) == std::vector<int>{8});
  CHECK(fb);
}

TEST_CASE("swapped order probe bookkeeping") {
  const Transformer<float> m(cfg(PositionScheme::ape()), 8);
  Corpus single(1);
  single[0].src = single[0].tgt = {4, 5};
  CHECK_THROWS_AS(swapped_order_eval(m, single, DecodeOptions{}), std::invalid_argument);

  Corpus two(4);
  for (std::size_t i = 0; i < two.size(); ++i) {
    const int t = 4 + static_cast<int>(i);
    two[i].src = two[i].tgt = {t, t + 1, 3, t + 2};
    two[i].src_boundaries = two[i].tgt_boundaries = {2};
  }
  const auto r = swapped_order_eval(m, two, DecodeOptions{});
  CHECK(r.pairs == 4);
  CHECK(r.drop == r.bleu_original - r.bleu_swapped);
  CHECK(r.fallback_original <= 4);
  std::ostringstream csv;
  write_swapped_csv(csv, r);
  CHECK(csv.str().find("bleu_original,bleu_swapped,drop\n") != std::string::npos);
}

}
