#include <doctest.h>

#include "posrep/corpus_io.hpp"
#include "posrep/tasks.hpp"

#include <algorithm>
#include <sstream>

using namespace posrep;

TEST_SUITE("tasks") {

TEST_CASE("task functions") {
  const std::vector<int> x{4, 5, 6};
  const std::vector<int> none;
  CHECK(apply_task(TaskKind::copy, x, none) == x);
  CHECK(apply_task(TaskKind::reverse, x, none) == std::vector<int>{6, 5, 4});
  // +1 mod the three content ids
  const std::vector<int> plus_one{0, 1, 2, 3, 5, 6, 4};
  CHECK(apply_task(TaskKind::mapped_copy, x, plus_one) == std::vector<int>{5, 6, 4});
  CHECK_THROWS(apply_task(TaskKind::mapped_copy, std::vector<int>{9}, plus_one));
}

TEST_CASE("content permutation is a seed-determined bijection fixing special ids") {
  TaskSpec spec;
  spec.seed = 3;
  const auto p = content_permutation(spec);
  CHECK(p == content_permutation(spec));
  for (int i = 0; i < SpecialTokens::first_content; ++i) CHECK(p[i] == i);
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < spec.vocab_size; ++i) CHECK(sorted[i] == i);
  spec.seed = 4;
  CHECK(p != content_permutation(spec));
}

TEST_CASE("generated pairs respect the spec") {
  TaskSpec spec;
  spec.kind = TaskKind::mapped_copy;
  spec.min_length = 3;
  spec.max_length = 9;
  Rng rng(1, 1);
  const TaskGenerator gen(spec);
  int shortest = 100, longest = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto p = gen.next(rng);
    shortest = std::min<int>(shortest, static_cast<int>(p.src.size()));
    longest = std::max<int>(longest, static_cast<int>(p.src.size()));
    CHECK(p.tgt == apply_task(spec.kind, p.src, gen.permutation()));
    for (const int t : p.src) {
      CHECK(t >= SpecialTokens::first_content);
      CHECK(t < spec.vocab_size);
    }
  }
  CHECK(shortest == 3);
  CHECK(longest == 9);
  Rng a(7, 7), b(7, 7);
  CHECK(gen_corpus(spec, 50, a) == gen_corpus(spec, 50, b));
}

TEST_CASE("zipf skew: top token at least 5x the median token") {
  const ZipfSampler z(60, 1.2);
  Rng rng(2, 9);
  std::vector<int> counts(64, 0);
  for (int i = 0; i < 100000; ++i) ++counts[z.sample(rng)];
  std::vector<int> content(counts.begin() + 4, counts.end());
  const int top = counts[4];
  std::sort(content.begin(), content.end());
  const int median = content[content.size() / 2];
  CHECK(top >= 5 * median);
  CHECK(z.probability(4) > z.probability(5));
  double total = 0.0;
  for (int id = 4; id < 64; ++id) total += z.probability(id);
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("interpolate grouping and round trip") {
  TaskSpec spec;
  Rng rng(5, 5);
  const Corpus base = gen_corpus(spec, 1001, rng);
  const Corpus merged = make_interpolate_dataset(base, 5);
  REQUIRE(merged.size() == 200);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const auto xs = split_on(merged[i].src, SpecialTokens::sep);
    const auto ys = split_on(merged[i].tgt, SpecialTokens::sep);
    REQUIRE(xs.size() == 5);
    REQUIRE(ys.size() == 5);
    CHECK(merged[i].sentences() == 5);
    for (std::size_t s = 0; s < 5; ++s) {
      CHECK(xs[s] == base[5 * i + s].src);
      CHECK(ys[s] == base[5 * i + s].tgt);
    }
    CHECK(merged[i].src_boundaries == boundaries_of(merged[i].src, SpecialTokens::sep));
  }
  CHECK_THROWS(make_interpolate_dataset(base, 1));
}

TEST_CASE("swap first sentence to the end") {
  SequencePair p;
  p.src = {4, 5, 3, 6, 3, 7, 8};
  p.tgt = {9, 10, 3, 11, 3, 12, 13};
  p.src_boundaries = boundaries_of(p.src, 3);
  p.tgt_boundaries = boundaries_of(p.tgt, 3);
  const auto s = swap_first_to_end(p);
  CHECK(s.src == std::vector<int>{6, 3, 7, 8, 3, 4, 5});
  CHECK(s.tgt == std::vector<int>{11, 3, 12, 13, 3, 9, 10});
  CHECK(s.src_boundaries == boundaries_of(s.src, 3));
  SequencePair same;
  same.src = {4, 5, 3, 4, 5};
  same.tgt = same.src;
  same.src_boundaries = same.tgt_boundaries = {2};
  CHECK(swap_first_to_end(same) == same);
}

TEST_CASE("extrapolate split filters training lengths only") {
  TaskSpec spec;
  spec.min_length = 5;
  spec.max_length = 40;
  Rng rng(6, 6);
  const Corpus all = gen_corpus(spec, 3000, rng);
  const auto s = make_extrapolate_split(all, 20, 100, 200);
  CHECK(s.valid.size() == 100);
  CHECK(s.test.size() == 200);
  for (const auto& p : s.train) {
    CHECK(p.src.size() <= 20);
    CHECK(p.tgt.size() <= 20);
  }
  std::size_t kept = 0;
  for (std::size_t i = 0; i < 2700; ++i) kept += all[i].src.size() <= 20 && all[i].tgt.size() <= 20;
  CHECK(s.train.size() == kept);
  CHECK(s.test.back() == all.back());
  const bool has_long = std::any_of(s.test.begin(), s.test.end(), [](const SequencePair& p) { return p.src.size() > 20; });
  CHECK(has_long);
}

TEST_CASE("target token counts") {
  Corpus c(2);
  c[0].tgt = {4, 4, 5};
  c[1].tgt = {5, 3, 6};
  const auto n = target_token_counts(c, 8);
  CHECK(n[4] == 2);
  CHECK(n[5] == 2);
  CHECK(n[6] == 1);
  CHECK(n[7] == 0);
}

TEST_CASE("corpus text round trip") {
  TaskSpec spec;
  Rng rng(8, 8);
  CorpusFile f{spec.to_metadata(), make_interpolate_dataset(gen_corpus(spec, 20, rng), 2)};
  std::stringstream s;
  write_corpus(s, f);
  const auto back = read_corpus(s);
  CHECK(back.header == f.header);
  CHECK(back.pairs == f.pairs);
  std::stringstream bad("4 5 6\n");
  CHECK_THROWS(read_corpus(bad));
}

}
