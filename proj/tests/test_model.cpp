#include <doctest.h>

#include "posrep/model.hpp"
#include "posrep/ops.hpp"

#include <algorithm>

using namespace posrep;

namespace {

ModelConfig small_config(PositionScheme scheme) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.src_vocab = 20;
  c.tgt_vocab = 20;
  c.max_position = 64;
  c.dropout = 0.0;
  c.scheme = scheme;
  return c;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default configuration has 245824 parameters") {
  ModelConfig c;
  const Transformer<float> m(c, 1);
  CHECK(m.parameter_count() == 245824);
  c.scheme = PositionScheme::rpe(16);
  // two shared tables of 33 x 16 per stack
  CHECK(Transformer<float>(c, 1).parameter_count() == 245824 + 2 * 2 * 33 * 16);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.heads = 3;
  CHECK_THROWS(c.validate());
  c = ModelConfig{};
  c.sep_id = c.eos_id;
  CHECK_THROWS(c.validate());
  c = ModelConfig{};
  c.src_vocab = 3;
  CHECK_THROWS(c.validate());
}

TEST_CASE("metadata round trip") {
  ModelConfig c = small_config(PositionScheme::shape(12));
  c.pre_norm = true;
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : c.to_metadata()) kv[k] = v;
  const auto back = ModelConfig::from_metadata(kv);
  CHECK(back.to_metadata() == c.to_metadata());
}

TEST_CASE("parameters are validated on load") {
  const ModelConfig c = small_config(PositionScheme::ape());
  Transformer<float> m(c, 3);
  auto params = m.parameters();
  params[0].tensor = Tensor<float>({3, 3});
  CHECK_THROWS(Transformer<float>(c, params));
  params = m.parameters();
  params.pop_back();
  CHECK_THROWS(Transformer<float>(c, params));
  params = m.parameters();
  params[1].tensor.matrix()(0, 0) = std::nanf("");
  CHECK_THROWS_AS(Transformer<float>(c, params), NumericalError);
}

TEST_CASE("decoder is causal") {
  const Transformer<double> m(small_config(PositionScheme::ape()), 5);
  const std::vector<int> x{4, 5, 6, 7};
  std::vector<int> y{8, 9, 10, 11, 12};
  const auto a = m.forward_teacher_forced(x, y, 0, 0);
  y[3] = 15;
  const auto b = m.forward_teacher_forced(x, y, 0, 0);
  // row r predicts y[r] from BOS + y[0..r-1]
  CHECK((a.topRows(4) - b.topRows(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.bottomRows(2) - b.bottomRows(2)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("SHAPE at offset 0 is APE bit for bit") {
  const Transformer<float> ape(small_config(PositionScheme::ape()), 9);
  const Transformer<float> shape(small_config(PositionScheme::shape(20)), 9);
  const std::vector<int> x{4, 9, 13, 5};
  const std::vector<int> y{7, 7, 8};
  CHECK(ape.forward_teacher_forced(x, y, 0, 0) == shape.forward_teacher_forced(x, y, 0, 0));
  CHECK(ape.encode(x, 0) == shape.encode(x, 0));
  CHECK(shape.encode(x, 0) != shape.encode(x, 5));
}

TEST_CASE("relative scheme ignores offsets") {
  const Transformer<float> rpe(small_config(PositionScheme::rpe(4)), 9);
  const std::vector<int> x{4, 9, 13, 5};
  CHECK(rpe.encode(x, 0) == rpe.encode(x, 11));
}

TEST_CASE("packed batch logits equal per-sequence logits") {
  const ModelConfig c = small_config(PositionScheme::rpe(3));
  for (const auto scheme : {PositionScheme::ape(), PositionScheme::rpe(3)}) {
    ModelConfig cc = c;
    cc.scheme = scheme;
    Transformer<double> m(cc, 2);
    const std::vector<std::vector<int>> xs{{4, 5, 6}, {7, 8, 9, 10, 11}, {12}};
    const std::vector<std::vector<int>> ys{{13, 14}, {15, 16, 17, 18}, {19, 4, 5}};
    const auto batch = PackedBatch::build(xs, ys, cc);
    CHECK(batch.src_ids.size() == 3 + 5 + 1 + 3);
    CHECK(batch.tgt_in.size() == 3 + 5 + 4);
    CHECK(batch.tgt_in[0] == cc.bos_id);
    CHECK(batch.tgt_out[2] == cc.eos_id);
    Graph<double> g(false);
    const std::vector<int> zero(3, 0);
    const Var logits = m.forward(g, batch, zero, zero, nullptr);
    Index row = 0;
    for (std::size_t s = 0; s < xs.size(); ++s) {
      const auto single = m.forward_teacher_forced(xs[s], ys[s], 0, 0);
      CHECK((g.value(logits).middleRows(row, single.rows()) - single).cwiseAbs().maxCoeff() < 1e-12);
      row += single.rows();
    }
  }
}

TEST_CASE("next-token log-probabilities agree with teacher forcing") {
  const Transformer<double> m(small_config(PositionScheme::shape(8)), 4);
  const std::vector<int> x{4, 6, 8, 10};
  const std::vector<int> y{5, 7, 9};
  const auto tf = log_softmax_rows(m.forward_teacher_forced(x, y, 0, 0));
  const auto memory = m.encode(x, 0);
  const std::vector<std::vector<int>> prefixes{{}, {5}, {5, 7}, {5, 7, 9}};
  const auto step = m.next_token_log_probs(memory, prefixes);
  CHECK((step - tf).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("greedy and width-1 beam agree on an untrained model") {
  const Transformer<float> m(small_config(PositionScheme::ape()), 12);
  Rng rng(3, 3);
  for (int t = 0; t < 10; ++t) {
    std::vector<int> x(3 + rng.uniform_int(5));
    for (auto& id : x) id = 4 + static_cast<int>(rng.uniform_int(15));
    const auto g = m.greedy_decode(x, 12);
    CHECK(g.size() <= 12);
    CHECK(std::find(g.begin(), g.end(), m.config().eos_id) == g.end());
    CHECK(m.beam_decode(x, 1, 12) == g);
  }
}

TEST_CASE("float and double models agree closely") {
  const Transformer<float> f(small_config(PositionScheme::rpe(4)), 6);
  const Transformer<double> d = f.cast<double>();
  const std::vector<int> x{4, 5, 6, 7, 8};
  const std::vector<int> y{9, 10};
  CHECK((f.forward_teacher_forced(x, y, 0, 0).cast<double>() - d.forward_teacher_forced(x, y, 0, 0))
            .cwiseAbs()
            .maxCoeff() < 1e-4);
}

TEST_CASE("pre-norm variant has final norms and runs") {
  ModelConfig c = small_config(PositionScheme::ape());
  c.pre_norm = true;
  const auto names = parameter_names(c);
  CHECK(std::find(names.begin(), names.end(), "enc.final_ln.gamma") != names.end());
  const Transformer<float> m(c, 1);
  const std::vector<int> x{4, 5};
  CHECK(m.forward_teacher_forced(x, x, 0, 0).allFinite());
}

}
