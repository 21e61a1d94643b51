#include "posrep/model.hpp"

#include "posrep/decode.hpp"
#include "posrep/ops.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace posrep {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (layers < 1) fail("layers must be >= 1");
  if (heads < 1 || d_model < 1 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_model % 2 != 0) fail("d_model must be even");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (max_position < 1) fail("max_position must be >= 1");
  const std::set<int> ids{pad_id, bos_id, eos_id, sep_id};
  if (ids.size() != 4) fail("special token ids must be distinct");
  for (const int id : ids) {
    if (id < 0 || id >= src_vocab || id >= tgt_vocab) fail("special token ids must be inside both vocabularies");
  }
  if (scheme.kind == SchemeKind::rpe && scheme.rpe_limit < 1) fail("rpe limit must be >= 1");
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int get_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument("model metadata missing '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

Metadata ModelConfig::to_metadata() const {
  return {
      {"layers", std::to_string(layers)},
      {"heads", std::to_string(heads)},
      {"d_model", std::to_string(d_model)},
      {"d_ff", std::to_string(d_ff)},
      {"src_vocab", std::to_string(src_vocab)},
      {"tgt_vocab", std::to_string(tgt_vocab)},
      {"scheme", scheme.to_string()},
      {"dropout", format_double(dropout)},
      {"max_position", std::to_string(max_position)},
      {"pad_id", std::to_string(pad_id)},
      {"bos_id", std::to_string(bos_id)},
      {"eos_id", std::to_string(eos_id)},
      {"sep_id", std::to_string(sep_id)},
      {"pre_norm", pre_norm ? "1" : "0"},
      {"share_rpe", share_rpe ? "1" : "0"},
  };
}

ModelConfig ModelConfig::from_metadata(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.layers = get_int(kv, "layers");
  c.heads = get_int(kv, "heads");
  c.d_model = get_int(kv, "d_model");
  c.d_ff = get_int(kv, "d_ff");
  c.src_vocab = get_int(kv, "src_vocab");
  c.tgt_vocab = get_int(kv, "tgt_vocab");
  const auto scheme = kv.find("scheme");
  if (scheme == kv.end()) throw std::invalid_argument("model metadata missing 'scheme'");
  c.scheme = PositionScheme::parse(scheme->second);
  const auto dropout = kv.find("dropout");
  if (dropout == kv.end()) throw std::invalid_argument("model metadata missing 'dropout'");
  c.dropout = std::stod(dropout->second);
  c.max_position = get_int(kv, "max_position");
  c.pad_id = get_int(kv, "pad_id");
  c.bos_id = get_int(kv, "bos_id");
  c.eos_id = get_int(kv, "eos_id");
  c.sep_id = get_int(kv, "sep_id");
  c.pre_norm = get_int(kv, "pre_norm") != 0;
  c.share_rpe = get_int(kv, "share_rpe") != 0;
  c.validate();
  return c;
}

std::vector<std::string> parameter_names(const ModelConfig& config) {
  config.validate();
  // Layout construction is scalar-independent; float is as good as any.
  Transformer<float> model(config, 0);
  std::vector<std::string> names;
  for (const auto& p : model.parameters()) names.push_back(p.name);
  return names;
}

PackedBatch PackedBatch::build(std::span<const std::vector<int>> sources,
                               std::span<const std::vector<int>> targets, const ModelConfig& config) {
  if (sources.size() != targets.size()) throw std::invalid_argument("batch: source/target count differs");
  PackedBatch b;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    b.src_begin.push_back(static_cast<Index>(b.src_ids.size()));
    b.src_len.push_back(static_cast<Index>(sources[i].size() + 1));
    b.src_ids.insert(b.src_ids.end(), sources[i].begin(), sources[i].end());
    b.src_ids.push_back(config.eos_id);

    b.tgt_begin.push_back(static_cast<Index>(b.tgt_in.size()));
    b.tgt_len.push_back(static_cast<Index>(targets[i].size() + 1));
    b.tgt_in.push_back(config.bos_id);
    b.tgt_in.insert(b.tgt_in.end(), targets[i].begin(), targets[i].end());
    b.tgt_out.insert(b.tgt_out.end(), targets[i].begin(), targets[i].end());
    b.tgt_out.push_back(config.eos_id);
  }
  return b;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
std::pair<ParameterList<Scalar>, typename Transformer<Scalar>::Layout> Transformer<Scalar>::make_layout(
    const ModelConfig& c) {
  ParameterList<Scalar> params;
  Layout layout;
  const Index d = c.d_model;
  const Index dh = c.d_model / c.heads;
  const Index rel_rows = 2 * c.scheme.rpe_limit + 1;
  const bool rpe = c.scheme.kind == SchemeKind::rpe;

  auto add = [&](const std::string& name, std::vector<Index> shape) {
    params.push_back({name, Tensor<Scalar>(std::move(shape))});
    return static_cast<int>(params.size() - 1);
  };
  auto attn = [&](const std::string& prefix) {
    AttnIdx a{};
    a.wq = add(prefix + ".wq", {d, d});
    a.bq = add(prefix + ".bq", {d});
    a.wk = add(prefix + ".wk", {d, d});
    a.bk = add(prefix + ".bk", {d});
    a.wv = add(prefix + ".wv", {d, d});
    a.bv = add(prefix + ".bv", {d});
    a.wo = add(prefix + ".wo", {d, d});
    a.bo = add(prefix + ".bo", {d});
    return a;
  };
  auto norm = [&](const std::string& prefix) {
    return NormIdx{add(prefix + ".gamma", {d}), add(prefix + ".beta", {d})};
  };
  auto ffn = [&](const std::string& prefix) {
    return FfnIdx{add(prefix + ".w1", {d, c.d_ff}), add(prefix + ".b1", {c.d_ff}),
                  add(prefix + ".w2", {c.d_ff, d}), add(prefix + ".b2", {d})};
  };
  auto rel = [&](const std::string& prefix) {
    return RelIdx{add(prefix + ".rpe.key", {rel_rows, dh}), add(prefix + ".rpe.value", {rel_rows, dh})};
  };

  layout.src_embed = add("src_embed", {c.src_vocab, d});
  layout.tgt_embed = add("tgt_embed", {c.tgt_vocab, d});
  RelIdx enc_shared, dec_shared;
  if (rpe && c.share_rpe) {
    enc_shared = rel("enc");
    dec_shared = rel("dec");
  }
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayerIdx e{};
    e.self = attn(p + ".self_attn");
    e.norm1 = norm(p + ".ln1");
    e.ffn = ffn(p + ".ffn");
    e.norm2 = norm(p + ".ln2");
    if (rpe) e.rel = c.share_rpe ? enc_shared : rel(p);
    layout.encoder.push_back(e);
  }
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayerIdx e{};
    e.self = attn(p + ".self_attn");
    e.norm1 = norm(p + ".ln1");
    e.cross = attn(p + ".cross_attn");
    e.norm2 = norm(p + ".ln2");
    e.ffn = ffn(p + ".ffn");
    e.norm3 = norm(p + ".ln3");
    if (rpe) e.rel = c.share_rpe ? dec_shared : rel(p);
    layout.decoder.push_back(e);
  }
  if (c.pre_norm) {
    layout.enc_final = norm("enc.final_ln");
    layout.dec_final = norm("dec.final_ln");
  }
  layout.out_w = add("out_proj.w", {d, c.tgt_vocab});
  layout.out_b = add("out_proj.b", {c.tgt_vocab});
  return {std::move(params), std::move(layout)};
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  auto [params, layout] = make_layout(config_);
  params_ = std::move(params);
  layout_ = std::move(layout);
  if (config_.scheme.absolute()) table_ = SinusoidalTable<Scalar>(config_.max_position, config_.d_model);
  initialize(seed);
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config, ParameterList<Scalar> params) : config_(config) {
  config_.validate();
  auto [expected, layout] = make_layout(config_);
  if (params.size() != expected.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(expected.size()) + " tensors, got " +
                                std::to_string(params.size()));
  }
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < params.size(); ++i) by_name[params[i].name] = i;
  for (auto& slot : expected) {
    const auto it = by_name.find(slot.name);
    if (it == by_name.end()) throw std::invalid_argument("model: missing tensor '" + slot.name + "'");
    auto& src = params[it->second].tensor;
    if (!src.same_shape(slot.tensor)) {
      throw std::invalid_argument("model: tensor '" + slot.name + "' has shape " + shape_string(src.shape()) +
                                  ", expected " + shape_string(slot.tensor.shape()));
    }
    if (!src.all_finite()) throw NumericalError("model: tensor '" + slot.name + "' is not finite");
    slot.tensor = std::move(src);
  }
  params_ = std::move(expected);
  layout_ = std::move(layout);
  if (config_.scheme.absolute()) table_ = SinusoidalTable<Scalar>(config_.max_position, config_.d_model);
}

template <typename Scalar>
void Transformer<Scalar>::initialize(std::uint64_t seed) {
  Rng rng = Rng::for_purpose(seed, "init");
  const double embed_std = std::pow(static_cast<double>(config_.d_model), -0.5);
  auto xavier = [&](Tensor<Scalar>& t) {
    const double fan_in = static_cast<double>(t.rows());
    const double fan_out = static_cast<double>(t.cols());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Scalar* p = t.data();
    for (Index i = 0; i < t.size(); ++i) p[i] = static_cast<Scalar>((2.0 * rng.uniform_double() - 1.0) * a);
  };
  for (auto& p : params_) {
    const std::string& n = p.name;
    if (n == "src_embed" || n == "tgt_embed") {
      Scalar* v = p.tensor.data();
      for (Index i = 0; i < p.tensor.size(); ++i) v[i] = static_cast<Scalar>(rng.normal() * embed_std);
    } else if (n.ends_with(".gamma")) {
      p.tensor.matrix().setOnes();
    } else if (p.tensor.rank() == 2) {
      xavier(p.tensor);
    } else {
      p.tensor.matrix().setZero();
    }
  }
}

template <typename Scalar>
Index Transformer<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename Scalar>
Var Transformer<Scalar>::embed(Graph<Scalar>& g, const Binder& bind, int table, std::span<const int> ids,
                               std::span<const Index> begin, std::span<const Index> len,
                               std::span<const int> shift, Rng* dropout_rng) const {
  Var x = embedding(g, bind(table), ids, static_cast<Scalar>(std::sqrt(static_cast<double>(config_.d_model))));
  if (config_.scheme.absolute()) {
    Matrix<Scalar> pe(static_cast<Index>(ids.size()), config_.d_model);
    for (std::size_t s = 0; s < begin.size(); ++s) {
      const int k = shift.empty() ? 0 : shift[s];
      pe.middleRows(begin[s], len[s]) = table_.rows(k, len[s]);
    }
    x = add_constant(g, x, pe);
  }
  if (dropout_rng != nullptr) x = dropout(g, x, config_.dropout, *dropout_rng);
  return x;
}

template <typename Scalar>
Var Transformer<Scalar>::attention_block(Graph<Scalar>& g, const Binder& bind, const AttnIdx& a, Var xq,
                                         Var xkv, std::span<const AttentionSegment> segments, bool causal,
                                         const RelativeTables& rel) const {
  const Var q = linear(g, xq, bind(a.wq), bind(a.bq));
  const Var k = linear(g, xkv, bind(a.wk), bind(a.bk));
  const Var v = linear(g, xkv, bind(a.wv), bind(a.bv));
  const Var z = multi_head_attention(g, q, k, v, config_.heads, segments, causal, rel);
  return linear(g, z, bind(a.wo), bind(a.bo));
}

template <typename Scalar>
Var Transformer<Scalar>::ffn_block(Graph<Scalar>& g, const Binder& bind, const FfnIdx& f, Var x) const {
  return linear(g, relu(g, linear(g, x, bind(f.w1), bind(f.b1))), bind(f.w2), bind(f.b2));
}

template <typename Scalar>
Var Transformer<Scalar>::norm(Graph<Scalar>& g, const Binder& bind, const NormIdx& n, Var x) const {
  return layer_norm(g, x, bind(n.gamma), bind(n.beta));
}

template <typename Scalar>
RelativeTables Transformer<Scalar>::relative(const Binder& bind, const RelIdx& r) const {
  if (r.key < 0) return {};
  return RelativeTables{bind(r.key), bind(r.value), config_.scheme.rpe_limit};
}

template <typename Scalar>
Var Transformer<Scalar>::encoder_stack(Graph<Scalar>& g, const Binder& bind, std::span<const int> ids,
                                       std::span<const Index> begin, std::span<const Index> len,
                                       std::span<const int> shift, Rng* dropout_rng) const {
  std::vector<AttentionSegment> segs;
  segs.reserve(begin.size());
  for (std::size_t s = 0; s < begin.size(); ++s) segs.push_back({begin[s], len[s], begin[s], len[s]});

  Var x = embed(g, bind, layout_.src_embed, ids, begin, len, shift, dropout_rng);
  auto drop = [&](Var v) { return dropout_rng ? dropout(g, v, config_.dropout, *dropout_rng) : v; };
  for (const auto& layer : layout_.encoder) {
    const RelativeTables rel = relative(bind, layer.rel);
    if (config_.pre_norm) {
      const Var h = norm(g, bind, layer.norm1, x);
      x = add(g, x, drop(attention_block(g, bind, layer.self, h, h, segs, false, rel)));
      x = add(g, x, drop(ffn_block(g, bind, layer.ffn, norm(g, bind, layer.norm2, x))));
    } else {
      x = norm(g, bind, layer.norm1, add(g, x, drop(attention_block(g, bind, layer.self, x, x, segs, false, rel))));
      x = norm(g, bind, layer.norm2, add(g, x, drop(ffn_block(g, bind, layer.ffn, x))));
    }
  }
  if (config_.pre_norm) x = norm(g, bind, layout_.enc_final, x);
  return x;
}

template <typename Scalar>
Var Transformer<Scalar>::decoder_stack(Graph<Scalar>& g, const Binder& bind, Var memory,
                                       std::span<const int> ids, std::span<const Index> begin,
                                       std::span<const Index> len, std::span<const int> shift,
                                       std::span<const AttentionSegment> cross_segments,
                                       Rng* dropout_rng) const {
  std::vector<AttentionSegment> segs;
  segs.reserve(begin.size());
  for (std::size_t s = 0; s < begin.size(); ++s) segs.push_back({begin[s], len[s], begin[s], len[s]});

  Var y = embed(g, bind, layout_.tgt_embed, ids, begin, len, shift, dropout_rng);
  auto drop = [&](Var v) { return dropout_rng ? dropout(g, v, config_.dropout, *dropout_rng) : v; };
  for (const auto& layer : layout_.decoder) {
    const RelativeTables rel = relative(bind, layer.rel);
    if (config_.pre_norm) {
      const Var h = norm(g, bind, layer.norm1, y);
      y = add(g, y, drop(attention_block(g, bind, layer.self, h, h, segs, true, rel)));
      y = add(g, y, drop(attention_block(g, bind, layer.cross, norm(g, bind, layer.norm2, y), memory,
                                         cross_segments, false, {})));
      y = add(g, y, drop(ffn_block(g, bind, layer.ffn, norm(g, bind, layer.norm3, y))));
    } else {
      y = norm(g, bind, layer.norm1, add(g, y, drop(attention_block(g, bind, layer.self, y, y, segs, true, rel))));
      y = norm(g, bind, layer.norm2,
               add(g, y, drop(attention_block(g, bind, layer.cross, y, memory, cross_segments, false, {}))));
      y = norm(g, bind, layer.norm3, add(g, y, drop(ffn_block(g, bind, layer.ffn, y))));
    }
  }
  if (config_.pre_norm) y = norm(g, bind, layout_.dec_final, y);
  return y;
}

template <typename Scalar>
typename Transformer<Scalar>::Binder Transformer<Scalar>::frozen_binder(Graph<Scalar>& g) const {
  return [this, &g](int idx) { return g.frozen(params_[static_cast<std::size_t>(idx)].tensor); };
}

template <typename Scalar>
Var Transformer<Scalar>::forward(Graph<Scalar>& g, const PackedBatch& batch, std::span<const int> src_shift,
                                 std::span<const int> tgt_shift, Rng* dropout_rng) {
  std::vector<Var> bound(params_.size());
  const Binder bind = [this, &g, &bound](int idx) {
    auto& slot = bound[static_cast<std::size_t>(idx)];
    if (!slot.valid()) slot = g.parameter(params_[static_cast<std::size_t>(idx)].tensor);
    return slot;
  };
  Rng* drop = g.training() && config_.dropout > 0.0 ? dropout_rng : nullptr;
  const Var memory = encoder_stack(g, bind, batch.src_ids, batch.src_begin, batch.src_len, src_shift, drop);
  std::vector<AttentionSegment> cross;
  cross.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    cross.push_back({batch.tgt_begin[s], batch.tgt_len[s], batch.src_begin[s], batch.src_len[s]});
  }
  const Var y = decoder_stack(g, bind, memory, batch.tgt_in, batch.tgt_begin, batch.tgt_len, tgt_shift, cross, drop);
  return linear(g, y, bind(layout_.out_w), bind(layout_.out_b));
}

template <typename Scalar>
Matrix<Scalar> Transformer<Scalar>::encode_ids(std::span<const int> ids, int k_src) const {
  Graph<Scalar> g(false);
  const Index n = static_cast<Index>(ids.size());
  const std::array<Index, 1> begin{0};
  const std::array<Index, 1> len{n};
  const std::array<int, 1> shift{k_src};
  const Var h = encoder_stack(g, frozen_binder(g), ids, begin, len, shift, nullptr);
  return g.value(h);
}

template <typename Scalar>
Matrix<Scalar> Transformer<Scalar>::encode(std::span<const int> x, int k_src) const {
  std::vector<int> ids(x.begin(), x.end());
  ids.push_back(config_.eos_id);
  return encode_ids(ids, k_src);
}

template <typename Scalar>
Matrix<Scalar> Transformer<Scalar>::forward_teacher_forced(std::span<const int> x, std::span<const int> y,
                                                           int k_src, int k_tgt) const {
  const std::vector<std::vector<int>> src{std::vector<int>(x.begin(), x.end())};
  const std::vector<std::vector<int>> tgt{std::vector<int>(y.begin(), y.end())};
  const PackedBatch batch = PackedBatch::build(src, tgt, config_);
  Graph<Scalar> g(false);
  const Binder bind = frozen_binder(g);
  const std::array<int, 1> ks{k_src};
  const std::array<int, 1> kt{k_tgt};
  const Var memory = encoder_stack(g, bind, batch.src_ids, batch.src_begin, batch.src_len, ks, nullptr);
  const std::array<AttentionSegment, 1> cross{
      AttentionSegment{0, batch.tgt_len[0], 0, batch.src_len[0]}};
  const Var h = decoder_stack(g, bind, memory, batch.tgt_in, batch.tgt_begin, batch.tgt_len, kt, cross, nullptr);
  return g.value(linear(g, h, bind(layout_.out_w), bind(layout_.out_b)));
}

template <typename Scalar>
Matrix<double> Transformer<Scalar>::next_token_log_probs(const Matrix<Scalar>& memory,
                                                         std::span<const std::vector<int>> prefixes) const {
  Graph<Scalar> g(false);
  const Binder bind = frozen_binder(g);
  std::vector<int> ids;
  std::vector<Index> begin, len;
  std::vector<AttentionSegment> cross;
  for (const auto& p : prefixes) {
    begin.push_back(static_cast<Index>(ids.size()));
    len.push_back(static_cast<Index>(p.size() + 1));
    ids.push_back(config_.bos_id);
    ids.insert(ids.end(), p.begin(), p.end());
    cross.push_back({begin.back(), len.back(), 0, memory.rows()});
  }
  const std::vector<int> shift(prefixes.size(), 0);
  const Var mem = g.constant(memory);
  const Var h = decoder_stack(g, bind, mem, ids, begin, len, shift, cross, nullptr);
  const auto& hv = g.value(h);
  Matrix<Scalar> last(static_cast<Index>(prefixes.size()), hv.cols());
  for (std::size_t i = 0; i < prefixes.size(); ++i) last.row(static_cast<Index>(i)) = hv.row(begin[i] + len[i] - 1);
  const auto& w = params_[static_cast<std::size_t>(layout_.out_w)].tensor.matrix();
  const auto& b = params_[static_cast<std::size_t>(layout_.out_b)].tensor.matrix();
  Matrix<Scalar> logits = last * w;
  logits.rowwise() += Eigen::Map<const RowVector<Scalar>>(b.data(), b.size());
  return log_softmax_rows(Matrix<double>(logits.template cast<double>()));
}

template <typename Scalar>
std::vector<int> Transformer<Scalar>::greedy_decode(std::span<const int> x, int max_len) const {
  if (max_len <= 0) return {};
  const Matrix<Scalar> memory = encode(x, 0);
  return greedy_search(
      [&](std::span<const std::vector<int>> prefixes) { return next_token_log_probs(memory, prefixes); },
      max_len, config_.eos_id);
}

template <typename Scalar>
std::vector<int> Transformer<Scalar>::beam_decode(std::span<const int> x, int width, int max_len) const {
  if (max_len <= 0) return {};
  const Matrix<Scalar> memory = encode(x, 0);
  return beam_search(
      [&](std::span<const std::vector<int>> prefixes) { return next_token_log_probs(memory, prefixes); },
      width, max_len, config_.eos_id);
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace posrep
