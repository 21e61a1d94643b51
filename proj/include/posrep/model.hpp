#pragma once

#include "posrep/attention.hpp"
#include "posrep/autograd.hpp"
#include "posrep/position.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace posrep {

// Reserved token ids shared by both vocabularies; content ids start after them.
struct SpecialTokens {
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int sep = 3;
  static constexpr int first_content = 4;
};

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int src_vocab = 64;
  int tgt_vocab = 64;
  PositionScheme scheme;
  double dropout = 0.1;
  int max_position = 128;
  int pad_id = SpecialTokens::pad;
  int bos_id = SpecialTokens::bos;
  int eos_id = SpecialTokens::eos;
  int sep_id = SpecialTokens::sep;
  bool pre_norm = false;
  // One relative table per stack (encoder, decoder) shared by all layers;
  // when false every layer owns its tables. Heads always share.
  bool share_rpe = true;

  void validate() const;
  Metadata to_metadata() const;
  static ModelConfig from_metadata(const std::map<std::string, std::string>& kv);
};

// Names of every parameter for a configuration, in canonical order.
std::vector<std::string> parameter_names(const ModelConfig& config);

// Sequences packed back to back without padding. Sources get EOS appended;
// the decoder reads BOS + target and predicts target + EOS.
struct PackedBatch {
  std::vector<int> src_ids;
  std::vector<int> tgt_in;
  std::vector<int> tgt_out;
  std::vector<Index> src_begin;
  std::vector<Index> src_len;
  std::vector<Index> tgt_begin;
  std::vector<Index> tgt_len;

  std::size_t size() const { return src_begin.size(); }

  static PackedBatch build(std::span<const std::vector<int>> sources,
                           std::span<const std::vector<int>> targets, const ModelConfig& config);
};

// Encoder-decoder Transformer whose only position-dependent code is selected by
// ModelConfig::scheme: absolute schemes add sinusoidal rows at the input,
// the relative scheme adds clipped-distance tables inside self-attention.
template <typename Scalar>
class Transformer {
 public:
  Transformer(const ModelConfig& config, std::uint64_t seed);
  Transformer(const ModelConfig& config, ParameterList<Scalar> params);

  const ModelConfig& config() const { return config_; }
  ParameterList<Scalar>& parameters() { return params_; }
  const ParameterList<Scalar>& parameters() const { return params_; }
  Index parameter_count() const;

  template <typename To>
  Transformer<To> cast() const {
    ParameterList<To> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back({p.name, p.tensor.template cast<To>()});
    return Transformer<To>(config_, std::move(out));
  }

  // Differentiable forward over a packed batch. Returns logits with one row
  // per entry of batch.tgt_out. Shifts are per-sequence position offsets and
  // are ignored under the relative scheme. Dropout draws from `dropout_rng`
  // when the graph is in training mode.
  Var forward(Graph<Scalar>& g, const PackedBatch& batch, std::span<const int> src_shift,
              std::span<const int> tgt_shift, Rng* dropout_rng);

  // Encoder states for exactly `ids` (no EOS appended), positions starting at k_src.
  Matrix<Scalar> encode_ids(std::span<const int> ids, int k_src) const;
  // Encoder states for source x followed by EOS: (|x| + 1) rows.
  Matrix<Scalar> encode(std::span<const int> x, int k_src) const;

  // Logits [(|y| + 1) x tgt_vocab] for BOS + y.
  Matrix<Scalar> forward_teacher_forced(std::span<const int> x, std::span<const int> y, int k_src,
                                        int k_tgt) const;

  // Log-probabilities of the next token after each prefix (BOS implied).
  Matrix<double> next_token_log_probs(const Matrix<Scalar>& memory,
                                      std::span<const std::vector<int>> prefixes) const;

  std::vector<int> greedy_decode(std::span<const int> x, int max_len) const;
  std::vector<int> beam_decode(std::span<const int> x, int width, int max_len) const;

 private:
  struct AttnIdx {
    int wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FfnIdx {
    int w1, b1, w2, b2;
  };
  struct NormIdx {
    int gamma, beta;
  };
  struct RelIdx {
    int key = -1, value = -1;
  };
  struct EncoderLayerIdx {
    AttnIdx self;
    NormIdx norm1, norm2;
    FfnIdx ffn;
    RelIdx rel;
  };
  struct DecoderLayerIdx {
    AttnIdx self, cross;
    NormIdx norm1, norm2, norm3;
    FfnIdx ffn;
    RelIdx rel;
  };
  struct Layout {
    int src_embed = -1, tgt_embed = -1, out_w = -1, out_b = -1;
    NormIdx enc_final{-1, -1}, dec_final{-1, -1};
    std::vector<EncoderLayerIdx> encoder;
    std::vector<DecoderLayerIdx> decoder;
  };

  // Maps a parameter index to a graph node (trainable or frozen).
  using Binder = std::function<Var(int)>;

  static std::pair<ParameterList<Scalar>, Layout> make_layout(const ModelConfig& config);
  void initialize(std::uint64_t seed);

  Var embed(Graph<Scalar>& g, const Binder& bind, int table, std::span<const int> ids,
            std::span<const Index> begin, std::span<const Index> len, std::span<const int> shift,
            Rng* dropout_rng) const;
  Var attention_block(Graph<Scalar>& g, const Binder& bind, const AttnIdx& idx, Var xq, Var xkv,
                      std::span<const AttentionSegment> segments, bool causal,
                      const RelativeTables& rel) const;
  Var ffn_block(Graph<Scalar>& g, const Binder& bind, const FfnIdx& idx, Var x) const;
  Var norm(Graph<Scalar>& g, const Binder& bind, const NormIdx& idx, Var x) const;
  RelativeTables relative(const Binder& bind, const RelIdx& idx) const;

  Var encoder_stack(Graph<Scalar>& g, const Binder& bind, std::span<const int> ids,
                    std::span<const Index> begin, std::span<const Index> len,
                    std::span<const int> shift, Rng* dropout_rng) const;
  Var decoder_stack(Graph<Scalar>& g, const Binder& bind, Var memory, std::span<const int> ids,
                    std::span<const Index> begin, std::span<const Index> len,
                    std::span<const int> shift, std::span<const AttentionSegment> cross_segments,
                    Rng* dropout_rng) const;
  Binder frozen_binder(Graph<Scalar>& g) const;

  ModelConfig config_;
  ParameterList<Scalar> params_;
  Layout layout_;
  SinusoidalTable<Scalar> table_;
};

}  // namespace posrep
