#pragma once

#include "posrep/checkpoint.hpp"
#include "posrep/model.hpp"
#include "posrep/tasks.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace posrep {

struct TrainConfig {
  int steps = 3000;
  // Upper bound on source + target tokens (EOS/BOS included) per batch.
  int batch_tokens = 1024;
  int warmup = 400;
  double lr_factor = 2.0;
  double label_smoothing = 0.1;
  int checkpoint_every = 75;
  int average_last = 10;
  std::uint64_t seed = 1;
  int shuffle_window = 1000;

  void validate() const;
};

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Transformer<float> final_model;  // mean of the last `average_last` checkpoints
  Transformer<float> last_model;
  std::vector<LossRecord> log;
  std::vector<std::filesystem::path> checkpoint_files;
};

struct TrainHooks {
  // Directory for ckpt_<step>.ckpt files; nothing is written when empty.
  std::filesystem::path checkpoint_dir;
  std::function<void(const LossRecord&)> on_step;
};

// Batches for one pass over `corpus`: indices are shuffled, sorted by length
// inside windows of `window` pairs, packed up to `batch_tokens`, and the batch
// order is shuffled again.
std::vector<std::vector<std::size_t>> make_batches(const Corpus& corpus, int batch_tokens, int window, Rng& rng);

// Per-sequence source and target offsets for one step. Two independent draws
// per pair, source first; all zero unless the scheme is SHAPE.
void sample_offsets(const PositionScheme& scheme, std::size_t pairs, Rng& rng, std::vector<int>& src,
                    std::vector<int>& tgt);

// Mean label-smoothed loss of `model` on a packed batch without dropout,
// with the given offsets. Gradients are accumulated when `backprop`.
template <typename Scalar>
double batch_loss(Transformer<Scalar>& model, const PackedBatch& batch, std::span<const int> src_shift,
                  std::span<const int> tgt_shift, double label_smoothing, bool backprop);

TrainResult train(Transformer<float> model, const Corpus& corpus, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& log);

}  // namespace posrep
