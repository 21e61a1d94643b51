#include "posrep/train.hpp"

#include "posrep/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>

namespace posrep {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (batch_tokens < 1) fail("batch_tokens must be >= 1");
  if (warmup < 1) fail("warmup must be >= 1");
  if (!(lr_factor > 0.0)) fail("lr_factor must be > 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) fail("label_smoothing must be in [0, 1)");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (average_last < 1) fail("average_last must be >= 1");
  if (steps > 0 && average_last > steps / checkpoint_every) fail("average_last exceeds steps / checkpoint_every");
  if (shuffle_window < 1) fail("shuffle_window must be >= 1");
}

std::vector<std::vector<std::size_t>> make_batches(const Corpus& corpus, int batch_tokens, int window, Rng& rng) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = rng.uniform_int(static_cast<std::uint32_t>(i - 1));
    std::swap(order[i - 1], order[j]);
  }
  auto cost = [&](std::size_t i) {
    return static_cast<int>(corpus[i].src.size() + corpus[i].tgt.size() + 2);
  };
  auto length = [&](std::size_t i) { return std::max(corpus[i].src.size(), corpus[i].tgt.size()); };

  std::vector<std::vector<std::size_t>> batches;
  const std::size_t w = static_cast<std::size_t>(window);
  for (std::size_t start = 0; start < order.size(); start += w) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + w));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return length(a) < length(b); });
    std::vector<std::size_t> current;
    int used = 0;
    for (auto it = first; it != last; ++it) {
      const int c = cost(*it);
      if (!current.empty() && used + c > batch_tokens) {
        batches.push_back(std::move(current));
        current.clear();
        used = 0;
      }
      current.push_back(*it);
      used += c;
    }
    if (!current.empty()) batches.push_back(std::move(current));
  }
  for (std::size_t i = batches.size(); i > 1; --i) {
    const auto j = rng.uniform_int(static_cast<std::uint32_t>(i - 1));
    std::swap(batches[i - 1], batches[j]);
  }
  return batches;
}

void sample_offsets(const PositionScheme& scheme, std::size_t pairs, Rng& rng, std::vector<int>& src,
                    std::vector<int>& tgt) {
  const ShapeConfig cfg{scheme.training_shift(), ShapeMode::training};
  src.assign(pairs, 0);
  tgt.assign(pairs, 0);
  if (cfg.max_shift == 0) return;
  for (std::size_t i = 0; i < pairs; ++i) {
    src[i] = sample_offset(rng, cfg);
    tgt[i] = sample_offset(rng, cfg);
  }
}

template <typename Scalar>
double batch_loss(Transformer<Scalar>& model, const PackedBatch& batch, std::span<const int> src_shift,
                  std::span<const int> tgt_shift, double label_smoothing, bool backprop) {
  Graph<Scalar> g(false);
  const Var logits = model.forward(g, batch, src_shift, tgt_shift, nullptr);
  const Var loss = cross_entropy_smoothed(g, logits, batch.tgt_out, label_smoothing, model.config().pad_id);
  if (backprop) g.backward(loss);
  return static_cast<double>(g.value(loss)(0, 0));
}

namespace {

PackedBatch pack(const Corpus& corpus, const std::vector<std::size_t>& idx, const ModelConfig& config) {
  std::vector<std::vector<int>> src, tgt;
  src.reserve(idx.size());
  tgt.reserve(idx.size());
  for (const std::size_t i : idx) {
    src.push_back(corpus[i].src);
    tgt.push_back(corpus[i].tgt);
  }
  return PackedBatch::build(src, tgt, config);
}

}  // namespace

TrainResult train(Transformer<float> model, const Corpus& corpus, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (cfg.steps > 0 && corpus.empty()) throw std::invalid_argument("train: empty corpus");
  // every position a shifted sequence can reach must exist in the table
  const std::size_t reach = static_cast<std::size_t>(mc.scheme.training_shift()) + 1;
  for (const auto& p : corpus) {
    if (mc.scheme.absolute() && std::max(p.src.size(), p.tgt.size()) + reach > static_cast<std::size_t>(mc.max_position)) {
      throw std::invalid_argument("train: pair of length " + std::to_string(std::max(p.src.size(), p.tgt.size())) +
                                  " with max shift " + std::to_string(reach - 1) + " exceeds max_position " +
                                  std::to_string(mc.max_position));
    }
    for (const int t : p.src) {
      if (t < 0 || t >= mc.src_vocab) throw std::invalid_argument("train: source id outside model vocabulary");
    }
    for (const int t : p.tgt) {
      if (t < 0 || t >= mc.tgt_vocab) throw std::invalid_argument("train: target id outside model vocabulary");
    }
  }

  Rng batch_rng = Rng::for_purpose(cfg.seed, "batching");
  Rng offset_rng = Rng::for_purpose(cfg.seed, "offsets");
  Rng dropout_rng = Rng::for_purpose(cfg.seed, "dropout");
  auto opt = OptimizerState<float>::for_parameters(model.parameters());

  std::vector<LossRecord> log;
  std::deque<Checkpoint> recent;
  std::vector<std::filesystem::path> files;
  std::vector<std::vector<std::size_t>> epoch;
  std::size_t cursor = 0;
  std::vector<int> src_shift, tgt_shift;

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    if (cursor == epoch.size()) {
      epoch = make_batches(corpus, cfg.batch_tokens, cfg.shuffle_window, batch_rng);
      cursor = 0;
    }
    const PackedBatch batch = pack(corpus, epoch[cursor++], mc);
    sample_offsets(mc.scheme, batch.size(), offset_rng, src_shift, tgt_shift);

    zero_grads(model.parameters());
    Graph<float> g(true);
    const Var logits = model.forward(g, batch, src_shift, tgt_shift, &dropout_rng);
    const Var loss = cross_entropy_smoothed(g, logits, batch.tgt_out, cfg.label_smoothing, mc.pad_id);
    const double loss_value = g.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw NumericalError("training diverged: loss is " + std::to_string(loss_value) + " at step " +
                           std::to_string(step));
    }
    g.backward(loss);
    const double lr = noam_lr(step, mc.d_model, cfg.warmup, cfg.lr_factor);
    adam_step(opt, model.parameters(), lr);

    const LossRecord rec{step, lr, loss_value};
    log.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);

    if (step % cfg.checkpoint_every == 0) {
      recent.push_back(make_checkpoint(model, step));
      if (!hooks.checkpoint_dir.empty()) {
        const auto path = hooks.checkpoint_dir / ("ckpt_" + std::to_string(step) + ".ckpt");
        write_checkpoint(path, recent.back());
        files.push_back(path);
      }
      while (recent.size() > static_cast<std::size_t>(cfg.average_last)) recent.pop_front();
    }
  }
  for (auto& p : model.parameters()) p.tensor.drop_grad();

  TrainResult result{model, model, std::move(log), std::move(files)};
  if (!recent.empty()) {
    const std::vector<Checkpoint> snaps(recent.begin(), recent.end());
    const int m = std::min<int>(cfg.average_last, static_cast<int>(snaps.size()));
    result.final_model = load_model(average_checkpoints(std::span<const Checkpoint>(snaps), m));
  }
  return result;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& log) {
  out << "step,lr,loss\n";
  out.precision(9);
  for (const auto& r : log) out << r.step << ',' << r.lr << ',' << r.loss << '\n';
}

template double batch_loss(Transformer<float>&, const PackedBatch&, std::span<const int>, std::span<const int>,
                           double, bool);
template double batch_loss(Transformer<double>&, const PackedBatch&, std::span<const int>, std::span<const int>,
                           double, bool);

}  // namespace posrep
