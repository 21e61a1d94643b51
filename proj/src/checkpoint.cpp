#include "posrep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace posrep {

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'R', 'L', 'B'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v = static_cast<std::uint16_t>(v | (b_[pos_ + i] << (8 * i)));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("checkpoint truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::map<std::string, std::string> Checkpoint::metadata_map() const {
  return {metadata.begin(), metadata.end()};
}

std::string Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  throw FormatError("checkpoint metadata has no '" + key + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (const auto m : kMagic) w.u8(m);
  w.u32(kCheckpointVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint metadata entry '" + k + "' contains a separator");
    }
    meta += k + "=" + v + "\n";
  }
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& p : ckpt.tensors) {
    if (p.name.size() > 0xffff) throw FormatError("tensor name too long: " + p.name);
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.raw(p.name);
    const auto& shape = p.tensor.shape();
    if (shape.size() > 0xff) throw FormatError("tensor rank too large: " + p.name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (const Index d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (const float f : p.tensor.values()) w.f32(f);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (const auto m : kMagic) {
    if (r.u8() != m) throw FormatError("not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const std::string meta = r.str(r.u32());
  std::size_t start = 0;
  while (start < meta.size()) {
    const auto end = meta.find('\n', start);
    if (end == std::string::npos) throw FormatError("checkpoint metadata line not terminated");
    const std::string line = meta.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint metadata line without '=': " + line);
    ckpt.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    start = end + 1;
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    if (rank == 0) throw FormatError("tensor '" + name + "' has rank 0");
    std::vector<Index> shape(rank);
    Index n = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension");
      n *= d;
    }
    Matrix<float> values(1, n);
    for (Index i = 0; i < n; ++i) values(0, i) = r.f32();
    ckpt.tensors.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Transformer<float>& model, std::int64_t step) {
  Checkpoint c;
  c.metadata = model.config().to_metadata();
  c.metadata.emplace_back("step", std::to_string(step));
  for (const auto& p : model.parameters()) c.tensors.push_back({p.name, Tensor<float>(p.tensor.shape(), p.tensor.matrix())});
  return c;
}

Transformer<float> load_model(const Checkpoint& ckpt) {
  ModelConfig config;
  try {
    config = ModelConfig::from_metadata(ckpt.metadata_map());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  try {
    return Transformer<float>(config, ckpt.tensors);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint tensors: ") + e.what());
  }
}

Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints, int last_m) {
  if (last_m < 1) throw std::invalid_argument("average_checkpoints: last_m must be >= 1");
  if (checkpoints.size() < static_cast<std::size_t>(last_m)) {
    throw std::invalid_argument("average_checkpoints: need " + std::to_string(last_m) + " checkpoints, have " +
                                std::to_string(checkpoints.size()));
  }
  const auto first = checkpoints.end() - last_m;
  Checkpoint out = checkpoints.back();
  std::vector<Matrix<double>> sums;
  for (const auto& p : out.tensors) sums.push_back(Matrix<double>::Zero(p.tensor.rows(), p.tensor.cols()));
  for (auto it = first; it != checkpoints.end(); ++it) {
    if (it->tensors.size() != out.tensors.size()) throw std::invalid_argument("average_checkpoints: tensor count mismatch");
    for (std::size_t t = 0; t < out.tensors.size(); ++t) {
      const auto& p = it->tensors[t];
      if (p.name != out.tensors[t].name || !p.tensor.same_shape(out.tensors[t].tensor)) {
        throw std::invalid_argument("average_checkpoints: tensor '" + p.name + "' does not match '" +
                                    out.tensors[t].name + "'");
      }
      sums[t] += p.tensor.matrix().cast<double>();
    }
  }
  for (std::size_t t = 0; t < out.tensors.size(); ++t) {
    out.tensors[t].tensor.matrix() = (sums[t] / static_cast<double>(last_m)).cast<float>();
  }
  return out;
}

Checkpoint average_checkpoints(std::span<const std::filesystem::path> paths, int last_m) {
  if (paths.size() < static_cast<std::size_t>(std::max(last_m, 1))) {
    throw std::invalid_argument("average_checkpoints: need " + std::to_string(last_m) + " checkpoint paths");
  }
  std::vector<Checkpoint> loaded;
  for (auto it = paths.end() - last_m; it != paths.end(); ++it) loaded.push_back(read_checkpoint(*it));
  return average_checkpoints(std::span<const Checkpoint>(loaded), last_m);
}

}  // namespace posrep
