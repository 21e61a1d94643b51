#pragma once

#include "posrep/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace posrep {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, little-endian throughout:
//   "PRLB", u32 version,
//   u32 metadata byte length, UTF-8 "key=value\n" lines,
//   u32 tensor count, then per tensor:
//     u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 data[prod(dims)].
struct Checkpoint {
  Metadata metadata;
  ParameterList<float> tensors;

  std::map<std::string, std::string> metadata_map() const;
  std::string get(const std::string& key) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model config plus training step, as written by the trainer.
Checkpoint make_checkpoint(const Transformer<float>& model, std::int64_t step);
Transformer<float> load_model(const Checkpoint& ckpt);

// Elementwise mean of the last `last_m` checkpoints. Names and shapes must
// agree; metadata is taken from the last one.
Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints, int last_m);
Checkpoint average_checkpoints(std::span<const std::filesystem::path> paths, int last_m);

}  // namespace posrep
