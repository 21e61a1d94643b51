#pragma once

#include "posrep/analysis.hpp"
#include "posrep/bleu.hpp"
#include "posrep/evaluate.hpp"
#include "posrep/model.hpp"
#include "posrep/tasks.hpp"
#include "posrep/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace posrep {

// Bad configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  // Comma-separated subset of vanilla, extrapolate, interpolate.
  std::string split = "vanilla";
  int train_pairs = 50000;
  int valid_pairs = 1000;
  int test_pairs = 1000;
  int l_train = 20;
  int n_concat = 5;
};

struct EvalConfig {
  std::string corpus;
  DecodeOptions decode;
  int bucket_width = 5;
  BleuSmoothing smoothing = BleuSmoothing::none;
};

struct AnalysisConfig {
  std::string probe = "similarity";
  std::string corpus;
  std::string train_corpus;  // frequencies for the win-ratio probe
  std::vector<int> offsets{0, 10, 25, 50};
  int sequences = 10;
  int pos_bucket_width = 5;
  std::vector<std::int64_t> freq_edges = default_frequency_edges();
  DecodeOptions decode{DecodeOptions::Kind::beam, 4};
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "out";
  int jobs = 1;
  TaskSpec task;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::string train_corpus;
  EvalConfig eval;
  AnalysisConfig analysis;

  // Pushes the run seed and task vocabulary into the module configs and validates them.
  void resolve();
};

// `key = value` lines under [section] headers; '#' starts a comment.
// Unknown sections or keys throw ConfigError.
void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source = "config");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// Sets one value addressed as "section.key" (or "key" for the [run] section).
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// Every key with its effective value, readable by apply_config_text.
void write_resolved_config(std::ostream& out, const RunConfig& cfg);

std::vector<int> parse_int_list(std::string_view text);

}  // namespace posrep
