#include "posrep/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace posrep {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

// shortest text that reads back to the same double
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define POSREP_INT(sec, name, member)                                                            \
  Field {                                                                                        \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(v, name); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                              \
  }
#define POSREP_DOUBLE(sec, name, member)                                                            \
  Field {                                                                                           \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(v, name); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }                                     \
  }
#define POSREP_STRING(sec, name, member)                                                    \
  Field {                                                                                   \
    sec, name, [](RunConfig& c, const std::string& v) { c.member = v; },                    \
        [](const RunConfig& c) { return c.member; }                                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"run", "seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v, "seed"); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      POSREP_STRING("run", "out", out),
      POSREP_INT("run", "jobs", jobs),

      {"task", "kind", [](RunConfig& c, const std::string& v) { c.task.kind = parse_task_kind(v); },
       [](const RunConfig& c) { return to_string(c.task.kind); }},
      POSREP_INT("task", "vocab_size", task.vocab_size),
      POSREP_INT("task", "min_length", task.min_length),
      POSREP_INT("task", "max_length", task.max_length),
      POSREP_DOUBLE("task", "zipf_exponent", task.zipf_exponent),

      POSREP_STRING("data", "split", data.split),
      POSREP_INT("data", "train_pairs", data.train_pairs),
      POSREP_INT("data", "valid_pairs", data.valid_pairs),
      POSREP_INT("data", "test_pairs", data.test_pairs),
      POSREP_INT("data", "l_train", data.l_train),
      POSREP_INT("data", "n_concat", data.n_concat),

      POSREP_INT("model", "layers", model.layers),
      POSREP_INT("model", "heads", model.heads),
      POSREP_INT("model", "d_model", model.d_model),
      POSREP_INT("model", "d_ff", model.d_ff),
      POSREP_DOUBLE("model", "dropout", model.dropout),
      POSREP_INT("model", "max_position", model.max_position),
      {"model", "scheme", [](RunConfig& c, const std::string& v) { c.model.scheme = PositionScheme::parse(v); },
       [](const RunConfig& c) { return c.model.scheme.to_string(); }},
      {"model", "pre_norm", [](RunConfig& c, const std::string& v) { c.model.pre_norm = parse_bool(v, "pre_norm"); },
       [](const RunConfig& c) { return std::string(c.model.pre_norm ? "true" : "false"); }},
      {"model", "share_rpe",
       [](RunConfig& c, const std::string& v) { c.model.share_rpe = parse_bool(v, "share_rpe"); },
       [](const RunConfig& c) { return std::string(c.model.share_rpe ? "true" : "false"); }},

      POSREP_STRING("train", "corpus", train_corpus),
      POSREP_INT("train", "steps", train.steps),
      POSREP_INT("train", "batch_tokens", train.batch_tokens),
      POSREP_INT("train", "warmup", train.warmup),
      POSREP_DOUBLE("train", "lr_factor", train.lr_factor),
      POSREP_DOUBLE("train", "label_smoothing", train.label_smoothing),
      POSREP_INT("train", "checkpoint_every", train.checkpoint_every),
      POSREP_INT("train", "average_last", train.average_last),
      POSREP_INT("train", "shuffle_window", train.shuffle_window),

      POSREP_STRING("eval", "corpus", eval.corpus),
      {"eval", "decode", [](RunConfig& c, const std::string& v) { c.eval.decode = DecodeOptions::parse(v); },
       [](const RunConfig& c) { return c.eval.decode.to_string(); }},
      POSREP_INT("eval", "bucket_width", eval.bucket_width),
      {"eval", "smoothing",
       [](RunConfig& c, const std::string& v) {
         if (v == "none") {
           c.eval.smoothing = BleuSmoothing::none;
         } else if (v == "exp") {
           c.eval.smoothing = BleuSmoothing::exp;
         } else {
           throw ConfigError("'smoothing': expected none or exp, got '" + v + "'");
         }
       },
       [](const RunConfig& c) { return std::string(c.eval.smoothing == BleuSmoothing::none ? "none" : "exp"); }},

      {"analysis", "probe",
       [](RunConfig& c, const std::string& v) {
         if (v != "similarity" && v != "swapped" && v != "winratio") {
           throw ConfigError("'probe': expected similarity, swapped or winratio, got '" + v + "'");
         }
         c.analysis.probe = v;
       },
       [](const RunConfig& c) { return c.analysis.probe; }},
      POSREP_STRING("analysis", "corpus", analysis.corpus),
      POSREP_STRING("analysis", "train_corpus", analysis.train_corpus),
      {"analysis", "offsets", [](RunConfig& c, const std::string& v) { c.analysis.offsets = parse_int_list(v); },
       [](const RunConfig& c) { return join(c.analysis.offsets); }},
      POSREP_INT("analysis", "sequences", analysis.sequences),
      POSREP_INT("analysis", "pos_bucket_width", analysis.pos_bucket_width),
      {"analysis", "freq_edges",
       [](RunConfig& c, const std::string& v) {
         const auto xs = parse_int_list(v);
         c.analysis.freq_edges.assign(xs.begin(), xs.end());
       },
       [](const RunConfig& c) { return join(c.analysis.freq_edges); }},
      {"analysis", "decode", [](RunConfig& c, const std::string& v) { c.analysis.decode = DecodeOptions::parse(v); },
       [](const RunConfig& c) { return c.analysis.decode.to_string(); }},
  };
  return table;
}

#undef POSREP_INT
#undef POSREP_DOUBLE
#undef POSREP_STRING

void set_field(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  bool known_section = false;
  for (const auto& f : fields()) {
    if (f.section != section) continue;
    known_section = true;
    if (f.key != key) continue;
    try {
      f.set(cfg, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("[" + section + "] " + key + ": " + e.what());
    }
    return;
  }
  if (!known_section) throw ConfigError("unknown section [" + section + "]");
  throw ConfigError("unknown key '" + key + "' in [" + section + "]");
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) out.push_back(parse_number<int>(trim(item), "list"));
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

void RunConfig::resolve() {
  try {
    task.seed = seed;
    train.seed = seed;
    model.src_vocab = task.vocab_size;
    model.tgt_vocab = task.vocab_size;
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    task.validate();
    model.validate();
    train.validate();
    if (data.train_pairs < 0 || data.valid_pairs < 0 || data.test_pairs < 0) {
      throw ConfigError("data: pair counts must be >= 0");
    }
    if (data.n_concat < 2) throw ConfigError("data: n_concat must be >= 2");
    if (data.l_train < 1) throw ConfigError("data: l_train must be >= 1");
    if (eval.bucket_width < 1) throw ConfigError("eval: bucket_width must be >= 1");
    if (analysis.sequences < 1) throw ConfigError("analysis: sequences must be >= 1");
    if (analysis.pos_bucket_width < 1) throw ConfigError("analysis: pos_bucket_width must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::string section = "run";
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    try {
      set_field(cfg, section, trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  apply_config_text(cfg, in, path.string());
}

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    set_field(cfg, "run", dotted_key, value);
  } else {
    set_field(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
  }
}

void write_resolved_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
}

}  // namespace posrep
