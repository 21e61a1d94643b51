#include "posrep/commands.hpp"

#include "posrep/checkpoint.hpp"
#include "posrep/corpus_io.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace posrep {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("posrep");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("POSREP_LOG");
    const std::string level = env ? env : "info";
    l->set_level(level == "debug" ? spdlog::level::debug : spdlog::level::info);
    return l;
  }();
  return log;
}

void prepare_out(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  std::ofstream out(fs::path(cfg.out) / "resolved.conf");
  if (!out) throw std::runtime_error("cannot write " + (fs::path(cfg.out) / "resolved.conf").string());
  write_resolved_config(out, cfg);
}

CorpusFile load_corpus(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key + " is not set");
  if (!fs::exists(path)) throw ConfigError("corpus not found: " + path);
  return read_corpus(fs::path(path));
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  return read_checkpoint(path);
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
  logger()->info("wrote {}", path.string());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Corpus slice(const Corpus& c, std::size_t begin, std::size_t count) {
  return {c.begin() + static_cast<std::ptrdiff_t>(begin), c.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg) {
  bool extrapolate = false, interpolate = false;
  for (const auto& s : split_list(cfg.data.split)) {
    if (s == "extrapolate") {
      extrapolate = true;
    } else if (s == "interpolate") {
      interpolate = true;
    } else if (s != "vanilla") {
      throw ConfigError("unknown split '" + s + "'");
    }
  }
  prepare_out(cfg);
  const fs::path out(cfg.out);

  Rng rng = Rng::for_purpose(cfg.seed, "data");
  const auto n_train = static_cast<std::size_t>(cfg.data.train_pairs);
  const auto n_valid = static_cast<std::size_t>(cfg.data.valid_pairs);
  const auto n_test = static_cast<std::size_t>(cfg.data.test_pairs);
  const Corpus all = gen_corpus(cfg.task, n_train + n_valid + n_test, rng);

  auto emit = [&](const std::string& split, const std::string& prefix, const Splits& s) {
    const std::pair<const char*, const Corpus*> parts[] = {{"train", &s.train}, {"valid", &s.valid}, {"test", &s.test}};
    for (const auto& [name, corpus] : parts) {
      CorpusFile file{cfg.task.to_metadata(), *corpus};
      file.header.emplace_back("split", split);
      file.header.emplace_back("part", name);
      write_file(out / (prefix + name + ".txt"), [&](std::ostream& o) { write_corpus(o, file); });
    }
  };

  const Splits vanilla{slice(all, 0, n_train), slice(all, n_train, n_valid), slice(all, n_train + n_valid, n_test)};
  emit("vanilla", "", vanilla);
  if (extrapolate) emit("extrapolate", "extrapolate.", make_extrapolate_split(all, cfg.data.l_train, n_valid, n_test));
  if (interpolate) {
    const int n = cfg.data.n_concat;
    emit("interpolate", "interpolate.",
         {make_interpolate_dataset(vanilla.train, n, cfg.model.sep_id),
          make_interpolate_dataset(vanilla.valid, n, cfg.model.sep_id),
          make_interpolate_dataset(vanilla.test, n, cfg.model.sep_id)});
  }
}

void cmd_train(const RunConfig& cfg) {
  const CorpusFile corpus = load_corpus(cfg.train_corpus, "train.corpus");
  prepare_out(cfg);
  const fs::path out(cfg.out);
  Transformer<float> model(cfg.model, cfg.seed);
  logger()->info("model {} ({} parameters), {} training pairs", cfg.model.scheme.to_string(), model.parameter_count(),
                 corpus.pairs.size());

  TrainHooks hooks;
  hooks.checkpoint_dir = out;
  hooks.on_step = [](const LossRecord& r) {
    if (r.step % 100 == 0) {
      logger()->info("step {} lr {:.3e} loss {:.4f}", r.step, r.lr, r.loss);
    } else {
      logger()->debug("step {} lr {:.3e} loss {:.4f}", r.step, r.lr, r.loss);
    }
  };
  TrainResult result = [&] {
    try {
      return train(model, corpus.pairs, cfg.train, hooks);
    } catch (const NumericalError& e) {
      logger()->error("{}", e.what());
      throw;
    }
  }();
  write_file(out / "loss.csv", [&](std::ostream& o) { write_loss_csv(o, result.log); });
  write_checkpoint(out / "final.ckpt", make_checkpoint(result.final_model, cfg.train.steps));
  write_checkpoint(out / "last.ckpt", make_checkpoint(result.last_model, cfg.train.steps));
  logger()->info("wrote {} and {}", (out / "final.ckpt").string(), (out / "last.ckpt").string());
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint) {
  const Transformer<float> model = load_model(load_checkpoint(checkpoint));
  const CorpusFile corpus = load_corpus(cfg.eval.corpus, "eval.corpus");
  prepare_out(cfg);
  const EvalReport report =
      evaluate(model, corpus.pairs, cfg.eval.decode, cfg.eval.bucket_width, cfg.eval.smoothing, cfg.jobs);
  write_file(fs::path(cfg.out) / "eval.csv", [&](std::ostream& o) { write_eval_csv(o, report); });
  logger()->info("bleu {:.2f} token_acc {:.4f} seq_acc {:.4f} over {} pairs", report.bleu, report.token_acc,
                 report.seq_acc, report.count);
  return report;
}

void cmd_analyze(const RunConfig& cfg, const std::vector<fs::path>& checkpoints) {
  const auto& a = cfg.analysis;
  const std::size_t needed = a.probe == "winratio" ? 2 : 1;
  if (checkpoints.size() != needed) {
    throw ConfigError("probe " + a.probe + " needs " + std::to_string(needed) + " checkpoint(s), got " +
                      std::to_string(checkpoints.size()));
  }
  std::vector<Transformer<float>> models;
  for (const auto& p : checkpoints) models.push_back(load_model(load_checkpoint(p)));
  const CorpusFile corpus = load_corpus(a.corpus, "analysis.corpus");
  const fs::path out(cfg.out);

  if (a.probe == "similarity") {
    if (!models[0].config().scheme.absolute()) {
      throw ConfigError("offset similarity is undefined for " + models[0].config().scheme.to_string() +
                        ": relative positions have no absolute offset to shift");
    }
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(a.sequences), corpus.pairs.size());
    if (n == 0) throw ConfigError("analysis corpus is empty");
    std::vector<std::vector<int>> xs;
    std::string ids;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(corpus.pairs[i].src);
      ids += (i ? "," : "") + std::to_string(i);
    }
    logger()->info("similarity over sequences {}", ids);
    prepare_out(cfg);
    const auto m = offset_similarity(models[0], xs, a.offsets);
    write_file(out / "similarity.csv", [&](std::ostream& o) { write_similarity_csv(o, m); });
    write_file(out / "similarity.pgm", [&](std::ostream& o) { write_pgm(o, m.values); });
    logger()->info("mean off-diagonal similarity {:.4f}", mean_off_diagonal(m));
  } else if (a.probe == "swapped") {
    for (const auto& p : corpus.pairs) {
      if (p.src_boundaries.empty() || p.tgt_boundaries.empty()) {
        throw ConfigError("swapped probe needs a concatenated corpus; " + a.corpus + " has single-sentence pairs");
      }
    }
    prepare_out(cfg);
    const auto r = swapped_order_eval(models[0], corpus.pairs, a.decode, cfg.jobs);
    write_file(out / "swapped.csv", [&](std::ostream& o) { write_swapped_csv(o, r); });
    if (r.fallback_original + r.fallback_swapped > 0) {
      logger()->warn("proportional split used for {} original and {} swapped outputs", r.fallback_original,
                     r.fallback_swapped);
    }
    logger()->info("bleu original {:.2f} swapped {:.2f} drop {:.2f}", r.bleu_original, r.bleu_swapped, r.drop);
  } else {
    const CorpusFile train_corpus = load_corpus(a.train_corpus, "analysis.train_corpus");
    prepare_out(cfg);
    const int vocab = models[0].config().tgt_vocab;
    if (models[1].config().tgt_vocab != vocab) throw ConfigError("win ratio: checkpoints have different vocabularies");
    const auto counts = target_token_counts(train_corpus.pairs, vocab);
    const auto sa = tokenwise_scores(models[0], corpus.pairs);
    const auto sb = tokenwise_scores(models[1], corpus.pairs);
    const auto grid = win_ratio_grid(sa, sb, corpus.pairs, counts, a.pos_bucket_width, a.freq_edges);
    write_file(out / "winratio.csv", [&](std::ostream& o) { write_win_ratio_csv(o, grid); });
    write_file(out / "winratio.pgm", [&](std::ostream& o) { write_pgm(o, win_ratio_matrix(grid)); });
    if (const auto r = grid.total().ratio()) logger()->info("overall win ratio {:.4f}", *r);
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Position representation workbench"};
  app.require_subcommand(1);

  std::string config_path, scheme, out, decode, probe, offsets;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::vector<std::string> checkpoints;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file");
    sub->add_option("--seed", seed, "top-level seed");
    sub->add_option("--scheme", scheme, "ape | shape:K=<int> | rpe:limit=<int>");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", jobs, "decoding threads")->check(CLI::PositiveNumber);
  };
  auto* gen = app.add_subcommand("gen-data", "generate synthetic corpora");
  auto* tr = app.add_subcommand("train", "train a model");
  auto* ev = app.add_subcommand("eval", "decode and score a corpus");
  auto* an = app.add_subcommand("analyze", "run a position probe");
  for (auto* s : {gen, tr, ev, an}) common(s);
  for (auto* s : {ev, an}) {
    s->add_option("--decode", decode, "greedy | beam:<w>");
    s->add_option("checkpoints", checkpoints, "checkpoint files");
  }
  an->add_option("--probe", probe, "similarity | swapped | winratio");
  an->add_option("--offsets", offsets, "comma-separated offsets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    auto* sub = app.get_subcommands().front();
    if (sub->count("--seed")) cfg.seed = seed;
    if (!scheme.empty()) set_config_value(cfg, "model.scheme", scheme);
    if (!out.empty()) cfg.out = out;
    if (sub->count("--jobs")) cfg.jobs = jobs;
    if (!decode.empty()) {
      set_config_value(cfg, "eval.decode", decode);
      set_config_value(cfg, "analysis.decode", decode);
    }
    if (!probe.empty()) set_config_value(cfg, "analysis.probe", probe);
    if (!offsets.empty()) set_config_value(cfg, "analysis.offsets", offsets);
    cfg.resolve();

    if (sub == gen) {
      cmd_gen_data(cfg);
    } else if (sub == tr) {
      cmd_train(cfg);
    } else if (sub == ev) {
      if (checkpoints.size() != 1) throw ConfigError("eval needs exactly one checkpoint");
      cmd_eval(cfg, checkpoints.front());
    } else {
      cmd_analyze(cfg, {checkpoints.begin(), checkpoints.end()});
    }
    return kExitOk;
  } catch (const FormatError& e) {
    logger()->error("format error: {}", e.what());
    return kExitFormat;
  } catch (const NumericalError& e) {
    logger()->error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const ConfigError& e) {
    logger()->error("{}", e.what());
    return kExitConfig;
  } catch (const std::logic_error& e) {
    logger()->error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kExitIo;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace posrep
