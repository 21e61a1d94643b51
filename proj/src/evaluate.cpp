#include "posrep/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace posrep {

DecodeOptions DecodeOptions::parse(std::string_view text) {
  if (text == "greedy") return {};
  constexpr std::string_view prefix = "beam:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto rest = text.substr(prefix.size());
    int w = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), w);
    if (ec != std::errc{} || ptr != rest.data() + rest.size() || w < 1) {
      throw std::invalid_argument("bad beam width in '" + std::string(text) + "'");
    }
    return {Kind::beam, w};
  }
  throw std::invalid_argument("unknown decoding '" + std::string(text) + "' (expected greedy or beam:<w>)");
}

std::string DecodeOptions::to_string() const {
  return kind == Kind::greedy ? "greedy" : "beam:" + std::to_string(width);
}

TokenMatch token_match(std::span<const int> hypothesis, std::span<const int> reference) {
  TokenMatch m;
  m.slots = static_cast<std::int64_t>(std::max(hypothesis.size(), reference.size()));
  const std::size_t n = std::min(hypothesis.size(), reference.size());
  for (std::size_t i = 0; i < n; ++i) m.matches += hypothesis[i] == reference[i];
  return m;
}

int bucket_lo(int length, int width) {
  if (width < 1) throw std::invalid_argument("bucket width must be >= 1");
  if (length < 1) return 1;
  return ((length - 1) / width) * width + 1;
}

std::vector<int> decode(const Transformer<float>& model, std::span<const int> source, const DecodeOptions& opts) {
  const int limit = decode_limit(source.size());
  if (opts.kind == DecodeOptions::Kind::greedy) return model.greedy_decode(source, limit);
  return model.beam_decode(source, opts.width, limit);
}

std::vector<std::vector<int>> decode_all(const Transformer<float>& model, const Corpus& corpus,
                                         const DecodeOptions& opts, int jobs) {
  std::vector<std::vector<int>> out(corpus.size());
  const std::size_t n = corpus.size();
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = decode(model, corpus[i].src, opts);
    return out;
  }
  // strided shards; each slot is written by exactly one thread
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = decode(model, corpus[i].src, opts);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

struct Accumulator {
  std::vector<TokenSeq> hyps, refs;
  TokenMatch tokens;
  std::int64_t exact = 0;

  void add(const std::vector<int>& hyp, const std::vector<int>& ref) {
    hyps.push_back(hyp);
    refs.push_back(ref);
    const auto m = token_match(hyp, ref);
    tokens.matches += m.matches;
    tokens.slots += m.slots;
    exact += hyp == ref;
  }
  std::int64_t count() const { return static_cast<std::int64_t>(hyps.size()); }
  double token_acc() const {
    return tokens.slots == 0 ? 1.0 : static_cast<double>(tokens.matches) / static_cast<double>(tokens.slots);
  }
  double seq_acc() const { return hyps.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(count()); }
};

}  // namespace

EvalReport score_outputs(const Corpus& corpus, std::span<const std::vector<int>> hypotheses, int bucket_width,
                         BleuSmoothing smoothing) {
  if (hypotheses.size() != corpus.size()) throw std::invalid_argument("score_outputs: size mismatch");
  Accumulator all;
  std::map<int, Accumulator> by_bucket;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    all.add(hypotheses[i], corpus[i].tgt);
    by_bucket[bucket_lo(static_cast<int>(corpus[i].src.size()), bucket_width)].add(hypotheses[i], corpus[i].tgt);
  }
  EvalReport r;
  r.count = all.count();
  r.bleu = corpus_bleu(all.hyps, all.refs, smoothing);
  r.token_acc = all.token_acc();
  r.seq_acc = all.seq_acc();
  for (const auto& [lo, acc] : by_bucket) {
    r.buckets.push_back({lo, lo + bucket_width - 1, acc.count(), corpus_bleu(acc.hyps, acc.refs, smoothing),
                         acc.token_acc(), acc.seq_acc()});
  }
  return r;
}

EvalReport evaluate(const Transformer<float>& model, const Corpus& corpus, const DecodeOptions& opts,
                    int bucket_width, BleuSmoothing smoothing, int jobs) {
  const auto hyps = decode_all(model, corpus, opts, jobs);
  return score_outputs(corpus, hyps, bucket_width, smoothing);
}

void write_eval_csv(std::ostream& out, const EvalReport& r) {
  out.precision(6);
  out << std::fixed;
  out << "# count=" << r.count << " bleu=" << r.bleu << " token_acc=" << r.token_acc << " seq_acc=" << r.seq_acc
      << '\n';
  out << "bucket_lo,bucket_hi,count,bleu,token_acc,seq_acc\n";
  for (const auto& b : r.buckets) {
    out << b.lo << ',' << b.hi << ',' << b.count << ',' << b.bleu << ',' << b.token_acc << ',' << b.seq_acc << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace posrep
