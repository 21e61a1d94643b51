#include "posrep/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace posrep {

TaskKind parse_task_kind(std::string_view text) {
  if (text == "copy") return TaskKind::copy;
  if (text == "reverse") return TaskKind::reverse;
  if (text == "mapped-copy" || text == "mapped_copy") return TaskKind::mapped_copy;
  throw std::invalid_argument("unknown task kind '" + std::string(text) + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy:
      return "copy";
    case TaskKind::reverse:
      return "reverse";
    case TaskKind::mapped_copy:
      return "mapped-copy";
  }
  return "copy";
}

void TaskSpec::validate() const {
  if (min_length < 1 || max_length < min_length) throw std::invalid_argument("task: need 1 <= min_length <= max_length");
  if (content_vocab() < 1) throw std::invalid_argument("task: vocab_size must exceed the special tokens");
  if (!(zipf_exponent >= 0.0)) throw std::invalid_argument("task: zipf_exponent must be >= 0");
}

Metadata TaskSpec::to_metadata() const {
  std::ostringstream z;
  z.precision(17);
  z << zipf_exponent;
  return {{"kind", to_string(kind)},
          {"vocab_size", std::to_string(vocab_size)},
          {"min_length", std::to_string(min_length)},
          {"max_length", std::to_string(max_length)},
          {"zipf_exponent", z.str()},
          {"seed", std::to_string(seed)}};
}

std::vector<int> apply_task(TaskKind kind, std::span<const int> x, std::span<const int> permutation) {
  std::vector<int> y(x.begin(), x.end());
  switch (kind) {
    case TaskKind::copy:
      break;
    case TaskKind::reverse:
      std::reverse(y.begin(), y.end());
      break;
    case TaskKind::mapped_copy:
      for (int& t : y) {
        if (t < 0 || static_cast<std::size_t>(t) >= permutation.size()) {
          throw std::out_of_range("mapped-copy: token " + std::to_string(t) + " outside permutation");
        }
        t = permutation[static_cast<std::size_t>(t)];
      }
      break;
  }
  return y;
}

std::vector<int> content_permutation(const TaskSpec& spec) {
  std::vector<int> perm(static_cast<std::size_t>(spec.vocab_size));
  for (int i = 0; i < spec.vocab_size; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng::for_purpose(spec.seed, "permutation");
  const int first = SpecialTokens::first_content;
  for (int i = spec.vocab_size - 1; i > first; --i) {
    const int j = first + static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(i - first)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

ZipfSampler::ZipfSampler(int content_vocab, double exponent) {
  if (content_vocab < 1) throw std::invalid_argument("zipf: empty vocabulary");
  cdf_.resize(static_cast<std::size_t>(content_vocab));
  double total = 0.0;
  for (int r = 1; r <= content_vocab; ++r) {
    total += std::pow(static_cast<double>(r), -exponent);
    cdf_[static_cast<std::size_t>(r - 1)] = total;
  }
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

int ZipfSampler::sample(Rng& rng) const {
  const double u = rng.uniform_double();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return SpecialTokens::first_content + static_cast<int>(it - cdf_.begin());
}

double ZipfSampler::probability(int id) const {
  const int r = id - SpecialTokens::first_content;
  if (r < 0 || static_cast<std::size_t>(r) >= cdf_.size()) return 0.0;
  return cdf_[static_cast<std::size_t>(r)] - (r == 0 ? 0.0 : cdf_[static_cast<std::size_t>(r - 1)]);
}

TaskGenerator::TaskGenerator(TaskSpec spec)
    : spec_((spec.validate(), spec)),
      sampler_(spec_.content_vocab(), spec_.zipf_exponent),
      permutation_(content_permutation(spec_)) {}

SequencePair TaskGenerator::next(Rng& rng) const {
  const auto span = static_cast<std::uint32_t>(spec_.max_length - spec_.min_length);
  const int len = spec_.min_length + static_cast<int>(rng.uniform_int(span));
  SequencePair p;
  p.src.reserve(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) p.src.push_back(sampler_.sample(rng));
  p.tgt = apply_task(spec_.kind, p.src, permutation_);
  return p;
}

SequencePair gen_pair(const TaskSpec& spec, Rng& rng) { return TaskGenerator(spec).next(rng); }

Corpus gen_corpus(const TaskSpec& spec, std::size_t count, Rng& rng) {
  const TaskGenerator gen(spec);
  Corpus out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen.next(rng));
  return out;
}

Splits make_extrapolate_split(const Corpus& corpus, int l_train, std::size_t n_valid, std::size_t n_test) {
  if (n_valid + n_test > corpus.size()) throw std::invalid_argument("extrapolate split: corpus smaller than valid + test");
  Splits s;
  const std::size_t n_train = corpus.size() - n_valid - n_test;
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& p = corpus[i];
    if (static_cast<int>(p.src.size()) > l_train || static_cast<int>(p.tgt.size()) > l_train) continue;
    s.train.push_back(p);
  }
  s.valid.assign(corpus.begin() + static_cast<std::ptrdiff_t>(n_train),
                 corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), corpus.end());
  if (s.train.empty()) throw std::invalid_argument("extrapolate split: no training pair has length <= " + std::to_string(l_train));
  return s;
}

std::vector<std::vector<int>> split_on(std::span<const int> seq, int sep_id) {
  std::vector<std::vector<int>> parts(1);
  for (const int t : seq) {
    if (t == sep_id) {
      parts.emplace_back();
    } else {
      parts.back().push_back(t);
    }
  }
  return parts;
}

std::vector<int> join_with(std::span<const std::vector<int>> parts, int sep_id) {
  std::vector<int> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep_id);
    out.insert(out.end(), parts[i].begin(), parts[i].end());
  }
  return out;
}

std::vector<int> boundaries_of(std::span<const int> seq, int sep_id) {
  std::vector<int> b;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == sep_id) b.push_back(static_cast<int>(i));
  }
  return b;
}

Corpus make_interpolate_dataset(const Corpus& corpus, int n_concat, int sep_id) {
  if (n_concat < 2) throw std::invalid_argument("interpolate: n_concat must be >= 2");
  Corpus out;
  const std::size_t n = static_cast<std::size_t>(n_concat);
  for (std::size_t g = 0; g + n <= corpus.size(); g += n) {
    std::vector<std::vector<int>> xs, ys;
    for (std::size_t i = g; i < g + n; ++i) {
      if (!corpus[i].src_boundaries.empty()) throw std::invalid_argument("interpolate: input already concatenated");
      xs.push_back(corpus[i].src);
      ys.push_back(corpus[i].tgt);
    }
    SequencePair p;
    p.src = join_with(xs, sep_id);
    p.tgt = join_with(ys, sep_id);
    p.src_boundaries = boundaries_of(p.src, sep_id);
    p.tgt_boundaries = boundaries_of(p.tgt, sep_id);
    out.push_back(std::move(p));
  }
  return out;
}

SequencePair swap_first_to_end(const SequencePair& pair, int sep_id) {
  if (pair.src_boundaries.empty() || pair.tgt_boundaries.empty()) {
    throw std::invalid_argument("swap_first_to_end: pair is not a concatenation of sentences");
  }
  auto rotate = [sep_id](const std::vector<int>& seq) {
    auto parts = split_on(seq, sep_id);
    std::rotate(parts.begin(), parts.begin() + 1, parts.end());
    return join_with(parts, sep_id);
  };
  SequencePair out;
  out.src = rotate(pair.src);
  out.tgt = rotate(pair.tgt);
  out.src_boundaries = boundaries_of(out.src, sep_id);
  out.tgt_boundaries = boundaries_of(out.tgt, sep_id);
  return out;
}

std::vector<std::int64_t> target_token_counts(const Corpus& corpus, int vocab_size) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(vocab_size), 0);
  for (const auto& p : corpus) {
    for (const int t : p.tgt) {
      if (t >= 0 && t < vocab_size) ++counts[static_cast<std::size_t>(t)];
    }
  }
  return counts;
}

}  // namespace posrep
