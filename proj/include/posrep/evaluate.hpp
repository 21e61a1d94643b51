#pragma once

#include "posrep/bleu.hpp"
#include "posrep/model.hpp"
#include "posrep/tasks.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace posrep {

struct DecodeOptions {
  enum class Kind { greedy, beam };
  Kind kind = Kind::greedy;
  int width = 1;

  // "greedy" or "beam:<width>".
  static DecodeOptions parse(std::string_view text);
  std::string to_string() const;
};

// Maximum output length used when decoding a source of length n.
inline int decode_limit(std::size_t source_length) { return 2 * static_cast<int>(source_length) + 10; }

struct BucketRow {
  int lo = 0;
  int hi = 0;
  std::int64_t count = 0;
  double bleu = 0.0;
  double token_acc = 0.0;
  double seq_acc = 0.0;
};

struct EvalReport {
  std::int64_t count = 0;
  double bleu = 0.0;
  double token_acc = 0.0;
  double seq_acc = 0.0;
  std::vector<BucketRow> buckets;  // by source length, ascending
};

// Positionwise agreement with the reference, over max(|hyp|, |ref|) slots.
struct TokenMatch {
  std::int64_t matches = 0;
  std::int64_t slots = 0;
};
TokenMatch token_match(std::span<const int> hypothesis, std::span<const int> reference);

// Lower edge of the width-w length bucket holding `length` (1-based: 1..w, w+1..2w, ...).
int bucket_lo(int length, int width);

std::vector<int> decode(const Transformer<float>& model, std::span<const int> source, const DecodeOptions& opts);
std::vector<std::vector<int>> decode_all(const Transformer<float>& model, const Corpus& corpus,
                                         const DecodeOptions& opts, int jobs = 1);

// Metrics for given hypotheses; bucketed by source length.
EvalReport score_outputs(const Corpus& corpus, std::span<const std::vector<int>> hypotheses, int bucket_width = 5,
                         BleuSmoothing smoothing = BleuSmoothing::none);

EvalReport evaluate(const Transformer<float>& model, const Corpus& corpus, const DecodeOptions& opts,
                    int bucket_width = 5, BleuSmoothing smoothing = BleuSmoothing::none, int jobs = 1);

// One summary line as a comment, then bucket_lo,bucket_hi,count,bleu,token_acc,seq_acc.
void write_eval_csv(std::ostream& out, const EvalReport& report);

}  // namespace posrep
