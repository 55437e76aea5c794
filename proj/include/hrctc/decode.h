#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hrctc/tensor.h"

namespace hrctc {

// Per-frame log posteriors over K+1 labels (blank = 0).
struct Posteriorgram {
  std::string utterance_id;
  Tensor log_post;
};

struct Hypothesis {
  std::vector<int> tokens;  // no blanks
  double score = 0.0;
};

// score[t][k] = log_post[t][k] - alpha * log(prior[k]). Rows are not
// renormalized.
Tensor prior_normalize(const Tensor& log_post, std::span<const double> prior, double alpha = 1.0);

// Per-frame argmax (lowest id wins ties), then collapse. The score is the
// sum of the chosen per-frame scores.
Hypothesis greedy_decode(const Tensor& scores);

inline constexpr std::size_t kUnboundedBeam = std::numeric_limits<std::size_t>::max();

// CTC prefix beam search over per-frame label scores (log domain). Each
// prefix carries separate blank-ending and label-ending scores. Returns the
// surviving prefixes sorted by score (ties: lexicographically smaller prefix
// first). With an unbounded beam and log posteriors as input, each score is
// the exact log p(prefix | X).
std::vector<Hypothesis> prefix_beam_decode(const Tensor& scores, std::size_t beam_width);

// Convenience overload applying prior normalization first.
std::vector<Hypothesis> prefix_beam_decode(const Posteriorgram& pg, std::size_t beam_width,
                                           std::span<const double> prior, double alpha);

struct EditStats {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double rate() const { return static_cast<double>(errors()) / static_cast<double>(ref_length); }
  EditStats& operator+=(const EditStats& other);
};

// Unit-cost Levenshtein alignment of hyp against ref. Throws ArgumentError on
// an empty reference.
EditStats token_error_rate(std::span<const int> hyp, std::span<const int> ref);

// Alignment rendered as three aligned text lines (REF, HYP, and an op line
// using S/D/I markers).
std::string render_alignment(std::span<const int> hyp, std::span<const int> ref,
                             const std::vector<std::string>& symbols);

}  // namespace hrctc
