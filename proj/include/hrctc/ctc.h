#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hrctc/autodiff.h"
#include "hrctc/frontend.h"
#include "hrctc/tensor.h"

namespace hrctc {

// Blank-augmented labels: blank, y1, blank, y2, ..., yL, blank (2L+1 ids).
std::vector<int> expand(std::span<const int> labels);

// Merges adjacent repeats, then drops blanks.
std::vector<int> collapse(std::span<const int> path);

// Fewest frames that can emit `labels`: L plus one per adjacent repeat.
std::size_t min_frames(std::span<const int> labels);

// Row-wise log-softmax.
Tensor log_softmax_rows(const Tensor& logits);

struct CtcResult {
  double loss = 0.0;   // -log p(Y|X) in nats
  Tensor grad_logits;  // d loss / d logits, T x (K+1)
};

// Log-space forward and backward variables over the augmented states.
// log_alpha(t, s) includes the emission at t; log_beta(t, s) covers frames
// after t only, so logsumexp_s(log_alpha(t, s) + log_beta(t, s)) is
// log p(Y|X) for every t.
struct CtcLattice {
  Tensor log_alpha;  // T x (2L+1)
  Tensor log_beta;   // T x (2L+1)
  double log_likelihood = 0.0;
};

CtcLattice ctc_lattice(const Tensor& log_probs, std::span<const int> labels);

// Negative log-likelihood of `labels` under softmax(logits) and its exact
// gradient with respect to the logits. Throws InfeasibleError when the
// utterance has too few frames for the labels.
CtcResult ctc_loss(const Tensor& logits, std::span<const int> labels);

// Taped version: a scalar node whose backward uses CtcResult::grad_logits.
Var ctc_loss(Var logits, std::span<const int> labels);

// Direct enumeration of all (K+1)^T paths. Guarded to at most 1e6 paths.
double brute_force_loss(const Tensor& logits, std::span<const int> labels);

// Label frequencies over the blank-augmented training targets, floored at
// 1e-8 and renormalized. Index 0 is the blank.
std::vector<double> label_prior(const std::vector<LabelSequence>& labels, std::size_t num_outputs);

}  // namespace hrctc
