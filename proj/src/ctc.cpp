#include "hrctc/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hrctc/error.h"

namespace hrctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxBruteForcePaths = 1000000;

void check_labels(std::span<const int> labels, std::size_t num_outputs) {
  if (labels.empty()) throw ArgumentError("CTC needs a non-empty label sequence");
  for (int id : labels) {
    if (id <= kBlank || static_cast<std::size_t>(id) >= num_outputs) {
      throw ArgumentError("label id " + std::to_string(id) + " outside [1, " +
                          std::to_string(num_outputs - 1) + "]");
    }
  }
}

void check_feasible(std::size_t frames, std::span<const int> labels) {
  const std::size_t needed = min_frames(labels);
  if (frames < needed) {
    throw InfeasibleError("CTC infeasible: " + std::to_string(frames) + " frames for " +
                          std::to_string(labels.size()) + " labels needing " +
                          std::to_string(needed));
  }
}

}  // namespace

std::vector<int> expand(std::span<const int> labels) {
  if (labels.empty()) throw ArgumentError("cannot expand an empty label sequence");
  std::vector<int> out;
  out.reserve(2 * labels.size() + 1);
  out.push_back(kBlank);
  for (int id : labels) {
    out.push_back(id);
    out.push_back(kBlank);
  }
  return out;
}

std::vector<int> collapse(std::span<const int> path) {
  std::vector<int> out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

std::size_t min_frames(std::span<const int> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double lse = logsumexp(row);
    for (double& v : row) v -= lse;
  }
  return out;
}

CtcLattice ctc_lattice(const Tensor& log_probs, std::span<const int> labels) {
  const std::size_t frames = log_probs.rows();
  if (frames == 0) throw ArgumentError("CTC needs at least one frame");
  check_labels(labels, log_probs.cols());
  check_feasible(frames, labels);

  const std::vector<int> ext = expand(labels);
  const std::size_t states = ext.size();
  // A transition s-2 -> s skips a blank; only allowed between distinct labels.
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };

  CtcLattice lat;
  lat.log_alpha = Tensor::matrix(frames, states, kNegInf);
  lat.log_beta = Tensor::matrix(frames, states, kNegInf);
  Tensor& alpha = lat.log_alpha;
  Tensor& beta = lat.log_beta;

  alpha(0, 0) = log_probs(0, ext[0]);
  if (states > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      if (acc != kNegInf) alpha(t, s) = acc + log_probs(t, ext[s]);
    }
  }

  beta(frames - 1, states - 1) = 0.0;
  beta(frames - 1, states - 2) = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = beta(t + 1, s) + log_probs(t + 1, ext[s]);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1) + log_probs(t + 1, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2)) {
        acc = log_add(acc, beta(t + 1, s + 2) + log_probs(t + 1, ext[s + 2]));
      }
      beta(t, s) = acc;
    }
  }

  lat.log_likelihood = log_add(alpha(frames - 1, states - 1), alpha(frames - 1, states - 2));
  if (!std::isfinite(lat.log_likelihood)) {
    throw InfeasibleError("CTC: no alignment has non-zero probability");
  }
  return lat;
}

CtcResult ctc_loss(const Tensor& logits, std::span<const int> labels) {
  const Tensor log_probs = log_softmax_rows(logits);
  const CtcLattice lat = ctc_lattice(log_probs, labels);
  const std::vector<int> ext = expand(labels);

  CtcResult result;
  result.loss = -lat.log_likelihood;
  result.grad_logits = Tensor::matrix(logits.rows(), logits.cols());
  // d loss / d logit(t,k) = p_t(k) - sum_{s: ext[s]=k} occupancy(t,s)
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      result.grad_logits(t, k) = std::exp(log_probs(t, k));
    }
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const double log_occ = lat.log_alpha(t, s) + lat.log_beta(t, s) - lat.log_likelihood;
      if (log_occ == kNegInf) continue;
      result.grad_logits(t, static_cast<std::size_t>(ext[s])) -= std::exp(log_occ);
    }
  }
  return result;
}

Var ctc_loss(Var logits, std::span<const int> labels) {
  CtcResult res = ctc_loss(logits.value(), labels);
  Tape& tape = *logits.tape();
  Var ins[] = {logits};
  return tape.record(ins, Tensor::scalar(res.loss),
                     [grad = std::move(res.grad_logits)](const Tensor& g,
                                                         std::span<Tensor* const> gin) {
                       const double gv = g.item();
                       for (std::size_t i = 0; i < grad.size(); ++i) {
                         gin[0]->data()[i] += gv * grad.data()[i];
                       }
                     });
}

double brute_force_loss(const Tensor& logits, std::span<const int> labels) {
  const std::size_t frames = logits.rows(), outputs = logits.cols();
  check_labels(labels, outputs);
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) {
    paths *= static_cast<double>(outputs);
    if (paths > static_cast<double>(kMaxBruteForcePaths)) {
      throw ArgumentError("brute_force_loss: (K+1)^T exceeds 1e6 paths");
    }
  }

  const Tensor log_probs = log_softmax_rows(logits);
  const std::vector<int> target(labels.begin(), labels.end());
  std::vector<int> path(frames, 0);
  double total = kNegInf;
  for (;;) {
    if (collapse(path) == target) {
      double lp = 0.0;
      for (std::size_t t = 0; t < frames; ++t) lp += log_probs(t, static_cast<std::size_t>(path[t]));
      total = log_add(total, lp);
    }
    std::size_t t = 0;
    while (t < frames && ++path[t] == static_cast<int>(outputs)) path[t++] = 0;
    if (t == frames) break;
  }
  if (total == kNegInf) throw InfeasibleError("brute_force_loss: no path collapses to the labels");
  return -total;
}

std::vector<double> label_prior(const std::vector<LabelSequence>& labels, std::size_t num_outputs) {
  constexpr double kFloor = 1e-8;
  if (labels.empty()) throw ArgumentError("label_prior needs at least one utterance");
  if (num_outputs < 2) throw ArgumentError("label_prior needs at least two outputs");
  std::vector<double> counts(num_outputs, 0.0);
  for (const auto& seq : labels) {
    for (int id : seq.tokens) {
      if (id <= kBlank || static_cast<std::size_t>(id) >= num_outputs) {
        throw ArgumentError("label id " + std::to_string(id) + " out of range in prior");
      }
      counts[static_cast<std::size_t>(id)] += 1.0;
    }
    counts[kBlank] += static_cast<double>(seq.tokens.size() + 1);
  }
  double total = 0.0;
  for (double c : counts) total += c;
  bool floored = false;
  for (double& c : counts) {
    c /= total;
    if (c < kFloor) {
      c = kFloor;
      floored = true;
    }
  }
  if (floored) {
    double renorm = 0.0;
    for (double c : counts) renorm += c;
    for (double& c : counts) c /= renorm;
  }
  return counts;
}

}  // namespace hrctc
