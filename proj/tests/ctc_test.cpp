#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "test_util.h"

namespace hrctc {
namespace {

using testing::random_labels;
using testing::random_matrix;
using testing::rel_error;

using Labels = std::vector<int>;

// Independent enumeration oracle: walks every path with an odometer and
// collapses it inline.
double enumerate_probability(const Tensor& logits, const Labels& labels) {
  const Tensor probs = softmax_rows(logits);
  const std::size_t frames = logits.rows(), n = logits.cols();
  std::vector<std::size_t> path(frames, 0);
  double total = 0.0;
  while (true) {
    Labels out;
    int prev = -1;
    double p = 1.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const int k = static_cast<int>(path[t]);
      p *= probs(t, path[t]);
      if (k != 0 && k != prev) out.push_back(k);
      prev = k;
    }
    if (out == labels) total += p;
    std::size_t t = 0;
    while (t < frames && ++path[t] == n) path[t++] = 0;
    if (t == frames) break;
  }
  return total;
}

TEST(CtcTopology, ExpandInterleavesBlanks) {
  EXPECT_EQ(expand(Labels{1}), (Labels{0, 1, 0}));
  EXPECT_EQ(expand(Labels{2, 2, 3}), (Labels{0, 2, 0, 2, 0, 3, 0}));
  EXPECT_THROW(expand(Labels{}), ArgumentError);
}

TEST(CtcTopology, CollapseMergesThenDropsBlanks) {
  EXPECT_EQ(collapse(Labels{0, 1, 1, 0, 1, 2, 2, 0}), (Labels{1, 1, 2}));
  EXPECT_EQ(collapse(Labels{0, 0, 0}), (Labels{}));
  EXPECT_EQ(collapse(Labels{3}), (Labels{3}));
  EXPECT_EQ(collapse(Labels{}), (Labels{}));
  const Labels once = collapse(Labels{1, 0, 2, 2, 0, 3});
  EXPECT_EQ(collapse(once), once);
}

TEST(CtcTopology, MinFramesCountsRepeats) {
  EXPECT_EQ(min_frames(Labels{1}), 1u);
  EXPECT_EQ(min_frames(Labels{1, 2, 3}), 3u);
  EXPECT_EQ(min_frames(Labels{1, 1}), 3u);
  EXPECT_EQ(min_frames(Labels{2, 2, 2, 1}), 6u);
}

TEST(CtcLoss, SingleFrameSingleLabel) {
  const Tensor logits = Tensor::from_rows({{0.3, -1.2, 2.0}});
  const double p = softmax_rows(logits)(0, 2);
  EXPECT_NEAR(ctc_loss(logits, Labels{2}).loss, -std::log(p), 1e-14);
}

TEST(CtcLoss, TwoFramesHasThreePaths) {
  const Tensor logits = Tensor::from_rows({{0.1, 0.5, -0.3}, {1.1, -0.4, 0.2}});
  const Tensor p = softmax_rows(logits);
  // "1 1", "0 1", "1 0".
  const double expect = p(0, 1) * p(1, 1) + p(0, 0) * p(1, 1) + p(0, 1) * p(1, 0);
  EXPECT_NEAR(ctc_loss(logits, Labels{1}).loss, -std::log(expect), 1e-14);
}

TEST(CtcLoss, UniformBinaryCase) {
  // K=1, T=2, uniform: 3 of 4 paths collapse to "1".
  EXPECT_NEAR(ctc_loss(Tensor::matrix(2, 2), Labels{1}).loss, -std::log(0.75), 1e-15);
}

TEST(CtcLoss, MatchesEnumerationOnRandomCases) {
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<int> k_dist(1, 3), t_dist(1, 6);
  int checked = 0;
  while (checked < 200) {
    const int k = k_dist(rng);
    const std::size_t frames = static_cast<std::size_t>(t_dist(rng));
    const Labels labels = random_labels(rng, 1 + rng() % 3, k);
    if (min_frames(labels) > frames) continue;
    const Tensor logits = random_matrix(rng, frames, static_cast<std::size_t>(k) + 1, -3, 3);
    const double oracle = -std::log(enumerate_probability(logits, labels));
    EXPECT_LT(rel_error(ctc_loss(logits, labels).loss, oracle), 1e-10);
    EXPECT_LT(rel_error(brute_force_loss(logits, labels), oracle), 1e-10);
    ++checked;
  }
}

TEST(CtcLoss, InfeasibleInputsAreRejectedConsistently) {
  const Tensor logits = Tensor::matrix(2, 3);
  EXPECT_THROW(ctc_loss(logits, Labels{1, 1}), InfeasibleError);
  EXPECT_THROW(brute_force_loss(logits, Labels{1, 1}), InfeasibleError);
  EXPECT_THROW(ctc_loss(logits, Labels{1, 2, 1}), InfeasibleError);
  EXPECT_THROW(brute_force_loss(logits, Labels{1, 2, 1}), InfeasibleError);
  EXPECT_NO_THROW(ctc_loss(Tensor::matrix(3, 3), Labels{1, 1}));
  EXPECT_THROW(ctc_loss(logits, Labels{3}), ArgumentError);
  EXPECT_THROW(ctc_loss(logits, Labels{0}), ArgumentError);
}

TEST(CtcLoss, BruteForceIsGuarded) {
  EXPECT_THROW(brute_force_loss(Tensor::matrix(10, 5), Labels{1}), ArgumentError);
}

TEST(CtcLattice, AlphaBetaAgreeAtEveryFrame) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Labels labels = random_labels(rng, 4, 3);
    const Tensor logits = random_matrix(rng, 12, 4, -4, 4);
    const CtcLattice lat = ctc_lattice(log_softmax_rows(logits), labels);
    for (std::size_t t = 0; t < 12; ++t) {
      std::vector<double> terms;
      for (std::size_t s = 0; s < lat.log_alpha.cols(); ++s) terms.push_back(lat.log_alpha(t, s) + lat.log_beta(t, s));
      EXPECT_LT(std::abs(logsumexp(terms) - lat.log_likelihood), 1e-10);
    }
  }
}

TEST(CtcGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 10; ++trial) {
    const Labels labels = random_labels(rng, 3, 4);
    Tensor logits = random_matrix(rng, 8, 5, -2, 2);
    const CtcResult res = ctc_loss(logits, labels);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double saved = logits.data()[i];
      const double eps = 1e-5;
      logits.data()[i] = saved + eps;
      const double up = ctc_loss(logits, labels).loss;
      logits.data()[i] = saved - eps;
      const double down = ctc_loss(logits, labels).loss;
      logits.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = res.grad_logits.data()[i];
      EXPECT_LT(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)), 1e-7);
    }
  }
}

TEST(CtcGradient, RowsSumToZero) {
  std::mt19937_64 rng(103);
  const Tensor logits = random_matrix(rng, 15, 6, -5, 5);
  const CtcResult res = ctc_loss(logits, random_labels(rng, 5, 5));
  for (std::size_t t = 0; t < 15; ++t) {
    double s = 0.0;
    for (double g : res.grad_logits.row(t)) s += g;
    EXPECT_LT(std::abs(s), 1e-10);
  }
}

TEST(CtcGradient, TapedLossMatchesDirect) {
  std::mt19937_64 rng(104);
  ParamStore store;
  store.add("z", random_matrix(rng, 6, 4));
  const Labels labels{1, 3};
  Tape tape;
  Var loss = ctc_loss(tape.param(store, "z"), labels);
  const CtcResult direct = ctc_loss(store.at("z"), labels);
  EXPECT_EQ(loss.value().item(), direct.loss);
  EXPECT_EQ(tape.backward(loss, store).at("z"), direct.grad_logits);
}

TEST(CtcLoss, RaisingTargetLogitsLowersLoss) {
  std::mt19937_64 rng(105);
  const Labels labels{2, 1};
  Tensor logits = random_matrix(rng, 5, 3);
  double prev = ctc_loss(logits, labels).loss;
  for (int step = 0; step < 5; ++step) {
    for (std::size_t t = 0; t < 5; ++t) logits(t, t < 2 ? 2 : 1) += 0.5;
    const double now = ctc_loss(logits, labels).loss;
    EXPECT_LT(now, prev);
    prev = now;
  }
  EXPECT_GE(prev, 0.0);
}

TEST(LabelPrior, CountsBlankAugmentedTargets) {
  const std::vector<LabelSequence> labels = {{"a", {1, 2}}, {"b", {2}}};
  // Blanks: 3 + 2, label 1: 1, label 2: 2, label 3: 0 (floored).
  const auto prior = label_prior(labels, 4);
  ASSERT_EQ(prior.size(), 4u);
  const double z = 1.0 + 1e-8;
  EXPECT_NEAR(prior[0], 5.0 / 8 / z, 1e-15);
  EXPECT_NEAR(prior[1], 1.0 / 8 / z, 1e-15);
  EXPECT_NEAR(prior[2], 2.0 / 8 / z, 1e-15);
  EXPECT_NEAR(prior[3], 1e-8 / z, 1e-20);
  double s = 0.0;
  for (double p : prior) s += p;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_THROW(label_prior({}, 4), ArgumentError);
  EXPECT_THROW(label_prior({{"a", {4}}}, 4), ArgumentError);
}

}  // namespace
}  // namespace hrctc
