#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "hrctc/grad_check.h"
#include "hrctc/heads.h"
#include "test_util.h"

namespace hrctc {
namespace {

using testing::random_labels;
using testing::random_matrix;

HeadConfig make_config(HeadKind kind, std::size_t h, std::size_t n_out, std::size_t n = 0, double lambda = 15.0) {
  return {kind, h, n_out, n, lambda};
}

ParamStore random_head(const HeadConfig& cfg, std::uint64_t seed, double range = 1.0) {
  ParamStore store;
  add_head_params(store, cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  for (const auto& name : store.names()) {
    const Tensor& t = store.at(name);
    store.assign(name, random_matrix(rng, t.rows(), t.cols(), -range, range));
  }
  return store;
}

Tensor forward(const ParamStore& params, const HeadConfig& cfg, const Tensor& hidden) {
  Tape tape;
  return head_forward(tape, params, cfg, tape.constant(hidden)).value();
}

// Plain-loop oracle for the mixture heads.
Tensor mixture_oracle(const ParamStore& params, const HeadConfig& cfg, const Tensor& hidden) {
  const Tensor& m = params.at(kHeadProjection);
  const Tensor& w = params.at(kHeadMixing);
  const std::size_t n = cfg.components(), big_n = cfg.num_outputs, h = cfg.hidden_dim;
  Tensor out = Tensor::matrix(hidden.rows(), big_n);
  for (std::size_t t = 0; t < hidden.rows(); ++t) {
    std::vector<double> a(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < h; ++k) a[j] += w(k, j) * hidden(t, k);
    }
    const double mx = *std::max_element(a.begin(), a.end());
    double z = 0.0;
    for (double& v : a) z += (v = std::exp(v - mx));
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < big_n; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < h; ++k) dot += m(k, j * big_n + i) * hidden(t, k);
        out(t, i) += a[j] / z * (cfg.kind == HeadKind::highrank ? cfg.temperature * std::tanh(dot) : dot);
      }
    }
  }
  return out;
}

TEST(HeadConfig, ParsesKindsAndValidates) {
  EXPECT_EQ(parse_head_kind("single"), HeadKind::single);
  EXPECT_EQ(parse_head_kind("mom"), HeadKind::mom);
  EXPECT_EQ(parse_head_kind("highrank"), HeadKind::highrank);
  EXPECT_THROW(parse_head_kind("mos"), ParseError);
  EXPECT_EQ(to_string(HeadKind::highrank), "highrank");
  EXPECT_THROW(make_config(HeadKind::highrank, 4, 5, 0, 0.0).validate(), ArgumentError);
  EXPECT_THROW(make_config(HeadKind::single, 0, 5).validate(), ArgumentError);
  EXPECT_EQ(make_config(HeadKind::mom, 4, 5).components(), 5u);
  EXPECT_EQ(make_config(HeadKind::mom, 4, 5, 2).components(), 2u);
}

TEST(HeadParams, ShapesAndInit) {
  ParamStore single, mix;
  add_head_params(single, make_config(HeadKind::single, 6, 4), 1);
  EXPECT_EQ(single.at(kHeadProjection).shape(), (std::vector<std::size_t>{6, 4}));
  EXPECT_FALSE(single.contains(kHeadMixing));
  add_head_params(mix, make_config(HeadKind::highrank, 6, 4, 3), 1);
  EXPECT_EQ(mix.at(kHeadProjection).shape(), (std::vector<std::size_t>{6, 12}));
  EXPECT_EQ(mix.at(kHeadMixing).shape(), (std::vector<std::size_t>{6, 3}));
  for (double v : mix.at(kHeadMixing).data()) EXPECT_EQ(v, 0.0);
  for (double v : mix.at(kHeadProjection).data()) EXPECT_LE(std::abs(v), 0.05);
}

TEST(SingleHead, ZeroProjectionGivesUniformPosteriors) {
  const auto cfg = make_config(HeadKind::single, 3, 5);
  ParamStore params;
  add_head_params(params, cfg, 1);
  params.assign(kHeadProjection, Tensor::matrix(3, 5));
  std::mt19937_64 rng(2);
  const Tensor post = softmax_rows(forward(params, cfg, random_matrix(rng, 4, 3)));
  for (double v : post.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(SingleHead, IdentityProjectionPassesHiddenThrough) {
  const auto cfg = make_config(HeadKind::single, 4, 4);
  ParamStore params;
  add_head_params(params, cfg, 1);
  params.assign(kHeadProjection, Tensor::identity(4));
  std::mt19937_64 rng(3);
  const Tensor h = random_matrix(rng, 3, 4);
  EXPECT_EQ(forward(params, cfg, h), h);
}

TEST(MixtureHeads, MatchLoopOracle) {
  std::mt19937_64 rng(4);
  for (HeadKind kind : {HeadKind::highrank, HeadKind::mom}) {
    for (std::size_t n : {1u, 3u, 7u}) {
      const auto cfg = make_config(kind, 5, 6, n, 12.5);
      const ParamStore params = random_head(cfg, 10 + n);
      const Tensor h = random_matrix(rng, 4, 5);
      EXPECT_LT(max_abs_diff(forward(params, cfg, h), mixture_oracle(params, cfg, h)), 1e-12)
          << to_string(kind) << " n=" << n;
    }
  }
}

TEST(MixtureHeads, ZeroMixingGivesUniformWeights) {
  const auto cfg = make_config(HeadKind::highrank, 4, 3, 5);
  ParamStore params;
  add_head_params(params, cfg, 5);
  std::mt19937_64 rng(6);
  Tape tape;
  const Tensor w = mixture_weights(tape, params, tape.constant(random_matrix(rng, 3, 4, -10, 10))).value();
  for (double v : w.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(MixtureHeads, SingleComponentReducesToOneProjection) {
  std::mt19937_64 rng(7);
  const Tensor h = random_matrix(rng, 5, 4);
  auto hr = make_config(HeadKind::highrank, 4, 3, 1, 9.0);
  const ParamStore params = random_head(hr, 8);
  const Tensor projected = matmul(h, params.at(kHeadProjection));
  const Tensor got = forward(params, hr, h);
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got.data()[i], 9.0 * std::tanh(projected.data()[i]), 1e-13);
  }
  auto mom = make_config(HeadKind::mom, 4, 3, 1);
  EXPECT_LT(max_abs_diff(forward(params, mom, h), projected), 1e-14);
}

TEST(HighRankHead, LogitsBoundedByTemperature) {
  std::mt19937_64 rng(9);
  for (double lambda : {1.0, 15.0}) {
    const auto cfg = make_config(HeadKind::highrank, 6, 5, 4, lambda);
    const ParamStore params = random_head(cfg, 11, 20.0);
    const Tensor logits = forward(params, cfg, random_matrix(rng, 8, 6, -20, 20));
    for (double v : logits.data()) {
      EXPECT_LE(std::abs(v), lambda * (1 + 1e-12));
    }
  }
}

TEST(HighRankHead, TemperatureKeepsArgmaxAndSharpens) {
  std::mt19937_64 rng(12);
  const Tensor h = random_matrix(rng, 10, 5);
  const auto base = make_config(HeadKind::highrank, 5, 6, 3, 1.0);
  const ParamStore params = random_head(base, 13);
  std::vector<double> prev_max(10, 0.0);
  std::vector<std::size_t> argmax0;
  for (double lambda : {1.0, 10.0, 15.0, 20.0}) {
    auto cfg = base;
    cfg.temperature = lambda;
    const Tensor post = softmax_rows(forward(params, cfg, h));
    for (std::size_t t = 0; t < 10; ++t) {
      const auto r = post.row(t);
      const auto it = std::max_element(r.begin(), r.end());
      const std::size_t arg = static_cast<std::size_t>(it - r.begin());
      if (argmax0.size() < 10) argmax0.push_back(arg);
      EXPECT_EQ(arg, argmax0[t]);
      EXPECT_GE(*it, prev_max[t]);
      prev_max[t] = *it;
    }
  }
}

TEST(MomHead, EqualsPerFrameMixedProjection) {
  const auto cfg = make_config(HeadKind::mom, 4, 5, 3);
  const ParamStore params = random_head(cfg, 14);
  std::mt19937_64 rng(15);
  const Tensor h = random_matrix(rng, 6, 4);
  Tape tape;
  const Tensor w = mixture_weights(tape, params, tape.constant(h)).value();
  const Tensor& m = params.at(kHeadProjection);
  const Tensor got = forward(params, cfg, h);
  for (std::size_t t = 0; t < 6; ++t) {
    // M_hat = sum_j w_tj M_j, then logits = M_hat^T h_t.
    Tensor m_hat = Tensor::matrix(4, 5);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t i = 0; i < 5; ++i) m_hat(k, i) += w(t, j) * m(k, j * 5 + i);
      }
    }
    Tensor ht = Tensor::matrix(1, 4);
    for (std::size_t k = 0; k < 4; ++k) ht(0, k) = h(t, k);
    const Tensor expect = matmul(ht, m_hat);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got(t, i), expect(0, i), 1e-12);
  }
}

TEST(MixtureHeads, OnlyMomIsLinearInProjection) {
  std::mt19937_64 rng(16);
  const Tensor h = random_matrix(rng, 4, 3);
  for (HeadKind kind : {HeadKind::mom, HeadKind::highrank}) {
    const auto cfg = make_config(kind, 3, 4, 2, 1.0);
    const ParamStore params = random_head(cfg, 17);
    ParamStore doubled = params;
    Tensor m2 = params.at(kHeadProjection);
    for (double& v : m2.data()) v *= 2.0;
    doubled.assign(kHeadProjection, m2);
    Tensor twice = forward(params, cfg, h);
    for (double& v : twice.data()) v *= 2.0;
    const double gap = max_abs_diff(forward(doubled, cfg, h), twice);
    if (kind == HeadKind::mom) {
      EXPECT_LT(gap, 1e-14);
    } else {
      EXPECT_GT(gap, 1e-3);
    }
  }
}

TEST(Heads, WrongModeIsRejected) {
  const auto cfg = make_config(HeadKind::mom, 3, 4);
  const ParamStore params = random_head(cfg, 1);
  Tape tape;
  Var h = tape.constant(Tensor::matrix(2, 3));
  EXPECT_THROW(highrank_forward(tape, params, cfg, h), ArgumentError);
  EXPECT_THROW(single_forward(tape, params, tape.constant(Tensor::matrix(2, 5))), ShapeError);
}

class HeadGradient : public ::testing::TestWithParam<HeadKind> {};

TEST_P(HeadGradient, CtcLossMatchesFiniteDifferences) {
  const HeadKind kind = GetParam();
  const auto cfg = make_config(kind, 5, 4, 3, 3.0);
  const ParamStore params = random_head(cfg, 20, 0.5);
  std::mt19937_64 rng(21);
  const Tensor h = random_matrix(rng, 7, 5);
  const auto labels = random_labels(rng, 3, 3);
  const ScalarFn f = [&](Tape& tape, const ParamStore& p) {
    return ctc_loss(head_forward(tape, p, cfg, tape.constant(h)), labels);
  };
  const GradCheckReport report = grad_check(f, params);
  EXPECT_EQ(report.num_checked, params.num_scalars());
  EXPECT_LT(report.max_rel_error, 1e-6) << report.worst_param << "[" << report.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(AllHeads, HeadGradient,
                         ::testing::Values(HeadKind::single, HeadKind::mom, HeadKind::highrank),
                         [](const auto& info) { return to_string(info.param); });

}  // namespace
}  // namespace hrctc
