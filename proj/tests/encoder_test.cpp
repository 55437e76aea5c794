#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hrctc/encoder.h"
#include "hrctc/error.h"
#include "hrctc/grad_check.h"
#include "test_util.h"

namespace hrctc {
namespace {

using testing::random_matrix;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Overwrites every parameter with uniform noise so no term is trivially zero.
void randomize(ParamStore& store, std::uint64_t seed, double range = 0.5) {
  std::mt19937_64 rng(seed);
  for (const auto& name : store.names()) {
    const Tensor& t = store.at(name);
    store.assign(name, random_matrix(rng, t.rows(), t.cols(), -range, range));
  }
}

Tensor encode(const ParamStore& params, const EncoderDims& dims, const Tensor& frames) {
  Tape tape;
  return run_bilstm(tape, params, dims, tape.constant(frames)).value();
}

TEST(Encoder, ZeroWeightsGiveZeroStates) {
  EncoderDims dims{3, 4, 1};
  ParamStore params = init_encoder_params(dims, 1);
  for (const auto& name : params.names()) params.assign(name, Tensor::matrix(params.at(name).rows(), params.at(name).cols()));
  std::mt19937_64 rng(2);
  Tape tape;
  const LstmCell cell = bind_cell(tape, params, cell_prefix(0, Direction::forward));
  LstmState state = zero_state(tape, 4);
  for (int t = 0; t < 5; ++t) state = lstm_step(cell, tape.constant(random_matrix(rng, 1, 3)), state);
  for (double v : state.h.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : state.c.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, ScalarStepMatchesHandComputation) {
  ParamStore params;
  const std::string p = "cell/";
  // Gate columns: i f g o.
  params.add(p + "Wx", Tensor::from_rows({{0.3, -0.2, 0.5, 0.1}}));
  params.add(p + "Wh", Tensor::from_rows({{-0.4, 0.6, 0.2, -0.3}}));
  params.add(p + "b", Tensor::from_rows({{0.05, 1.0, -0.1, 0.2}}));
  params.add(p + "p_i", Tensor::from_rows({{0.7}}));
  params.add(p + "p_f", Tensor::from_rows({{-0.25}}));
  params.add(p + "p_o", Tensor::from_rows({{0.45}}));
  const double x = 0.8, h0 = -0.35, c0 = 0.6;

  Tape tape;
  const LstmCell cell = bind_cell(tape, params, p);
  const LstmState out = lstm_step(cell, tape.constant(Tensor::from_rows({{x}})),
                                  {tape.constant(Tensor::from_rows({{h0}})), tape.constant(Tensor::from_rows({{c0}}))});

  const double i = sigmoid(0.3 * x - 0.4 * h0 + 0.7 * c0 + 0.05);
  const double f = sigmoid(-0.2 * x + 0.6 * h0 - 0.25 * c0 + 1.0);
  const double g = std::tanh(0.5 * x + 0.2 * h0 - 0.1);
  const double c = f * c0 + i * g;
  const double o = sigmoid(0.1 * x - 0.3 * h0 + 0.45 * c + 0.2);
  EXPECT_NEAR(out.c.value().item(), c, 1e-15);
  EXPECT_NEAR(out.h.value().item(), o * std::tanh(c), 1e-15);
}

TEST(Encoder, PeepholesAreInertOnFirstStepInputAndForgetGates) {
  EncoderDims dims{2, 3, 1};
  ParamStore params = init_encoder_params(dims, 5);
  randomize(params, 6);
  ParamStore altered = params;
  const std::string p = cell_prefix(0, Direction::forward);
  std::mt19937_64 rng(7);
  altered.assign(p + "p_i", random_matrix(rng, 1, 3, -3, 3));
  altered.assign(p + "p_f", random_matrix(rng, 1, 3, -3, 3));
  const Tensor x = random_matrix(rng, 1, 2);

  auto first_step = [&](const ParamStore& store) {
    Tape tape;
    const LstmCell cell = bind_cell(tape, store, p);
    return lstm_step(cell, tape.constant(x), zero_state(tape, 3)).h.value();
  };
  EXPECT_EQ(first_step(params), first_step(altered));
}

TEST(Encoder, SingleFrameSequence) {
  EncoderDims dims{4, 5, 2};
  const ParamStore params = init_encoder_params(dims, 3);
  std::mt19937_64 rng(4);
  const Tensor out = encode(params, dims, random_matrix(rng, 1, 4));
  EXPECT_EQ(out.rows(), 1u);
  EXPECT_EQ(out.cols(), 10u);
  EXPECT_TRUE(out.all_finite());
}

TEST(Encoder, TimeReversalSwapsDirections) {
  EncoderDims dims{3, 4, 1};
  ParamStore params = init_encoder_params(dims, 8);
  randomize(params, 9);
  for (const char* name : {"Wx", "Wh", "b", "p_i", "p_f", "p_o"}) {
    params.assign(cell_prefix(0, Direction::backward) + name,
                  params.at(cell_prefix(0, Direction::forward) + name));
  }
  std::mt19937_64 rng(10);
  const Tensor x = random_matrix(rng, 6, 3);
  Tensor reversed = Tensor::matrix(6, 3);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t k = 0; k < 3; ++k) reversed(t, k) = x(5 - t, k);
  }
  const Tensor a = encode(params, dims, x);
  const Tensor b = encode(params, dims, reversed);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(a(t, j), b(5 - t, 4 + j), 1e-14);
      EXPECT_NEAR(a(t, 4 + j), b(5 - t, j), 1e-14);
    }
  }
}

TEST(Encoder, OutputsAreBoundedAndDeterministic) {
  EncoderDims dims{3, 6, 3};
  ParamStore params = init_encoder_params(dims, 11);
  randomize(params, 12, 4.0);
  std::mt19937_64 rng(13);
  const Tensor x = random_matrix(rng, 9, 3, -50, 50);
  const Tensor a = encode(params, dims, x);
  EXPECT_EQ(a, encode(params, dims, x));
  for (double v : a.data()) EXPECT_LT(std::abs(v), 1.0);
}

TEST(Encoder, RejectsWrongInputDim) {
  EncoderDims dims{3, 2, 1};
  const ParamStore params = init_encoder_params(dims, 1);
  EXPECT_THROW(encode(params, dims, Tensor::matrix(4, 5)), ShapeError);
}

TEST(EncoderInit, RangesAndForgetBias) {
  EncoderDims dims{7, 5, 2};
  const ParamStore params = init_encoder_params(dims, 21);
  EXPECT_EQ(params.size(), 2u * 2u * 6u);
  for (std::size_t layer = 0; layer < 2; ++layer) {
    for (Direction dir : {Direction::forward, Direction::backward}) {
      const std::string p = cell_prefix(layer, dir);
      EXPECT_EQ(params.at(p + "Wx").rows(), layer == 0 ? 7u : 10u);
      EXPECT_EQ(params.at(p + "Wx").cols(), 20u);
      for (const char* w : {"Wx", "Wh"}) {
        for (double v : params.at(p + w).data()) EXPECT_LE(std::abs(v), kInitRange);
      }
      const Tensor& b = params.at(p + "b");
      for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(b(0, j), j / 5 == kForgetGate ? 5.0 : 0.0);
      for (const char* peep : {"p_i", "p_f", "p_o"}) {
        for (double v : params.at(p + peep).data()) EXPECT_EQ(v, 0.0);
      }
    }
  }
  EXPECT_EQ(params, init_encoder_params(dims, 21));
  EXPECT_FALSE(params == init_encoder_params(dims, 22));
}

TEST(EncoderGradient, FullStackMatchesFiniteDifferences) {
  EncoderDims dims{4, 6, 2};
  ParamStore params = init_encoder_params(dims, 31);
  randomize(params, 32);
  std::mt19937_64 rng(33);
  const Tensor x = random_matrix(rng, 5, 4);
  const Tensor weights = random_matrix(rng, 5, 12);
  const ScalarFn f = [&](Tape& tape, const ParamStore& p) {
    return sum(mul(run_bilstm(tape, p, dims, tape.constant(x)), tape.constant(weights)));
  };
  const GradCheckReport report = grad_check(f, params);
  EXPECT_EQ(report.num_checked, params.num_scalars());
  EXPECT_LT(report.max_rel_error, 1e-6) << report.worst_param << "[" << report.worst_index << "]";
}

}  // namespace
}  // namespace hrctc
