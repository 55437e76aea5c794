#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hrctc/autodiff.h"
#include "hrctc/param_store.h"

namespace hrctc {

// Gate order inside the 4H-wide weight blocks.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };

inline constexpr double kForgetBiasInit = 5.0;
inline constexpr double kInitRange = 0.05;

struct EncoderDims {
  std::size_t input_dim = 360;
  std::size_t hidden_dim = 320;
  std::size_t num_layers = 4;

  std::size_t output_dim() const { return 2 * hidden_dim; }
  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : 2 * hidden_dim;
  }
};

enum class Direction { forward, backward };

// Parameter-name prefix of one cell, e.g. "enc/l0/fw/".
std::string cell_prefix(std::size_t layer, Direction dir);

// Tape handles of one peephole LSTM cell:
//   wx: D x 4H, wh: H x 4H, b: 1 x 4H, peep_*: 1 x H.
struct LstmCell {
  Var wx, wh, b;
  Var peep_i, peep_f, peep_o;
  std::size_t hidden_dim = 0;
};

LstmCell bind_cell(Tape& tape, const ParamStore& params, const std::string& prefix);

struct LstmState {
  Var h;
  Var c;
};

LstmState zero_state(Tape& tape, std::size_t hidden_dim);

// One peephole LSTM step on input x_t (1 x D):
//   i = sig(Wxi x + Whi h + p_i*c_prev + b_i)
//   f = sig(Wxf x + Whf h + p_f*c_prev + b_f)
//   g = tanh(Wxg x + Whg h + b_g)
//   c = f*c_prev + i*g
//   o = sig(Wxo x + Who h + p_o*c + b_o)
//   h = o*tanh(c)
LstmState lstm_step(const LstmCell& cell, Var x_t, const LstmState& prev);

// Same step given the input contribution x_t Wx + b (1 x 4H) precomputed.
LstmState lstm_step_projected(const LstmCell& cell, Var input_gates, const LstmState& prev);

// Runs one direction of a layer over all frames (T x D) -> T x H in time order.
Var run_direction(const LstmCell& cell, Var frames, Direction dir);

// Stacked bidirectional encoder: T x input_dim -> T x 2H, each frame being
// [forward h, backward h].
Var run_bilstm(Tape& tape, const ParamStore& params, const EncoderDims& dims, Var frames);

// Uniform(-0.05, 0.05) weights, zero biases except the forget gate (5),
// zero peepholes. Deterministic in `seed`.
ParamStore init_encoder_params(const EncoderDims& dims, std::uint64_t seed);
void add_encoder_params(ParamStore& store, const EncoderDims& dims, std::uint64_t seed);

}  // namespace hrctc
