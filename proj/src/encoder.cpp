#include "hrctc/encoder.h"

#include <random>
#include <vector>

#include "hrctc/error.h"

namespace hrctc {

std::string cell_prefix(std::size_t layer, Direction dir) {
  return "enc/l" + std::to_string(layer) + (dir == Direction::forward ? "/fw/" : "/bw/");
}

LstmCell bind_cell(Tape& tape, const ParamStore& params, const std::string& prefix) {
  LstmCell cell;
  cell.wx = tape.param(params, prefix + "Wx");
  cell.wh = tape.param(params, prefix + "Wh");
  cell.b = tape.param(params, prefix + "b");
  cell.peep_i = tape.param(params, prefix + "p_i");
  cell.peep_f = tape.param(params, prefix + "p_f");
  cell.peep_o = tape.param(params, prefix + "p_o");
  cell.hidden_dim = cell.wh.value().rows();

  const std::size_t h = cell.hidden_dim;
  if (cell.wh.value().cols() != 4 * h || cell.wx.value().cols() != 4 * h ||
      cell.b.value().rows() != 1 || cell.b.value().cols() != 4 * h) {
    throw ShapeError("inconsistent LSTM weight shapes under '" + prefix + "'");
  }
  for (const Var& p : {cell.peep_i, cell.peep_f, cell.peep_o}) {
    if (p.value().rows() != 1 || p.value().cols() != h) {
      throw ShapeError("peephole under '" + prefix + "' must be 1x" + std::to_string(h));
    }
  }
  return cell;
}

LstmState zero_state(Tape& tape, std::size_t hidden_dim) {
  return {tape.constant(Tensor::matrix(1, hidden_dim)), tape.constant(Tensor::matrix(1, hidden_dim))};
}

LstmState lstm_step_projected(const LstmCell& cell, Var input_gates, const LstmState& prev) {
  const std::size_t h = cell.hidden_dim;
  if (input_gates.value().rows() != 1 || input_gates.value().cols() != 4 * h) {
    throw ShapeError("lstm step: gate input " + input_gates.value().shape_string());
  }
  Var z = add(input_gates, matmul(prev.h, cell.wh));
  auto gate = [&](Gate g) { return slice_cols(z, g * h, (g + 1) * h); };

  Var i = sigmoid_map(add(gate(kInputGate), mul(cell.peep_i, prev.c)));
  Var f = sigmoid_map(add(gate(kForgetGate), mul(cell.peep_f, prev.c)));
  Var g = tanh_map(gate(kCellGate));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var o = sigmoid_map(add(gate(kOutputGate), mul(cell.peep_o, c)));
  return {mul(o, tanh_map(c)), c};
}

LstmState lstm_step(const LstmCell& cell, Var x_t, const LstmState& prev) {
  if (x_t.value().rows() != 1 || x_t.value().cols() != cell.wx.value().rows()) {
    throw ShapeError("lstm step: input " + x_t.value().shape_string() + " vs Wx " +
                     cell.wx.value().shape_string());
  }
  return lstm_step_projected(cell, add(matmul(x_t, cell.wx), cell.b), prev);
}

Var run_direction(const LstmCell& cell, Var frames, Direction dir) {
  const std::size_t steps = frames.value().rows();
  if (steps == 0) throw ArgumentError("run_direction on an empty sequence");
  if (frames.value().cols() != cell.wx.value().rows()) {
    throw ShapeError("encoder input " + frames.value().shape_string() + " vs Wx " +
                     cell.wx.value().shape_string());
  }
  Var projected = add_row(matmul(frames, cell.wx), cell.b);

  std::vector<Var> outputs(steps);
  LstmState state = zero_state(*frames.tape(), cell.hidden_dim);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = dir == Direction::forward ? k : steps - 1 - k;
    state = lstm_step_projected(cell, row(projected, t), state);
    outputs[t] = state.h;
  }
  return stack_rows(outputs);
}

Var run_bilstm(Tape& tape, const ParamStore& params, const EncoderDims& dims, Var frames) {
  if (frames.value().cols() != dims.input_dim) {
    throw ShapeError("encoder expects input dim " + std::to_string(dims.input_dim) + ", got " +
                     frames.value().shape_string());
  }
  Var layer_input = frames;
  for (std::size_t layer = 0; layer < dims.num_layers; ++layer) {
    const LstmCell fw = bind_cell(tape, params, cell_prefix(layer, Direction::forward));
    const LstmCell bw = bind_cell(tape, params, cell_prefix(layer, Direction::backward));
    const Var parts[] = {run_direction(fw, layer_input, Direction::forward),
                         run_direction(bw, layer_input, Direction::backward)};
    layer_input = concat_cols(parts);
  }
  return layer_input;
}

void add_encoder_params(ParamStore& store, const EncoderDims& dims, std::uint64_t seed) {
  if (dims.num_layers == 0 || dims.hidden_dim == 0 || dims.input_dim == 0) {
    throw ArgumentError("encoder dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-kInitRange, kInitRange);
  auto random_matrix = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.data()) v = uniform(rng);
    return t;
  };

  const std::size_t h = dims.hidden_dim;
  for (std::size_t layer = 0; layer < dims.num_layers; ++layer) {
    for (Direction dir : {Direction::forward, Direction::backward}) {
      const std::string prefix = cell_prefix(layer, dir);
      store.add(prefix + "Wx", random_matrix(dims.layer_input_dim(layer), 4 * h));
      store.add(prefix + "Wh", random_matrix(h, 4 * h));
      Tensor bias = Tensor::matrix(1, 4 * h);
      for (std::size_t j = 0; j < h; ++j) bias(0, kForgetGate * h + j) = kForgetBiasInit;
      store.add(prefix + "b", std::move(bias));
      store.add(prefix + "p_i", Tensor::matrix(1, h));
      store.add(prefix + "p_f", Tensor::matrix(1, h));
      store.add(prefix + "p_o", Tensor::matrix(1, h));
    }
  }
}

ParamStore init_encoder_params(const EncoderDims& dims, std::uint64_t seed) {
  ParamStore store;
  add_encoder_params(store, dims, seed);
  return store;
}

}  // namespace hrctc
