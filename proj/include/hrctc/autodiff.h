#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hrctc/param_store.h"
#include "hrctc/tensor.h"

namespace hrctc {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the output adjoint and accumulates into the adjoints of the
// node's inputs. Entries of `input_grads` are null for inputs that do not
// need a gradient.
using BackwardFn =
    std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

// Records a computation for reverse-mode differentiation.
//
// Nodes are appended in evaluation order; backward() visits them in exact
// reverse order and accumulates adjoints sequentially, so the result is
// bit-for-bit reproducible. Every recorded value is checked for NaN/Inf.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);

  // Leaf bound to a named parameter. Repeated calls with the same name
  // return the same node.
  Var param(const ParamStore& store, const std::string& name);

  // Records an op. `inputs` are the vars the value depends on.
  Var record(std::span<const Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a scalar `loss` with respect to every tensor in `store`.
  // Parameters not on the tape, or not reachable from `loss`, get zeros.
  Gradients backward(Var loss, const ParamStore& store) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

// Primitive ops. All operands must live on the same tape; no implicit
// broadcasting beyond the explicit scalar and row forms below.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// a[r x c] + row[1 x c] added to every row.
Var add_row(Var a, Var row);
Var tanh_map(Var a);
Var sigmoid_map(Var a);
Var softmax_row(Var a);
Var sum(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var row(Var a, std::size_t r);
Var concat_cols(std::span<const Var> parts);
Var stack_rows(std::span<const Var> rows);
// weights[T x n], blocks[T x (n*N)] -> out[T x N] with
// out[t][k] = sum_j weights[t][j] * blocks[t][j*N + k].
Var mix_blocks(Var weights, Var blocks);

// Plain (untaped) helpers shared by ops and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& a);

}  // namespace hrctc
