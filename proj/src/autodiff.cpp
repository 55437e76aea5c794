#include "hrctc/autodiff.h"

#include <algorithm>
#include <cmath>

#include "hrctc/error.h"

namespace hrctc {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant recorded on tape");
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  const Tensor& value = store.at(name);
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' is not finite");
  nodes_.push_back(Node{value, {}, {}, true});
  param_ids_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::span<const Var> inputs, Tensor value, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("op produced a non-finite value " + value.shape_string());
  Node node{std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ArgumentError("operands recorded on different tapes");
    node.inputs.push_back(v.id());
    node.needs_grad = node.needs_grad || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss, const ParamStore& store) const {
  if (loss.tape() != this) throw ArgumentError("loss is not on this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + nodes_[loss.id()].value.shape_string());
  }

  std::vector<Tensor> adjoints(loss.id() + 1);
  adjoints[loss.id()] = Tensor(nodes_[loss.id()].value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.needs_grad || !node.backward || adjoints[id].empty()) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].needs_grad) continue;
      if (adjoints[in].empty()) adjoints[in] = Tensor(nodes_[in].value.shape(), 0.0);
      input_grads[k] = &adjoints[in];
    }
    node.backward(adjoints[id], input_grads);
  }

  Gradients grads;
  for (const auto& [name, tensor] : store) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end() && it->second <= loss.id() && !adjoints[it->second].empty()) {
      grads.emplace(name, adjoints[it->second]);
    } else {
      grads.emplace(name, Tensor(tensor.shape(), 0.0));
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Plain kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor c = Tensor::matrix(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = out.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return out;
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw ArgumentError("operation on an unbound Var");
  return *a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

// c += a^T b  (a: m x k, b: m x n, c: k x n)
void accumulate_at_b(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a b^T  (a: m x n, b: k x n, c: m x k)
void accumulate_a_bt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      pc[i * k + p] += s;
    }
  }
}

template <typename Forward, typename Derivative>
Var unary_map(Var a, Forward forward, Derivative derivative_from_output) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = forward(v);
  Var ins[] = {a};
  const std::size_t out_id = tape.size();
  return tape.record(ins, std::move(out),
                     [&tape, out_id, derivative_from_output](const Tensor& g,
                                                             std::span<Tensor* const> gin) {
                       const Tensor& y = tape.value(out_id);
                       auto dst = gin[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) {
                         dst[i] += g.data()[i] * derivative_from_output(y.data()[i]);
                       }
                     });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  Tensor out = matmul(a.value(), b.value());
  Var ins[] = {a, b};
  return tape.record(ins, std::move(out), [a, b](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) accumulate_a_bt(g, b.value(), *gin[0]);
    if (gin[1]) accumulate_at_b(a.value(), g, *gin[1]);
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  Var ins[] = {a, b};
  return tape.record(ins, std::move(out), [](const Tensor& g, std::span<Tensor* const> gin) {
    for (Tensor* dst : gin) {
      if (!dst) continue;
      for (std::size_t i = 0; i < g.size(); ++i) dst->data()[i] += g.data()[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  Var ins[] = {a, b};
  return tape.record(ins, std::move(out), [](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[0]->data()[i] += g.data()[i];
    }
    if (gin[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[1]->data()[i] -= g.data()[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  Var ins[] = {a, b};
  return tape.record(ins, std::move(out), [a, b](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) {
      const auto bv = b.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) gin[0]->data()[i] += g.data()[i] * bv[i];
    }
    if (gin[1]) {
      const auto av = a.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) gin[1]->data()[i] += g.data()[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  Var ins[] = {a};
  return tape.record(ins, std::move(out), [factor](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) gin[0]->data()[i] += factor * g.data()[i];
  });
}

Var add_row(Var a, Var row_var) {
  Tape& tape = tape_of(a);
  const Tensor& rv = row_var.value();
  if (rv.rows() != 1 || rv.cols() != a.value().cols()) {
    throw ShapeError("add_row: " + a.value().shape_string() + " + " + rv.shape_string());
  }
  Tensor out = a.value();
  const std::size_t c = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out(r, j) += rv(0, j);
  }
  Var ins[] = {a, row_var};
  return tape.record(ins, std::move(out), [c](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) gin[0]->data()[i] += g.data()[i];
    }
    if (gin[1]) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) (*gin[1])(0, j) += g(r, j);
      }
    }
  });
}

Var tanh_map(Var a) {
  return unary_map(
      a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var sigmoid_map(Var a) {
  return unary_map(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var softmax_row(Var a) {
  Tape& tape = tape_of(a);
  Tensor out = softmax_rows(a.value());
  Var ins[] = {a};
  const std::size_t out_id = tape.size();
  return tape.record(ins, std::move(out),
                     [&tape, out_id](const Tensor& g, std::span<Tensor* const> gin) {
                       const Tensor& y = tape.value(out_id);
                       for (std::size_t r = 0; r < y.rows(); ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < y.cols(); ++j) dot += g(r, j) * y(r, j);
                         for (std::size_t j = 0; j < y.cols(); ++j) {
                           (*gin[0])(r, j) += y(r, j) * (g(r, j) - dot);
                         }
                       }
                     });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Var ins[] = {a};
  return tape.record(ins, Tensor::scalar(s), [](const Tensor& g, std::span<Tensor* const> gin) {
    const double gv = g.item();
    for (double& v : gin[0]->data()) v += gv;
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (begin > end || end > av.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + av.shape_string());
  }
  const std::size_t width = end - begin;
  Tensor out = Tensor::matrix(av.rows(), width);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t j = 0; j < width; ++j) out(r, j) = av(r, begin + j);
  }
  Var ins[] = {a};
  return tape.record(ins, std::move(out),
                     [begin, width](const Tensor& g, std::span<Tensor* const> gin) {
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         for (std::size_t j = 0; j < width; ++j) (*gin[0])(r, begin + j) += g(r, j);
                       }
                     });
}

Var row(Var a, std::size_t r) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (r >= av.rows()) throw ShapeError("row " + std::to_string(r) + " out of range for " + av.shape_string());
  const auto src = av.row(r);
  Tensor out({1, av.cols()}, std::vector<double>(src.begin(), src.end()));
  Var ins[] = {a};
  return tape.record(ins, std::move(out), [r](const Tensor& g, std::span<Tensor* const> gin) {
    auto dst = gin[0]->row(r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g.data()[j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols of nothing");
  Tape& tape = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out = Tensor::matrix(rows, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < pv.cols(); ++j) out(r, offsets[k] + j) = pv(r, j);
    }
  }
  return tape.record(parts, std::move(out),
                     [offsets](const Tensor& g, std::span<Tensor* const> gin) {
                       for (std::size_t k = 0; k < gin.size(); ++k) {
                         if (!gin[k]) continue;
                         Tensor& dst = *gin[k];
                         for (std::size_t r = 0; r < dst.rows(); ++r) {
                           for (std::size_t j = 0; j < dst.cols(); ++j) dst(r, j) += g(r, offsets[k] + j);
                         }
                       }
                     });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ArgumentError("stack_rows of nothing");
  Tape& tape = tape_of(rows[0]);
  const std::size_t cols = rows[0].value().cols();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const Var& r : rows) {
    if (r.value().rows() != 1 || r.value().cols() != cols) {
      throw ShapeError("stack_rows: expected 1x" + std::to_string(cols) + ", got " +
                       r.value().shape_string());
    }
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
  }
  Tensor out({rows.size(), cols}, std::move(data));
  return tape.record(rows, std::move(out), [](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (!gin[k]) continue;
      auto src = g.row(k);
      for (std::size_t j = 0; j < src.size(); ++j) gin[k]->data()[j] += src[j];
    }
  });
}

Var mix_blocks(Var weights, Var blocks) {
  Tape& tape = tape_of(weights);
  const Tensor& w = weights.value();
  const Tensor& b = blocks.value();
  const std::size_t frames = w.rows(), n = w.cols();
  if (b.rows() != frames || n == 0 || b.cols() % n != 0) {
    throw ShapeError("mix_blocks: weights " + w.shape_string() + ", blocks " + b.shape_string());
  }
  const std::size_t width = b.cols() / n;
  Tensor out = Tensor::matrix(frames, width);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const double wj = w(t, j);
      for (std::size_t k = 0; k < width; ++k) out(t, k) += wj * b(t, j * width + k);
    }
  }
  Var ins[] = {weights, blocks};
  return tape.record(
      ins, std::move(out),
      [weights, blocks, n, width](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& w = weights.value();
        const Tensor& b = blocks.value();
        for (std::size_t t = 0; t < g.rows(); ++t) {
          for (std::size_t j = 0; j < n; ++j) {
            if (gin[0]) {
              double s = 0.0;
              for (std::size_t k = 0; k < width; ++k) s += g(t, k) * b(t, j * width + k);
              (*gin[0])(t, j) += s;
            }
            if (gin[1]) {
              const double wj = w(t, j);
              for (std::size_t k = 0; k < width; ++k) (*gin[1])(t, j * width + k) += wj * g(t, k);
            }
          }
        }
      });
}

}  // namespace hrctc
