#include <algorithm>
#include <cmath>

#include "hrctc/error.h"
#include "hrctc/trainer.h"

namespace hrctc {

AdamState adam_init(const ParamStore& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr,
               const AdamOptions& options) {
  for (const auto& [name, _] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ArgumentError("no gradient for parameter '" + name + "'");
    if (!it->second.all_finite()) {
      throw NumericError("non-finite gradient for '" + name + "'; update skipped");
    }
  }

  const std::size_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
  for (const auto& name : params.names()) {
    const auto g = grads.at(name).data();
    auto p = params.values(name);
    auto m = state.m.values(name);
    auto v = state.v.values(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
  state.step = t;
}

double lr_schedule(std::span<const double> val_history, double lr, double decay, std::size_t patience) {
  if (!(decay > 0.0 && decay < 1.0)) throw ArgumentError("lr decay must lie in (0, 1)");
  if (patience == 0) throw ArgumentError("patience must be >= 1");
  if (val_history.empty()) return lr;
  // Index of the earliest best value.
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_history.size(); ++i) {
    if (val_history[i] < val_history[best]) best = i;
  }
  const std::size_t stale = val_history.size() - 1 - best;
  if (stale > 0 && stale % patience == 0) return lr * decay;
  return lr;
}

double clip_gradients(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

}  // namespace hrctc
