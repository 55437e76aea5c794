#include "hrctc/heads.h"

#include <random>

#include "hrctc/encoder.h"
#include "hrctc/error.h"

namespace hrctc {

HeadKind parse_head_kind(const std::string& name) {
  if (name == "single") return HeadKind::single;
  if (name == "mom") return HeadKind::mom;
  if (name == "highrank") return HeadKind::highrank;
  throw ParseError("unknown head kind '" + name + "' (expected single, mom or highrank)");
}

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::single: return "single";
    case HeadKind::mom: return "mom";
    case HeadKind::highrank: return "highrank";
  }
  return "?";
}

void HeadConfig::validate() const {
  if (hidden_dim == 0 || num_outputs < 2) throw ArgumentError("head needs H >= 1 and N >= 2");
  if (kind == HeadKind::highrank && !(temperature > 0.0)) {
    throw ArgumentError("high-rank head needs a positive temperature");
  }
}

namespace {

void check_hidden(const char* who, Var hidden, const Tensor& projection) {
  if (hidden.value().cols() != projection.rows()) {
    throw ShapeError(std::string(who) + ": hidden " + hidden.value().shape_string() +
                     " vs projection " + projection.shape_string());
  }
}

}  // namespace

Var single_forward(Tape& tape, const ParamStore& params, Var hidden) {
  Var m = tape.param(params, kHeadProjection);
  check_hidden("single head", hidden, m.value());
  return matmul(hidden, m);
}

Var mixture_weights(Tape& tape, const ParamStore& params, Var hidden) {
  Var w = tape.param(params, kHeadMixing);
  check_hidden("mixture weights", hidden, w.value());
  return softmax_row(matmul(hidden, w));
}

Var highrank_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden) {
  if (config.kind != HeadKind::highrank) throw ArgumentError("highrank_forward needs mode highrank");
  Var m = tape.param(params, kHeadProjection);
  check_hidden("high-rank head", hidden, m.value());
  Var components = tanh_map(matmul(hidden, m));
  Var mixed = mix_blocks(mixture_weights(tape, params, hidden), components);
  return scale(mixed, config.temperature);
}

Var mom_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden) {
  if (config.kind != HeadKind::mom) throw ArgumentError("mom_forward needs mode mom");
  Var m = tape.param(params, kHeadProjection);
  check_hidden("mom head", hidden, m.value());
  return mix_blocks(mixture_weights(tape, params, hidden), matmul(hidden, m));
}

Var head_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden) {
  switch (config.kind) {
    case HeadKind::single: return single_forward(tape, params, hidden);
    case HeadKind::mom: return mom_forward(tape, params, config, hidden);
    case HeadKind::highrank: return highrank_forward(tape, params, config, hidden);
  }
  throw ArgumentError("unknown head kind");
}

void add_head_params(ParamStore& store, const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-kInitRange, kInitRange);
  const std::size_t width =
      config.kind == HeadKind::single ? config.num_outputs : config.components() * config.num_outputs;
  Tensor m = Tensor::matrix(config.hidden_dim, width);
  for (double& v : m.data()) v = uniform(rng);
  store.add(kHeadProjection, std::move(m));
  if (config.kind != HeadKind::single) {
    store.add(kHeadMixing, Tensor::matrix(config.hidden_dim, config.components()));
  }
}

}  // namespace hrctc
