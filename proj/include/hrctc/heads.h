#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hrctc/autodiff.h"
#include "hrctc/param_store.h"

namespace hrctc {

enum class HeadKind { single, mom, highrank };

HeadKind parse_head_kind(const std::string& name);
std::string to_string(HeadKind kind);

inline constexpr double kDefaultTemperature = 15.0;

// Output projection from hidden features (T x H) to logits (T x N), N = K+1.
//
// single:   l_i = M^T h_i
// highrank: l_i = lambda * sum_j w_ij tanh(M_j^T h_i),  w_i = softmax(W^T h_i)
// mom:      l_i = sum_j w_ij M_j^T h_i
//
// Parameters live under "head/": "head/M" is H x N for the single head and
// the column concatenation [M_1 ... M_n] (H x nN) otherwise; "head/W" is H x n.
struct HeadConfig {
  HeadKind kind = HeadKind::single;
  std::size_t hidden_dim = 0;
  std::size_t num_outputs = 0;     // N, labels including blank
  std::size_t num_components = 0;  // n; 0 means N
  double temperature = kDefaultTemperature;

  std::size_t components() const { return num_components == 0 ? num_outputs : num_components; }
  void validate() const;
};

inline const char* const kHeadProjection = "head/M";
inline const char* const kHeadMixing = "head/W";

Var single_forward(Tape& tape, const ParamStore& params, Var hidden);

// Per-frame mixture weights softmax(W^T h_i): T x n.
Var mixture_weights(Tape& tape, const ParamStore& params, Var hidden);

Var highrank_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden);
Var mom_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden);

// Dispatches on config.kind.
Var head_forward(Tape& tape, const ParamStore& params, const HeadConfig& config, Var hidden);

// Projections uniform(-0.05, 0.05); the mixing matrix W starts at zero so
// every component gets weight 1/n initially.
void add_head_params(ParamStore& store, const HeadConfig& config, std::uint64_t seed);

}  // namespace hrctc
