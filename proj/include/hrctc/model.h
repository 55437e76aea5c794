#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "hrctc/autodiff.h"
#include "hrctc/encoder.h"
#include "hrctc/heads.h"
#include "hrctc/param_store.h"

namespace hrctc {

// BiLSTM encoder followed by a projection head, emitting T x (K+1) logits.
struct ModelConfig {
  std::size_t input_dim = 360;
  std::size_t num_labels = 71;  // K, excluding the blank
  std::size_t hidden_dim = 320;
  std::size_t num_layers = 4;
  HeadKind head = HeadKind::single;
  std::size_t num_components = 0;  // n; 0 means K+1
  double temperature = kDefaultTemperature;

  std::size_t num_outputs() const { return num_labels + 1; }
  EncoderDims encoder_dims() const { return {input_dim, hidden_dim, num_layers}; }
  HeadConfig head_config() const {
    return {head, 2 * hidden_dim, num_outputs(), num_components, temperature};
  }
};

ParamStore init_model(const ModelConfig& config, std::uint64_t seed);

Var model_logits(Tape& tape, const ParamStore& params, const ModelConfig& config, const Tensor& frames);

// Per-frame log posteriors (no tape kept).
Tensor model_log_posteriors(const ParamStore& params, const ModelConfig& config, const Tensor& frames);

// CTC loss of one utterance on a fresh graph.
Var model_ctc_loss(Tape& tape, const ParamStore& params, const ModelConfig& config,
                   const Tensor& frames, std::span<const int> labels);

}  // namespace hrctc
