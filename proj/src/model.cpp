#include "hrctc/model.h"

#include "hrctc/ctc.h"

namespace hrctc {

ParamStore init_model(const ModelConfig& config, std::uint64_t seed) {
  ParamStore store;
  add_encoder_params(store, config.encoder_dims(), seed);
  // Separate stream so the head init does not shift with encoder size.
  add_head_params(store, config.head_config(), seed ^ 0x9e3779b97f4a7c15ULL);
  return store;
}

Var model_logits(Tape& tape, const ParamStore& params, const ModelConfig& config, const Tensor& frames) {
  Var hidden = run_bilstm(tape, params, config.encoder_dims(), tape.constant(frames));
  return head_forward(tape, params, config.head_config(), hidden);
}

Tensor model_log_posteriors(const ParamStore& params, const ModelConfig& config, const Tensor& frames) {
  Tape tape;
  return log_softmax_rows(model_logits(tape, params, config, frames).value());
}

Var model_ctc_loss(Tape& tape, const ParamStore& params, const ModelConfig& config,
                   const Tensor& frames, std::span<const int> labels) {
  return ctc_loss(model_logits(tape, params, config, frames), labels);
}

}  // namespace hrctc
