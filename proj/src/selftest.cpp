#include "hrctc/selftest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "hrctc/frontend.h"
#include "hrctc/model.h"

namespace hrctc {

GradCheckReport model_gradient_check(const ModelCheckOptions& options) {
  SynthConfig synth;
  synth.num_utts = 1;
  synth.num_labels = options.tiny ? 3 : 5;
  synth.min_len = 2;
  synth.max_len = 3;
  synth.min_frames_per_token = 1;
  synth.max_frames_per_token = 2;
  synth.seed = options.seed;
  const SynthCorpus corpus = synth_generate(synth);
  const Tensor& frames = corpus.features[0].frames;
  const std::vector<int>& labels = corpus.labels[0].tokens;

  ModelConfig model;
  model.input_dim = frames.cols();
  model.num_labels = synth.num_labels;
  model.hidden_dim = options.tiny ? 6 : 8;
  model.num_layers = 2;
  model.head = options.head;
  model.num_components = options.tiny ? 3 : 0;
  model.temperature = 3.0;

  ParamStore params = init_model(model, options.seed);
  std::mt19937_64 rng(options.seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  for (const auto& name : params.names()) {
    for (double& v : params.values(name)) v = uniform(rng);
  }
  const ScalarFn f = [&](Tape& tape, const ParamStore& p) {
    return model_ctc_loss(tape, p, model, frames, labels);
  };
  return grad_check(f, params, options.eps);
}

OracleReport ctc_oracle_suite(std::size_t cases, std::uint64_t seed, std::size_t max_frames,
                              std::size_t max_labels) {
  if (max_frames == 0 || max_labels == 0) throw ArgumentError("oracle suite needs positive T and K bounds");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> frames_dist(1, max_frames), k_dist(1, max_labels);
  std::uniform_real_distribution<double> logit(-3.0, 3.0);
  OracleReport report;
  while (report.cases < cases) {
    const std::size_t frames = frames_dist(rng);
    const std::size_t k = k_dist(rng);
    std::uniform_int_distribution<std::size_t> len_dist(1, frames);
    std::uniform_int_distribution<int> label_dist(1, static_cast<int>(k));
    std::vector<int> labels(len_dist(rng));
    for (int& l : labels) l = label_dist(rng);
    if (min_frames(labels) > frames) continue;
    Tensor logits = Tensor::matrix(frames, k + 1);
    for (double& v : logits.data()) v = logit(rng);
    const double fast = ctc_loss(logits, labels).loss;
    const double slow = brute_force_loss(logits, labels);
    const double err = std::abs(fast - slow) / std::max({1e-300, std::abs(fast), std::abs(slow)});
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.cases;
  }
  return report;
}

}  // namespace hrctc
