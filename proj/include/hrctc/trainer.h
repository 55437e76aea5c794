#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrctc/decode.h"
#include "hrctc/frontend.h"
#include "hrctc/model.h"
#include "hrctc/param_store.h"

namespace hrctc {

// Everything needed to reproduce a training run. Stored verbatim in every
// checkpoint; the text form is a flat `key = value` file.
struct TrainConfig {
  std::string train_features;
  std::string train_labels;
  std::string tokens;
  // Optional held-out data. Without valid_*, 5% of the training utterances
  // (chosen by a hash of the utterance id) are used for validation.
  std::string valid_features;
  std::string valid_labels;
  std::string test_features;
  std::string test_labels;
  std::string out_dir = "exp";

  std::size_t num_labels = 0;  // K; 0 = take from the token table
  std::size_t hidden_dim = 320;
  std::size_t num_layers = 4;
  HeadKind head = HeadKind::single;
  std::size_t num_components = 0;  // n; 0 = K+1
  double temperature = kDefaultTemperature;

  FrontendConfig frontend;

  double lr_init = 0.001;
  double lr_decay = 0.7;
  double min_lr = 1e-6;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 20;
  std::size_t patience = 1;
  double clip_norm = 0.0;  // 0 disables clipping
  double val_fraction = 0.05;
  double prior_alpha = 0.0;  // used for validation/test TER decoding
  std::size_t threads = 0;   // 0 = hardware concurrency; never affects results
};

// Named presets: "wsj" (lr 0.001, decay 0.7, batch 32) and "librispeech"
// (lr 0.0004, decay 0.5, batch 64).
TrainConfig config_preset(const std::string& name);

std::vector<std::string> config_keys();
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);

// `key = value` lines; '#' starts a comment. Unknown keys are errors.
void read_config(std::istream& in, TrainConfig& config);
void read_config(const std::string& path, TrainConfig& config);
void write_config(std::ostream& out, const TrainConfig& config);

ModelConfig model_config(const TrainConfig& config, std::size_t input_dim, std::size_t num_labels);

// ---------------------------------------------------------------------------
// Optimization

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::size_t step = 0;  // number of updates applied so far
};

AdamState adam_init(const ParamStore& params);

// One bias-corrected Adam update with t = state.step + 1. Throws
// NumericError (leaving everything untouched) if any gradient is non-finite.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr,
               const AdamOptions& options = {});

// Returns lr * decay when the best validation loss is `patience`, 2*patience,
// ... evaluations old; otherwise lr.
double lr_schedule(std::span<const double> val_history, double lr, double decay, std::size_t patience = 1);

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradients(Gradients& grads, double max_norm);

// ---------------------------------------------------------------------------
// Batching

struct PaddedBatch {
  Tensor frames;                     // B x T_max x D, zero padded
  std::vector<std::size_t> lengths;  // true frame counts

  std::size_t size() const { return lengths.size(); }
  // The unpadded frames of utterance b.
  Tensor utterance(std::size_t b) const;
};

PaddedBatch pad_batch(std::span<const Tensor* const> utterances);

struct BatchResult {
  double mean_loss = 0.0;             // over feasible utterances
  Gradients grads;                    // of mean_loss
  std::vector<double> losses;         // per utterance; NaN when skipped
  std::size_t used = 0;
  std::size_t skipped = 0;            // infeasible utterances
};

// Mean CTC loss over the batch and its gradient. Each utterance runs on its
// true length; gradients are summed in batch order regardless of threads.
BatchResult batch_loss(const ParamStore& params, const ModelConfig& config, const PaddedBatch& batch,
                       std::span<const std::vector<int>> labels, std::size_t threads = 1,
                       bool with_gradients = true);

// ---------------------------------------------------------------------------
// Checkpoints and training

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_ter = 0.0;
  double lr = 0.0;
};

// `epoch train_loss val_loss val_ter lr`
std::string format_metrics_line(const EpochMetrics& m);

struct Checkpoint {
  TrainConfig config;
  ModelConfig model;
  std::size_t epoch = 0;
  double lr = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  ParamStore params;
  AdamState adam;
  std::vector<EpochMetrics> history;
  std::vector<double> prior;
};

// Versioned text format. Reals use the shortest decimal form that reads
// back to the identical double, so save -> load -> save is byte-identical.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

struct DecodeOptions {
  std::size_t beam_width = 0;  // 0 = greedy
  double prior_alpha = 1.0;
};

struct UtteranceResult {
  std::string utterance_id;
  std::vector<int> hyp;
  std::vector<int> ref;
  EditStats stats;
};

struct EvalReport {
  EditStats total;
  std::vector<UtteranceResult> utterances;
  double mean_loss = 0.0;
  std::size_t skipped = 0;

  double ter() const { return total.ref_length ? total.rate() : 0.0; }
};

// Decodes frontend-processed features with the checkpoint's model.
std::vector<Hypothesis> decode_features(const Checkpoint& ckpt, const std::vector<FeatureSequence>& feats,
                                        const DecodeOptions& options, std::size_t threads = 0);

// Applies the checkpoint's frontend to raw features, decodes and scores
// against `labels` (matched by utterance id).
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<FeatureSequence>& raw_features,
                    const std::vector<LabelSequence>& labels, const DecodeOptions& options,
                    std::size_t threads = 0);

struct TrainResult {
  Checkpoint last;
  Checkpoint best;
  std::vector<EpochMetrics> history;
  std::size_t skipped_infeasible = 0;
  std::optional<EvalReport> test;
};

// Full training run. Writes `metrics.txt`, `last.ckpt` and `best.ckpt` under
// config.out_dir (plus `test_report.txt` when a test set is configured).
// With `resume`, training continues from that checkpoint and follows the
// same trajectory as an uninterrupted run.
TrainResult train(const TrainConfig& config, std::ostream* log = nullptr,
                  const std::optional<std::string>& resume = std::nullopt);

// 64-bit FNV-1a; drives the validation split.
std::uint64_t fnv1a(const std::string& text);

}  // namespace hrctc
