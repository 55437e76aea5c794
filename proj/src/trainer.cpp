#include "hrctc/trainer.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "hrctc/text_io.h"
#include "parallel.h"

namespace hrctc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Utterance {
  std::string id;
  Tensor frames;  // after the frontend
  std::vector<int> labels;
};

std::vector<Utterance> join_by_id(const std::vector<FeatureSequence>& feats,
                                  const std::vector<LabelSequence>& labels, std::ostream* log) {
  std::map<std::string, const LabelSequence*> by_id;
  for (const auto& l : labels) by_id.emplace(l.utterance_id, &l);
  std::vector<Utterance> out;
  std::size_t missing = 0;
  for (const auto& f : feats) {
    auto it = by_id.find(f.utterance_id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    out.push_back({f.utterance_id, f.frames, it->second->tokens});
  }
  if (missing && log) *log << "warning: " << missing << " utterances without labels ignored\n";
  return out;
}

std::vector<Utterance> load_set(const std::string& feats_path, const std::string& labels_path,
                                const FrontendConfig& frontend, std::ostream* log) {
  return join_by_id(apply_frontend(read_features(feats_path), frontend), read_labels(labels_path), log);
}

void validate_labels(const std::vector<Utterance>& utts, std::size_t num_labels) {
  for (const auto& u : utts) {
    if (u.labels.empty()) throw ParseError("utterance '" + u.id + "' has an empty label sequence");
    for (int id : u.labels) {
      if (id < 1 || static_cast<std::size_t>(id) > num_labels) {
        throw ParseError("utterance '" + u.id + "' has label " + std::to_string(id) +
                         " outside [1, " + std::to_string(num_labels) + "]");
      }
    }
  }
}

struct SetScore {
  double mean_loss = 0.0;
  EditStats edits;
  std::size_t skipped = 0;
};

SetScore score_set(const ParamStore& params, const ModelConfig& model, const std::vector<Utterance>& utts,
                   std::span<const double> prior, double prior_alpha, std::size_t threads) {
  std::vector<double> losses(utts.size(), kNaN);
  std::vector<EditStats> edits(utts.size());
  detail::parallel_for(utts.size(), threads, [&](std::size_t i) {
    Tape tape;
    Var logits = model_logits(tape, params, model, utts[i].frames);
    try {
      losses[i] = ctc_loss(logits.value(), utts[i].labels).loss;
    } catch (const InfeasibleError&) {
    }
    const Tensor scores = prior_normalize(log_softmax_rows(logits.value()), prior, prior_alpha);
    edits[i] = token_error_rate(greedy_decode(scores).tokens, utts[i].labels);
  });
  SetScore score;
  std::size_t used = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    score.edits += edits[i];
    if (std::isnan(losses[i])) {
      ++score.skipped;
    } else {
      score.mean_loss += losses[i];
      ++used;
    }
  }
  score.mean_loss = used ? score.mean_loss / static_cast<double>(used) : kNaN;
  return score;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void write_report(const std::string& path, const EvalReport& report, const TokenTable& tokens) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write report '" + path + "'");
  for (const auto& u : report.utterances) {
    out << u.utterance_id << "  errors " << u.stats.errors() << " / " << u.stats.ref_length << "  TER "
        << format_real(u.stats.rate()) << '\n';
    out << render_alignment(u.hyp, u.ref, tokens.symbols()) << '\n';
  }
  out << "corpus  S " << report.total.substitutions << "  D " << report.total.deletions << "  I "
      << report.total.insertions << "  N " << report.total.ref_length << "  TER "
      << format_real(report.ter()) << '\n';
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string format_metrics_line(const EpochMetrics& m) {
  return std::to_string(m.epoch) + ' ' + format_real(m.train_loss) + ' ' + format_real(m.val_loss) + ' ' +
         format_real(m.val_ter) + ' ' + format_real(m.lr);
}

// ---------------------------------------------------------------------------
// Batching

Tensor PaddedBatch::utterance(std::size_t b) const {
  const std::size_t t_max = frames.shape()[1], dim = frames.shape()[2];
  const std::size_t len = lengths.at(b);
  const auto begin = frames.data().begin() + static_cast<std::ptrdiff_t>(b * t_max * dim);
  return Tensor({len, dim}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(len * dim)));
}

PaddedBatch pad_batch(std::span<const Tensor* const> utterances) {
  if (utterances.empty()) throw ArgumentError("pad_batch on an empty batch");
  const std::size_t dim = utterances[0]->cols();
  std::size_t t_max = 0;
  for (const Tensor* u : utterances) {
    if (u->cols() != dim) throw ShapeError("pad_batch: feature dimensions differ");
    t_max = std::max(t_max, u->rows());
  }
  PaddedBatch batch;
  batch.frames = Tensor({utterances.size(), t_max, dim}, 0.0);
  for (std::size_t b = 0; b < utterances.size(); ++b) {
    const Tensor& u = *utterances[b];
    std::copy(u.data().begin(), u.data().end(),
              batch.frames.data().begin() + static_cast<std::ptrdiff_t>(b * t_max * dim));
    batch.lengths.push_back(u.rows());
  }
  return batch;
}

BatchResult batch_loss(const ParamStore& params, const ModelConfig& config, const PaddedBatch& batch,
                       std::span<const std::vector<int>> labels, std::size_t threads, bool with_gradients) {
  if (labels.size() != batch.size()) throw ArgumentError("batch_loss: labels/batch size mismatch");
  const std::size_t n = batch.size();
  std::vector<double> losses(n, kNaN);
  std::vector<Gradients> grads(with_gradients ? n : 0);
  detail::parallel_for(n, threads, [&](std::size_t b) {
    const Tensor frames = batch.utterance(b);
    if (frames.rows() < min_frames(labels[b])) return;
    Tape tape;
    Var loss = model_ctc_loss(tape, params, config, frames, labels[b]);
    losses[b] = loss.value().item();
    if (with_gradients) grads[b] = tape.backward(loss, params);
  });

  BatchResult result;
  result.losses = losses;
  for (std::size_t b = 0; b < n; ++b) {
    if (std::isnan(losses[b])) {
      ++result.skipped;
      continue;
    }
    ++result.used;
    result.mean_loss += losses[b];
  }
  if (result.used == 0) {
    result.mean_loss = kNaN;
    if (with_gradients) {
      for (const auto& [name, t] : params) result.grads.emplace(name, Tensor(t.shape(), 0.0));
    }
    return result;
  }
  const double inv = 1.0 / static_cast<double>(result.used);
  result.mean_loss *= inv;
  if (with_gradients) {
    for (const auto& [name, t] : params) result.grads.emplace(name, Tensor(t.shape(), 0.0));
    for (std::size_t b = 0; b < n; ++b) {
      if (std::isnan(losses[b])) continue;
      for (auto& [name, g] : result.grads) {
        const auto src = grads[b].at(name).data();
        auto dst = g.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    for (auto& [_, g] : result.grads) {
      for (double& v : g.data()) v *= inv;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Decoding and evaluation

std::vector<Hypothesis> decode_features(const Checkpoint& ckpt, const std::vector<FeatureSequence>& feats,
                                        const DecodeOptions& options, std::size_t threads) {
  std::vector<Hypothesis> hyps(feats.size());
  detail::parallel_for(feats.size(), threads, [&](std::size_t i) {
    const Tensor log_post = model_log_posteriors(ckpt.params, ckpt.model, feats[i].frames);
    const Tensor scores = prior_normalize(log_post, ckpt.prior, options.prior_alpha);
    if (options.beam_width == 0) {
      hyps[i] = greedy_decode(scores);
    } else {
      hyps[i] = prefix_beam_decode(scores, options.beam_width).front();
    }
  });
  return hyps;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<FeatureSequence>& raw_features,
                    const std::vector<LabelSequence>& labels, const DecodeOptions& options,
                    std::size_t threads) {
  const std::vector<Utterance> utts =
      join_by_id(apply_frontend(raw_features, ckpt.config.frontend), labels, nullptr);
  std::vector<FeatureSequence> feats;
  feats.reserve(utts.size());
  for (const auto& u : utts) feats.push_back({u.id, "", u.frames});
  const std::vector<Hypothesis> hyps = decode_features(ckpt, feats, options, threads);

  std::vector<double> losses(utts.size(), kNaN);
  detail::parallel_for(utts.size(), threads, [&](std::size_t i) {
    if (utts[i].labels.empty() || utts[i].frames.rows() < min_frames(utts[i].labels)) return;
    Tape tape;
    losses[i] = model_ctc_loss(tape, ckpt.params, ckpt.model, utts[i].frames, utts[i].labels).value().item();
  });

  EvalReport report;
  std::size_t used = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (utts[i].labels.empty()) continue;
    UtteranceResult r{utts[i].id, hyps[i].tokens, utts[i].labels,
                      token_error_rate(hyps[i].tokens, utts[i].labels)};
    report.total += r.stats;
    report.utterances.push_back(std::move(r));
    if (std::isnan(losses[i])) {
      ++report.skipped;
    } else {
      report.mean_loss += losses[i];
      ++used;
    }
  }
  report.mean_loss = used ? report.mean_loss / static_cast<double>(used) : kNaN;
  return report;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const TrainConfig& config, std::ostream* log, const std::optional<std::string>& resume) {
  if (config.train_features.empty() || config.train_labels.empty()) {
    throw ArgumentError("train needs train_features and train_labels");
  }
  if (config.batch_size == 0) throw ArgumentError("batch_size must be >= 1");

  std::vector<Utterance> all = load_set(config.train_features, config.train_labels, config.frontend, log);
  if (all.empty()) throw ParseError("no training utterances with labels");

  std::size_t num_labels = config.num_labels;
  TokenTable tokens;
  if (!config.tokens.empty()) {
    tokens = read_tokens(config.tokens);
    if (num_labels == 0) num_labels = tokens.num_labels();
  }
  if (num_labels == 0) throw ArgumentError("set num_labels or provide a token table");
  if (tokens.symbols().empty()) tokens = TokenTable::numbered(num_labels);
  validate_labels(all, num_labels);

  std::vector<Utterance> train_set, valid_set;
  if (!config.valid_features.empty()) {
    train_set = std::move(all);
    valid_set = load_set(config.valid_features, config.valid_labels, config.frontend, log);
  } else {
    const std::uint64_t threshold = static_cast<std::uint64_t>(config.val_fraction * 10000.0);
    for (auto& u : all) {
      ((fnv1a(u.id) % 10000) < threshold ? valid_set : train_set).push_back(std::move(u));
    }
    if (valid_set.empty() && train_set.size() > 1 && config.val_fraction > 0.0) {
      auto smallest = std::min_element(train_set.begin(), train_set.end(), [](const auto& a, const auto& b) {
        return fnv1a(a.id) < fnv1a(b.id);
      });
      valid_set.push_back(std::move(*smallest));
      train_set.erase(smallest);
    }
  }
  if (train_set.empty()) throw ArgumentError("no utterances left for training after the validation split");
  validate_labels(valid_set, num_labels);

  const std::size_t input_dim = train_set.front().frames.cols();
  std::vector<LabelSequence> train_labels;
  for (const auto& u : train_set) train_labels.push_back({u.id, u.labels});

  Checkpoint state;
  if (resume) {
    state = load_checkpoint(*resume);
    if (state.model.input_dim != input_dim || state.model.num_labels != num_labels) {
      throw ArgumentError("checkpoint '" + *resume + "' does not match the training data");
    }
    state.config.max_epochs = config.max_epochs;
    state.config.out_dir = config.out_dir;
    state.config.threads = config.threads;
  } else {
    state.config = config;
    state.config.num_labels = num_labels;
    state.model = model_config(config, input_dim, num_labels);
    state.params = init_model(state.model, config.seed);
    state.adam = adam_init(state.params);
    state.lr = config.lr_init;
    state.best_val_loss = std::numeric_limits<double>::infinity();
    state.prior = label_prior(train_labels, num_labels + 1);
  }
  const TrainConfig& cfg = state.config;

  std::filesystem::create_directories(cfg.out_dir);
  const std::string metrics_path = cfg.out_dir + "/metrics.txt";
  const std::string last_path = cfg.out_dir + "/last.ckpt";
  const std::string best_path = cfg.out_dir + "/best.ckpt";
  {
    // The metrics file always mirrors the checkpoint's history.
    std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
    for (const auto& m : state.history) metrics << format_metrics_line(m) << '\n';
  }

  TrainResult result;
  Checkpoint best = state;
  if (!resume) {
    save_checkpoint(last_path, state);
    save_checkpoint(best_path, state);
  } else if (std::filesystem::exists(best_path)) {
    best = load_checkpoint(best_path);
  }

  if (log) {
    *log << "training " << to_string(cfg.head) << " head on " << train_set.size() << " utterances ("
         << valid_set.size() << " validation), " << state.params.num_scalars() << " parameters\n";
  }

  for (std::size_t epoch = state.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    if (state.lr < cfg.min_lr) break;
    const auto order = shuffled_order(train_set.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Tensor*> frames;
      std::vector<std::vector<int>> labels;
      for (std::size_t i = start; i < end; ++i) {
        frames.push_back(&train_set[order[i]].frames);
        labels.push_back(train_set[order[i]].labels);
      }
      BatchResult br = batch_loss(state.params, state.model, pad_batch(frames), labels, cfg.threads);
      result.skipped_infeasible += br.skipped;
      if (br.used == 0) continue;
      if (!std::isfinite(br.mean_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      if (cfg.clip_norm > 0.0) clip_gradients(br.grads, cfg.clip_norm);
      try {
        adam_step(state.params, br.grads, state.adam, state.lr);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      loss_sum += br.mean_loss * static_cast<double>(br.used);
      loss_count += br.used;
    }

    const SetScore val = score_set(state.params, state.model, valid_set.empty() ? train_set : valid_set,
                                   state.prior, cfg.prior_alpha, cfg.threads);
    EpochMetrics m{epoch, loss_count ? loss_sum / static_cast<double>(loss_count) : kNaN, val.mean_loss,
                   val.edits.ref_length ? val.edits.rate() : 0.0, state.lr};
    state.history.push_back(m);
    state.epoch = epoch;

    const bool improved = val.mean_loss < state.best_val_loss;
    if (improved) {
      state.best_val_loss = val.mean_loss;
      state.best_epoch = epoch;
    }
    std::vector<double> val_history;
    for (const auto& h : state.history) val_history.push_back(h.val_loss);
    state.lr = lr_schedule(val_history, state.lr, cfg.lr_decay, cfg.patience);

    {
      std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
      metrics << format_metrics_line(m) << '\n';
    }
    save_checkpoint(last_path, state);
    if (improved) {
      best = state;
      save_checkpoint(best_path, best);
    }
    if (log) *log << "epoch " << format_metrics_line(m) << (improved ? " *" : "") << '\n';
  }

  if (!cfg.test_features.empty()) {
    EvalReport report = evaluate(best, read_features(cfg.test_features), read_labels(cfg.test_labels),
                                 DecodeOptions{0, cfg.prior_alpha}, cfg.threads);
    write_report(cfg.out_dir + "/test_report.txt", report, tokens);
    if (log) *log << "test TER " << format_real(report.ter()) << '\n';
    result.test = std::move(report);
  }

  result.history = state.history;
  result.last = std::move(state);
  result.best = std::move(best);
  return result;
}

}  // namespace hrctc
