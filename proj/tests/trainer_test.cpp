#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hrctc/ctc.h"
#include "hrctc/error.h"
#include "hrctc/trainer.h"
#include "test_util.h"

namespace hrctc {
namespace {

namespace fs = std::filesystem;
using testing::random_labels;
using testing::random_matrix;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("hrctc_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small one-hot corpus on disk plus a config that trains on it quickly.
TrainConfig tiny_setup(const TempDir& dir, HeadKind head = HeadKind::single) {
  SynthConfig synth;
  synth.num_utts = 40;
  synth.num_labels = 4;
  synth.min_len = 2;
  synth.max_len = 4;
  synth.seed = 5;
  const SynthCorpus corpus = synth_generate(synth);
  write_features(dir.file("train.feats"), corpus.features);
  write_labels(dir.file("train.labels"), corpus.labels);
  write_tokens(dir.file("tokens.txt"), corpus.tokens);

  TrainConfig cfg;
  cfg.train_features = dir.file("train.feats");
  cfg.train_labels = dir.file("train.labels");
  cfg.tokens = dir.file("tokens.txt");
  cfg.out_dir = dir.file("exp");
  cfg.hidden_dim = 6;
  cfg.num_layers = 1;
  cfg.head = head;
  cfg.frontend = {false, false, 0, 0, 1};
  cfg.lr_init = 0.01;
  cfg.batch_size = 4;
  cfg.val_fraction = 0.25;
  cfg.max_epochs = 3;
  cfg.threads = 2;
  return cfg;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore params;
  params.add("w", Tensor::from_rows({{0.5, -1.0}}));
  AdamState state = adam_init(params);
  adam_step(params, Gradients{{"w", Tensor::from_rows({{0.0, 0.0}})}}, state, 0.1);
  EXPECT_EQ(params.at("w"), Tensor::from_rows({{0.5, -1.0}}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepsMatchHandValues) {
  ParamStore params;
  params.add("w", Tensor::scalar(0.0));
  AdamState state = adam_init(params);
  Gradients g{{"w", Tensor::scalar(1.0)}};
  // m_hat = v_hat = 1 on every step when the gradient is constant.
  adam_step(params, g, state, 0.001);
  EXPECT_NEAR(params.at("w").item(), -0.001 / (1.0 + 1e-8), 1e-18);
  adam_step(params, g, state, 0.001);
  EXPECT_NEAR(params.at("w").item(), -0.002 / (1.0 + 1e-8), 1e-17);
  EXPECT_NEAR(state.m.at("w").item(), 0.19, 1e-15);
  EXPECT_NEAR(state.v.at("w").item(), 0.001999, 1e-15);
}

TEST(Adam, NonFiniteGradientAbortsWithoutMutation) {
  ParamStore params;
  params.add("a", Tensor::scalar(1.0));
  params.add("b", Tensor::scalar(2.0));
  AdamState state = adam_init(params);
  const ParamStore before = params;
  Gradients g{{"a", Tensor::scalar(0.5)}, {"b", Tensor::scalar(std::nan(""))}};
  EXPECT_THROW(adam_step(params, g, state, 0.1), NumericError);
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 0u);
  EXPECT_EQ(state.m.at("a").item(), 0.0);
  EXPECT_THROW(adam_step(params, Gradients{{"a", Tensor::scalar(0.0)}}, state, 0.1), ArgumentError);
}

TEST(LrSchedule, DecaysOnStalledValidation) {
  auto next = [](std::vector<double> h, std::size_t patience = 1) {
    return lr_schedule(h, 1.0, 0.5, patience);
  };
  EXPECT_EQ(next({}), 1.0);
  EXPECT_EQ(next({3.0}), 1.0);
  EXPECT_EQ(next({3.0, 2.0, 1.0}), 1.0);
  EXPECT_EQ(next({1.0, 2.0}), 0.5);
  EXPECT_EQ(next({1.0, 2.0, 3.0}), 0.5);
  EXPECT_EQ(next({1.0, 1.0}), 0.5);
  EXPECT_EQ(next({1.0, 2.0}, 2), 1.0);
  EXPECT_EQ(next({1.0, 2.0, 3.0}, 2), 0.5);
  EXPECT_EQ(next({1.0, 2.0, 3.0, 4.0}, 2), 1.0);
  EXPECT_THROW(lr_schedule(std::vector<double>{1.0}, 1.0, 1.0), ArgumentError);
  EXPECT_THROW(lr_schedule(std::vector<double>{1.0}, 1.0, 0.5, 0), ArgumentError);
}

TEST(ClipGradients, RescalesToMaxNorm) {
  Gradients g{{"a", Tensor::from_rows({{3.0}})}, {"b", Tensor::from_rows({{4.0}})}};
  EXPECT_DOUBLE_EQ(clip_gradients(g, 10.0), 5.0);
  EXPECT_EQ(g.at("a").item(), 3.0);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
  EXPECT_NEAR(g.at("a").item(), 0.6, 1e-15);
  EXPECT_NEAR(g.at("b").item(), 0.8, 1e-15);
}

TEST(PadBatch, PadsWithZerosAndRecoversUtterances) {
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(rng, 3, 2), b = random_matrix(rng, 5, 2);
  const Tensor* ptrs[] = {&a, &b};
  const PaddedBatch batch = pad_batch(ptrs);
  EXPECT_EQ(batch.frames.shape(), (std::vector<std::size_t>{2, 5, 2}));
  EXPECT_EQ(batch.lengths, (std::vector<std::size_t>{3, 5}));
  EXPECT_EQ(batch.utterance(0), a);
  EXPECT_EQ(batch.utterance(1), b);
  for (std::size_t i = 6; i < 10; ++i) EXPECT_EQ(batch.frames.data()[i], 0.0);
  const Tensor c = random_matrix(rng, 2, 3);
  const Tensor* bad[] = {&a, &c};
  EXPECT_THROW(pad_batch(bad), ShapeError);
}

TEST(BatchLoss, EqualsMeanOfIndividualLosses) {
  ModelConfig model{3, 4, 5, 2, HeadKind::highrank, 3, 15.0};
  const ParamStore params = init_model(model, 7);
  std::mt19937_64 rng(8);
  std::vector<Tensor> frames;
  std::vector<std::vector<int>> labels;
  for (std::size_t len : {4u, 7u, 7u, 2u, 6u}) {
    frames.push_back(random_matrix(rng, len, 3));
    labels.push_back(random_labels(rng, 2, 4));
  }
  labels[3] = {1, 1};  // 2 frames cannot emit a repeated label
  std::vector<const Tensor*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const PaddedBatch batch = pad_batch(ptrs);

  const BatchResult one = batch_loss(params, model, batch, labels, 1);
  const BatchResult four = batch_loss(params, model, batch, labels, 4);
  EXPECT_EQ(one.used, 4u);
  EXPECT_EQ(one.skipped, 1u);
  EXPECT_TRUE(std::isnan(one.losses[3]));
  EXPECT_EQ(one.mean_loss, four.mean_loss);
  EXPECT_EQ(one.grads, four.grads);

  double mean = 0.0;
  Gradients expect;
  for (const auto& [name, t] : params) expect.emplace(name, Tensor(t.shape(), 0.0));
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (b == 3) continue;
    Tape tape;
    Var loss = model_ctc_loss(tape, params, model, frames[b], labels[b]);
    mean += loss.value().item() / 4.0;
    for (const auto& [name, g] : tape.backward(loss, params)) {
      for (std::size_t i = 0; i < g.size(); ++i) expect.at(name).data()[i] += g.data()[i] / 4.0;
    }
  }
  EXPECT_NEAR(one.mean_loss, mean, 1e-10);
  for (const auto& [name, g] : expect) EXPECT_LT(max_abs_diff(one.grads.at(name), g), 1e-10) << name;
}

TEST(BatchLoss, HighRankStepReachesEveryParameter) {
  ModelConfig model{3, 4, 5, 2, HeadKind::highrank, 0, 15.0};
  ParamStore params = init_model(model, 9);
  std::mt19937_64 rng(10);
  std::vector<Tensor> frames;
  std::vector<std::vector<int>> labels;
  for (int b = 0; b < 3; ++b) {
    frames.push_back(random_matrix(rng, 6, 3));
    labels.push_back(random_labels(rng, 3, 4));
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const BatchResult r = batch_loss(params, model, pad_batch(ptrs), labels, 2);
  for (const auto& name : params.names()) {
    double norm = 0.0;
    for (double v : r.grads.at(name).data()) norm += v * v;
    EXPECT_GT(norm, 0.0) << name;
  }
  const ParamStore before = params;
  AdamState state = adam_init(params);
  adam_step(params, r.grads, state, 0.001);
  for (const auto& name : params.names()) EXPECT_FALSE(params.at(name) == before.at(name)) << name;
}

TEST(Config, ParsesFileWithComments) {
  TrainConfig cfg = config_preset("librispeech");
  EXPECT_EQ(cfg.batch_size, 64u);
  std::istringstream in("# comment\nhead = highrank  # trailing\n\nlambda=20\nbatch_size = 8\ndeltas = false\n");
  read_config(in, cfg);
  EXPECT_EQ(cfg.head, HeadKind::highrank);
  EXPECT_EQ(cfg.temperature, 20.0);
  EXPECT_EQ(cfg.batch_size, 8u);
  EXPECT_FALSE(cfg.frontend.deltas);
  EXPECT_EQ(cfg.lr_init, 0.0004);
  set_config_value(cfg, "batch_size", "2");
  EXPECT_EQ(cfg.batch_size, 2u);

  std::istringstream unknown("heads = mom\n");
  EXPECT_THROW(read_config(unknown, cfg), ParseError);
  std::istringstream no_eq("head mom\n");
  EXPECT_THROW(read_config(no_eq, cfg), ParseError);
  std::istringstream bad_value("batch_size = -3\n");
  EXPECT_THROW(read_config(bad_value, cfg), ParseError);
  EXPECT_THROW(config_preset("timit"), ParseError);
}

TEST(Config, WriteReadRoundTrips) {
  TrainConfig cfg = config_preset("wsj");
  cfg.head = HeadKind::mom;
  cfg.temperature = 0.1;
  cfg.frontend.keep_every = 2;
  cfg.out_dir = "some/dir";
  std::stringstream buf;
  write_config(buf, cfg);
  TrainConfig back;
  read_config(buf, back);
  for (const auto& key : config_keys()) EXPECT_EQ(get_config_value(back, key), get_config_value(cfg, key)) << key;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  ModelConfig model{3, 4, 5, 1, HeadKind::highrank, 2, 15.0};
  Checkpoint ckpt;
  ckpt.model = model;
  ckpt.params = init_model(model, 11);
  ckpt.adam = adam_init(ckpt.params);
  std::mt19937_64 rng(12);
  Gradients g;
  for (const auto& [name, t] : ckpt.params) g.emplace(name, random_matrix(rng, t.rows(), t.cols()));
  adam_step(ckpt.params, g, ckpt.adam, 0.01);
  ckpt.epoch = 3;
  ckpt.lr = 0.1 * 0.7;
  ckpt.best_val_loss = 1.0 / 3.0;
  ckpt.best_epoch = 2;
  ckpt.history = {{1, 2.5, 1.0 / 3.0, 0.25, 0.1}, {2, 1.0 / 7.0, 0.3, 0.2, 0.07}};
  ckpt.prior = {0.5, 0.2, 0.1, 0.1, 0.1};

  std::stringstream first;
  save_checkpoint(first, ckpt);
  const Checkpoint loaded = load_checkpoint(first);
  EXPECT_EQ(loaded.params, ckpt.params);
  EXPECT_EQ(loaded.adam.v, ckpt.adam.v);
  EXPECT_EQ(loaded.lr, ckpt.lr);
  std::stringstream second;
  save_checkpoint(second, loaded);
  EXPECT_EQ(first.str(), second.str());

  std::istringstream garbage("not a checkpoint\n");
  EXPECT_THROW(load_checkpoint(garbage), ParseError);
  std::istringstream truncated(first.str().substr(0, first.str().size() / 2));
  EXPECT_THROW(load_checkpoint(truncated), ParseError);
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 14695981039346656037ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Train, ZeroEpochsWritesInitialCheckpoint) {
  TempDir dir;
  TrainConfig cfg = tiny_setup(dir);
  cfg.max_epochs = 0;
  const TrainResult r = train(cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(fs::exists(cfg.out_dir + "/last.ckpt"));
  EXPECT_TRUE(fs::exists(cfg.out_dir + "/best.ckpt"));
  EXPECT_EQ(slurp(cfg.out_dir + "/metrics.txt"), "");
  const Checkpoint ckpt = load_checkpoint(cfg.out_dir + "/last.ckpt");
  EXPECT_EQ(ckpt.epoch, 0u);
  EXPECT_EQ(ckpt.params, init_model(ckpt.model, cfg.seed));
}

TEST(Train, ValidationLossFallsOverFirstEpochs) {
  TempDir dir;
  TrainConfig cfg = tiny_setup(dir, HeadKind::highrank);
  const TrainResult r = train(cfg);
  ASSERT_EQ(r.history.size(), 3u);
  for (std::size_t e = 1; e < 3; ++e) EXPECT_LT(r.history[e].val_loss, r.history[e - 1].val_loss);
  std::istringstream lines(slurp(cfg.out_dir + "/metrics.txt"));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) EXPECT_EQ(line, format_metrics_line(r.history[count++]));
  EXPECT_EQ(count, 3u);
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  TempDir dir;
  TrainConfig cfg = tiny_setup(dir, HeadKind::mom);
  cfg.max_epochs = 4;
  const TrainResult straight = train(cfg);
  const std::string straight_metrics = slurp(cfg.out_dir + "/metrics.txt");

  cfg.out_dir = dir.file("exp2");
  cfg.max_epochs = 2;
  train(cfg);
  cfg.max_epochs = 4;
  cfg.threads = 1;
  const TrainResult resumed = train(cfg, nullptr, cfg.out_dir + "/last.ckpt");
  EXPECT_EQ(slurp(cfg.out_dir + "/metrics.txt"), straight_metrics);
  EXPECT_EQ(resumed.last.params, straight.last.params);
  EXPECT_EQ(resumed.best.epoch, straight.best.epoch);
}

TEST(Train, RejectsMissingInputs) {
  TrainConfig cfg;
  EXPECT_THROW(train(cfg), ArgumentError);
  TempDir dir;
  cfg = tiny_setup(dir);
  cfg.train_features = dir.file("missing.feats");
  EXPECT_THROW(train(cfg), ParseError);
}

}  // namespace
}  // namespace hrctc
