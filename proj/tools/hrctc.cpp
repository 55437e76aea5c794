#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "hrctc/error.h"
#include "hrctc/frontend.h"
#include "hrctc/selftest.h"
#include "hrctc/text_io.h"
#include "hrctc/trainer.h"

namespace fs = std::filesystem;
using namespace hrctc;

namespace {

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

TokenTable tokens_for(const Checkpoint& ckpt, const std::string& override_path) {
  const std::string path = override_path.empty() ? ckpt.config.tokens : override_path;
  if (!path.empty() && fs::exists(path)) return read_tokens(path);
  return TokenTable::numbered(ckpt.model.num_labels);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    seeds.push_back(static_cast<std::uint64_t>(parse_int(trim(item), "seed")));
  }
  if (seeds.empty()) throw ArgumentError("--seeds needs at least one seed");
  return seeds;
}

struct SynthArgs {
  SynthConfig config;
  std::string style = "one_hot";
  std::string out_dir = ".";
  std::string name = "train";
};

int run_synth(SynthArgs& args) {
  args.config.style = parse_synth_style(args.style);
  args.config.id_prefix = args.name;
  const SynthCorpus corpus = synth_generate(args.config);
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  write_features((dir / (args.name + ".feats")).string(), corpus.features);
  write_labels((dir / (args.name + ".labels")).string(), corpus.labels);
  write_tokens((dir / "tokens.txt").string(), corpus.tokens);
  std::cout << "wrote " << corpus.features.size() << " utterances to " << (dir / args.name).string()
            << ".{feats,labels}\n";
  return 0;
}

struct TrainArgs {
  std::string config_file;
  std::string preset = "wsj";
  std::string resume;
  std::string seeds;
  bool quiet = false;
  std::map<std::string, std::string> overrides;
};

int run_train(const TrainArgs& args) {
  TrainConfig config = config_preset(args.preset);
  if (!args.config_file.empty()) read_config(args.config_file, config);
  for (const auto& [key, value] : args.overrides) set_config_value(config, key, value);
  std::ostream* log = args.quiet ? nullptr : &std::cerr;

  if (args.seeds.empty()) {
    std::optional<std::string> resume;
    if (!args.resume.empty()) resume = args.resume;
    const TrainResult r = train(config, log, resume);
    std::cout << "best epoch " << r.best.epoch << "  val_loss " << format_real(r.best.best_val_loss) << '\n';
    if (r.test) std::cout << "test TER " << format_real(r.test->ter()) << '\n';
    return 0;
  }

  if (!args.resume.empty()) throw ArgumentError("--resume cannot be combined with --seeds");
  const std::vector<std::uint64_t> seeds = parse_seed_list(args.seeds);
  std::ostringstream table;
  table << "seed best_epoch val_ter test_ter\n";
  double val_sum = 0.0, test_sum = 0.0;
  bool have_test = true;
  for (std::uint64_t seed : seeds) {
    TrainConfig run = config;
    run.seed = seed;
    run.out_dir = (fs::path(config.out_dir) / ("seed" + std::to_string(seed))).string();
    const TrainResult r = train(run, log);
    const double val_ter = r.best.epoch ? r.best.history.back().val_ter : std::nan("");
    val_sum += val_ter;
    table << seed << ' ' << r.best.epoch << ' ' << format_real(val_ter) << ' ';
    if (r.test) {
      test_sum += r.test->ter();
      table << format_real(r.test->ter()) << '\n';
    } else {
      have_test = false;
      table << "-\n";
    }
  }
  const double n = static_cast<double>(seeds.size());
  table << "mean - " << format_real(val_sum / n) << ' ' << (have_test ? format_real(test_sum / n) : "-") << '\n';
  fs::create_directories(config.out_dir);
  std::ofstream((fs::path(config.out_dir) / "seeds.txt").string()) << table.str();
  std::cout << table.str();
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string features;
  std::string labels;
  std::string tokens;
  std::string report;
  std::size_t beam = 0;
  double prior_alpha = 1.0;
  std::size_t threads = 0;
};

int run_eval(const EvalArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const EvalReport report = evaluate(ckpt, read_features(args.features), read_labels(args.labels),
                                     {args.beam, args.prior_alpha}, args.threads);
  const TokenTable tokens = tokens_for(ckpt, args.tokens);
  if (!args.report.empty()) {
    std::ofstream out(args.report);
    if (!out) throw ParseError("cannot write report '" + args.report + "'");
    for (const auto& u : report.utterances) {
      out << u.utterance_id << "  errors " << u.stats.errors() << " / " << u.stats.ref_length << '\n';
      out << render_alignment(u.hyp, u.ref, tokens.symbols()) << '\n';
    }
  }
  std::cout << "utterances " << report.utterances.size() << "  S " << report.total.substitutions << "  D "
            << report.total.deletions << "  I " << report.total.insertions << "  N " << report.total.ref_length
            << "  TER " << format_real(report.ter()) << "  loss " << format_real(report.mean_loss) << '\n';
  return 0;
}

struct DecodeArgs {
  std::string checkpoint;
  std::string features;
  std::string tokens;
  std::string output;
  std::size_t beam = 0;
  double prior_alpha = 1.0;
  std::size_t threads = 0;
};

int run_decode(const DecodeArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto feats = apply_frontend(read_features(args.features), ckpt.config.frontend);
  const auto hyps = decode_features(ckpt, feats, {args.beam, args.prior_alpha}, args.threads);
  const TokenTable tokens = tokens_for(ckpt, args.tokens);
  std::ofstream file;
  if (!args.output.empty()) {
    file.open(args.output);
    if (!file) throw ParseError("cannot write '" + args.output + "'");
  }
  std::ostream& out = args.output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    out << feats[i].utterance_id;
    for (int id : hyps[i].tokens) out << ' ' << tokens.symbol(id);
    out << '\n';
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, bool tiny, const std::string& head) {
  std::vector<HeadKind> kinds;
  if (head == "all") {
    kinds = {HeadKind::single, HeadKind::mom, HeadKind::highrank};
  } else {
    kinds = {parse_head_kind(head)};
  }
  double worst = 0.0;
  for (HeadKind kind : kinds) {
    const GradCheckReport r = model_gradient_check({kind, seed, tiny, 1e-5});
    std::cout << to_string(kind) << "  params " << r.num_checked << "  max rel err "
              << format_real(r.max_rel_error) << "  at " << r.worst_param << '[' << r.worst_index << "]\n";
    worst = std::max(worst, r.max_rel_error);
  }
  std::cout << "max rel err " << format_real(worst) << '\n';
  return worst < 1e-6 ? 0 : 1;
}

int run_oracle(std::size_t cases, std::uint64_t seed, std::size_t max_frames, std::size_t max_labels) {
  const OracleReport r = ctc_oracle_suite(cases, seed, max_frames, max_labels);
  std::cout << "cases " << r.cases << "  max rel err " << format_real(r.max_rel_error) << '\n';
  return r.max_rel_error <= 1e-10 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training and evaluation tool for CTC acoustic models with high-rank output heads"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->capture_default_str();
  synth_cmd->add_option("--name", synth.name, "File stem and utterance id prefix")->capture_default_str();
  synth_cmd->add_option("--style", synth.style, "one_hot or context_multimodal")->capture_default_str();
  synth_cmd->add_option("--num-utts", synth.config.num_utts)->capture_default_str();
  synth_cmd->add_option("--num-labels", synth.config.num_labels, "K")->capture_default_str();
  synth_cmd->add_option("--min-len", synth.config.min_len)->capture_default_str();
  synth_cmd->add_option("--max-len", synth.config.max_len)->capture_default_str();
  synth_cmd->add_option("--min-frames", synth.config.min_frames_per_token)->capture_default_str();
  synth_cmd->add_option("--max-frames", synth.config.max_frames_per_token)->capture_default_str();
  synth_cmd->add_option("--noise", synth.config.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();
  synth_cmd->add_option("--feature-dim", synth.config.feature_dim)->capture_default_str();
  synth_cmd->add_option("--scale", synth.config.scale)->capture_default_str();
  synth_cmd->add_option("--embedding-seed", synth.config.embedding_seed)->capture_default_str();
  synth_cmd->add_option("--speakers", synth.config.num_speakers)->capture_default_str();
  synth_cmd->add_flag("--allow-repeats", synth.config.allow_repeats, "Allow a token to follow itself");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_args.config_file, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--preset", train_args.preset, "wsj or librispeech")->capture_default_str();
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--seeds", train_args.seeds, "Comma-separated seeds; trains one model per seed");
  train_cmd->add_flag("--quiet", train_args.quiet, "No per-epoch log");
  std::map<std::string, std::string> raw_overrides;
  for (const auto& key : config_keys()) {
    train_cmd->add_option(flag_name(key), raw_overrides[key], "Overrides config key '" + key + "'")
        ->group("Config overrides");
  }

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a labelled set");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--features", eval_args.features)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--labels", eval_args.labels)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tokens", eval_args.tokens, "Token table for the report");
  eval_cmd->add_option("--report", eval_args.report, "Write per-utterance alignments here");
  eval_cmd->add_option("--beam", eval_args.beam, "Prefix beam width; 0 = greedy")->capture_default_str();
  eval_cmd->add_option("--prior-alpha", eval_args.prior_alpha)->capture_default_str();
  eval_cmd->add_option("--threads", eval_args.threads)->capture_default_str();

  DecodeArgs decode_args;
  auto* decode_cmd = app.add_subcommand("decode", "Write hypotheses for a feature file");
  decode_cmd->add_option("--checkpoint", decode_args.checkpoint)->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--features", decode_args.features)->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--tokens", decode_args.tokens);
  decode_cmd->add_option("--output", decode_args.output, "Default: stdout");
  decode_cmd->add_option("--beam", decode_args.beam, "Prefix beam width; 0 = greedy")->capture_default_str();
  decode_cmd->add_option("--prior-alpha", decode_args.prior_alpha)->capture_default_str();
  decode_cmd->add_option("--threads", decode_args.threads)->capture_default_str();

  std::uint64_t check_seed = 1;
  bool tiny = false;
  std::string check_head = "all";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  grad_cmd->add_option("--seed", check_seed)->capture_default_str();
  grad_cmd->add_flag("--tiny", tiny, "2-layer encoder, hidden 6, K = 3");
  grad_cmd->add_option("--head", check_head, "single, mom, highrank or all")->capture_default_str();

  std::size_t oracle_cases = 200, oracle_frames = 6, oracle_labels = 4;
  std::uint64_t oracle_seed = 1;
  auto* oracle_cmd = app.add_subcommand("oracle", "Compare CTC against brute-force enumeration");
  oracle_cmd->add_option("--cases", oracle_cases)->capture_default_str();
  oracle_cmd->add_option("--seed", oracle_seed)->capture_default_str();
  oracle_cmd->add_option("--max-frames", oracle_frames)->capture_default_str();
  oracle_cmd->add_option("--max-labels", oracle_labels)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) {
      for (const auto& key : config_keys()) {
        if (train_cmd->count(flag_name(key))) train_args.overrides[key] = raw_overrides[key];
      }
      return run_train(train_args);
    }
    if (*eval_cmd) return run_eval(eval_args);
    if (*decode_cmd) return run_decode(decode_args);
    if (*grad_cmd) return run_gradcheck(check_seed, tiny, check_head);
    if (*oracle_cmd) return run_oracle(oracle_cases, oracle_seed, oracle_frames, oracle_labels);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
