#include "hrctc/frontend.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "hrctc/error.h"
#include "hrctc/text_io.h"

namespace hrctc {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  return out;
}

std::string at_line(std::size_t line_no) { return " (line " + std::to_string(line_no) + ")"; }

std::size_t clamp_index(long long t, std::size_t num_frames) {
  if (t < 0) return 0;
  if (static_cast<std::size_t>(t) >= num_frames) return num_frames - 1;
  return static_cast<std::size_t>(t);
}

// Regression delta over window +-2 with replicated edges.
Tensor regression_delta(const Tensor& x) {
  constexpr int kWindow = 2;
  const std::size_t frames = x.rows(), dim = x.cols();
  double denom = 0.0;
  for (int d = 1; d <= kWindow; ++d) denom += 2.0 * d * d;
  Tensor out = Tensor::matrix(frames, dim);
  for (std::size_t t = 0; t < frames; ++t) {
    for (int d = 1; d <= kWindow; ++d) {
      const std::size_t ahead = clamp_index(static_cast<long long>(t) + d, frames);
      const std::size_t behind = clamp_index(static_cast<long long>(t) - d, frames);
      for (std::size_t k = 0; k < dim; ++k) out(t, k) += d * (x(ahead, k) - x(behind, k));
    }
    for (std::size_t k = 0; k < dim; ++k) out(t, k) /= denom;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Token table

TokenTable::TokenTable(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty() || symbols_[0] != "<blk>") {
    throw ParseError("token table must map id 0 to <blk>");
  }
  std::set<std::string> seen;
  for (const auto& s : symbols_) {
    if (!seen.insert(s).second) throw ParseError("duplicate token symbol '" + s + "'");
  }
}

TokenTable TokenTable::numbered(std::size_t num_labels) {
  std::vector<std::string> symbols{"<blk>"};
  for (std::size_t k = 1; k <= num_labels; ++k) symbols.push_back("t" + std::to_string(k));
  return TokenTable(std::move(symbols));
}

const std::string& TokenTable::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw ArgumentError("token id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

int TokenTable::id(const std::string& symbol) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end()) throw ArgumentError("unknown token symbol '" + symbol + "'");
  return static_cast<int>(it - symbols_.begin());
}

// ---------------------------------------------------------------------------
// Readers and writers

std::vector<FeatureSequence> read_features(std::istream& in) {
  std::vector<FeatureSequence> seqs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 4) throw ParseError("malformed feature header '" + line + "'" + at_line(line_no));

    FeatureSequence seq;
    seq.utterance_id = fields[0];
    seq.speaker_id = fields[1];
    const long long frames = parse_int(fields[2], "frame count");
    const long long dim = parse_int(fields[3], "feature dimension");
    if (frames < 1 || dim < 1) throw ParseError("header needs T >= 1 and D >= 1" + at_line(line_no));
    if (!ids.insert(seq.utterance_id).second) {
      throw ParseError("duplicate utterance id '" + seq.utterance_id + "'" + at_line(line_no));
    }

    seq.frames = Tensor::matrix(static_cast<std::size_t>(frames), static_cast<std::size_t>(dim));
    for (std::size_t t = 0; t < seq.frames.rows(); ++t) {
      if (!std::getline(in, line)) {
        throw ParseError("unexpected end of file in utterance '" + seq.utterance_id + "'");
      }
      ++line_no;
      auto values = split_whitespace(line);
      if (values.size() != seq.frames.cols()) {
        throw ParseError("row has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(seq.frames.cols()) + at_line(line_no));
      }
      for (std::size_t k = 0; k < values.size(); ++k) {
        const double v = parse_real(values[k], "feature value");
        if (!std::isfinite(v)) throw ParseError("non-finite feature value" + at_line(line_no));
        seq.frames(t, k) = v;
      }
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

std::vector<FeatureSequence> read_features(const std::string& path) {
  auto in = open_input(path);
  return read_features(in);
}

void write_features(std::ostream& out, const std::vector<FeatureSequence>& seqs) {
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    const auto& seq = seqs[u];
    if (u) out << '\n';
    out << seq.utterance_id << ' ' << seq.speaker_id << ' ' << seq.num_frames() << ' ' << seq.dim()
        << '\n';
    for (std::size_t t = 0; t < seq.num_frames(); ++t) {
      for (std::size_t k = 0; k < seq.dim(); ++k) {
        if (k) out << ' ';
        out << format_real(seq.frames(t, k));
      }
      out << '\n';
    }
  }
}

void write_features(const std::string& path, const std::vector<FeatureSequence>& seqs) {
  auto out = open_output(path);
  write_features(out, seqs);
}

std::vector<LabelSequence> read_labels(std::istream& in) {
  std::vector<LabelSequence> labels;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    LabelSequence seq;
    seq.utterance_id = fields[0];
    if (!ids.insert(seq.utterance_id).second) {
      throw ParseError("duplicate utterance id '" + seq.utterance_id + "'" + at_line(line_no));
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const long long id = parse_int(fields[i], "token id");
      if (id < 1) throw ParseError("label ids must be >= 1 (0 is the blank)" + at_line(line_no));
      seq.tokens.push_back(static_cast<int>(id));
    }
    labels.push_back(std::move(seq));
  }
  return labels;
}

std::vector<LabelSequence> read_labels(const std::string& path) {
  auto in = open_input(path);
  return read_labels(in);
}

void write_labels(std::ostream& out, const std::vector<LabelSequence>& labels) {
  for (const auto& seq : labels) {
    out << seq.utterance_id;
    for (int id : seq.tokens) out << ' ' << id;
    out << '\n';
  }
}

void write_labels(const std::string& path, const std::vector<LabelSequence>& labels) {
  auto out = open_output(path);
  write_labels(out, labels);
}

TokenTable read_tokens(std::istream& in) {
  std::map<long long, std::string> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) throw ParseError("malformed token line '" + line + "'" + at_line(line_no));
    const long long id = parse_int(fields[1], "token id");
    if (id < 0 || !by_id.emplace(id, fields[0]).second) {
      throw ParseError("invalid or duplicate token id" + at_line(line_no));
    }
  }
  std::vector<std::string> symbols;
  for (const auto& [id, symbol] : by_id) {
    if (id != static_cast<long long>(symbols.size())) throw ParseError("token ids must be contiguous from 0");
    symbols.push_back(symbol);
  }
  return TokenTable(std::move(symbols));
}

TokenTable read_tokens(const std::string& path) {
  auto in = open_input(path);
  return read_tokens(in);
}

void write_tokens(std::ostream& out, const TokenTable& table) {
  for (std::size_t id = 0; id < table.symbols().size(); ++id) {
    out << table.symbols()[id] << ' ' << id << '\n';
  }
}

void write_tokens(const std::string& path, const TokenTable& table) {
  auto out = open_output(path);
  write_tokens(out, table);
}

// ---------------------------------------------------------------------------
// Transforms

FeatureSequence append_deltas(const FeatureSequence& seq) {
  const Tensor delta = regression_delta(seq.frames);
  const Tensor delta2 = regression_delta(delta);
  const std::size_t frames = seq.num_frames(), dim = seq.dim();
  FeatureSequence out{seq.utterance_id, seq.speaker_id, Tensor::matrix(frames, 3 * dim)};
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < dim; ++k) {
      out.frames(t, k) = seq.frames(t, k);
      out.frames(t, dim + k) = delta(t, k);
      out.frames(t, 2 * dim + k) = delta2(t, k);
    }
  }
  return out;
}

std::vector<FeatureSequence> cmvn_per_speaker(const std::vector<FeatureSequence>& seqs) {
  constexpr double kVarianceFloor = 1e-8;
  struct Stats {
    std::vector<double> sum, sum_sq;
    std::size_t count = 0;
  };
  std::map<std::string, Stats> stats;
  // Mean first, then centered second moment, for accuracy.
  for (const auto& seq : seqs) {
    auto& s = stats[seq.speaker_id];
    if (s.sum.empty()) {
      s.sum.assign(seq.dim(), 0.0);
      s.sum_sq.assign(seq.dim(), 0.0);
    } else if (s.sum.size() != seq.dim()) {
      throw ShapeError("speaker '" + seq.speaker_id + "' has utterances of different dimension");
    }
    for (std::size_t t = 0; t < seq.num_frames(); ++t) {
      for (std::size_t k = 0; k < seq.dim(); ++k) s.sum[k] += seq.frames(t, k);
    }
    s.count += seq.num_frames();
  }
  for (auto& [_, s] : stats) {
    for (double& v : s.sum) v /= static_cast<double>(s.count);
  }
  for (const auto& seq : seqs) {
    auto& s = stats[seq.speaker_id];
    for (std::size_t t = 0; t < seq.num_frames(); ++t) {
      for (std::size_t k = 0; k < seq.dim(); ++k) {
        const double c = seq.frames(t, k) - s.sum[k];
        s.sum_sq[k] += c * c;
      }
    }
  }

  std::vector<FeatureSequence> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs) {
    const auto& s = stats.at(seq.speaker_id);
    FeatureSequence norm = seq;
    for (std::size_t k = 0; k < seq.dim(); ++k) {
      const double var = std::max(s.sum_sq[k] / static_cast<double>(s.count), kVarianceFloor);
      const double inv_std = 1.0 / std::sqrt(var);
      for (std::size_t t = 0; t < seq.num_frames(); ++t) {
        norm.frames(t, k) = (seq.frames(t, k) - s.sum[k]) * inv_std;
      }
    }
    out.push_back(std::move(norm));
  }
  return out;
}

FeatureSequence splice(const FeatureSequence& seq, std::size_t left, std::size_t right) {
  const std::size_t frames = seq.num_frames(), dim = seq.dim();
  const std::size_t width = left + 1 + right;
  FeatureSequence out{seq.utterance_id, seq.speaker_id, Tensor::matrix(frames, width * dim)};
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t w = 0; w < width; ++w) {
      const long long src_t = static_cast<long long>(t) + static_cast<long long>(w) -
                              static_cast<long long>(left);
      const std::size_t src = clamp_index(src_t, frames);
      for (std::size_t k = 0; k < dim; ++k) out.frames(t, w * dim + k) = seq.frames(src, k);
    }
  }
  return out;
}

FeatureSequence skip_frames(const FeatureSequence& seq, std::size_t keep_every) {
  if (keep_every == 0) throw ArgumentError("keep_every must be >= 1");
  const std::size_t frames = seq.num_frames(), dim = seq.dim();
  const std::size_t kept = (frames + keep_every - 1) / keep_every;
  FeatureSequence out{seq.utterance_id, seq.speaker_id, Tensor::matrix(kept, dim)};
  for (std::size_t i = 0; i < kept; ++i) {
    for (std::size_t k = 0; k < dim; ++k) out.frames(i, k) = seq.frames(i * keep_every, k);
  }
  return out;
}

std::vector<FeatureSequence> apply_frontend(const std::vector<FeatureSequence>& seqs,
                                            const FrontendConfig& config) {
  std::vector<FeatureSequence> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs) out.push_back(config.deltas ? append_deltas(seq) : seq);
  if (config.cmvn) out = cmvn_per_speaker(out);
  for (auto& seq : out) {
    if (config.splice_left || config.splice_right) {
      seq = splice(seq, config.splice_left, config.splice_right);
    }
    if (config.keep_every != 1) seq = skip_frames(seq, config.keep_every);
  }
  return out;
}

std::size_t frontend_output_dim(std::size_t input_dim, const FrontendConfig& config) {
  std::size_t dim = config.deltas ? 3 * input_dim : input_dim;
  return dim * (config.splice_left + 1 + config.splice_right);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SynthStyle parse_synth_style(const std::string& name) {
  if (name == "one_hot") return SynthStyle::one_hot;
  if (name == "context_multimodal") return SynthStyle::context_multimodal;
  throw ParseError("unknown synthetic style '" + name + "'");
}

std::string to_string(SynthStyle style) {
  return style == SynthStyle::one_hot ? "one_hot" : "context_multimodal";
}

SynthCorpus synth_generate(const SynthConfig& config) {
  const std::size_t K = config.num_labels;
  if (K < 2) throw ArgumentError("synth_generate needs K >= 2");
  if (config.min_len < 1 || config.min_len > config.max_len) throw ArgumentError("invalid token length range");
  if (config.min_frames_per_token < 1 || config.min_frames_per_token > config.max_frames_per_token) {
    throw ArgumentError("invalid frames-per-token range");
  }
  if (!(config.noise_sigma >= 0.0)) throw ArgumentError("noise_sigma must be >= 0");
  if (config.num_speakers < 1) throw ArgumentError("num_speakers must be >= 1");

  // Prototype p is the emission vector; token k in mode m emits prototype
  // (k - 1 + m * K/2) mod K.
  std::vector<std::vector<double>> prototypes(K);
  std::size_t dim = K;
  if (config.style == SynthStyle::one_hot) {
    for (std::size_t p = 0; p < K; ++p) {
      prototypes[p].assign(K, 0.0);
      prototypes[p][p] = config.scale;
    }
  } else {
    if (config.feature_dim < 1) throw ArgumentError("feature_dim must be >= 1");
    dim = config.feature_dim;
    std::mt19937_64 proto_rng(config.embedding_seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& p : prototypes) {
      p.resize(dim);
      for (double& v : p) v = config.scale * unit(proto_rng);
    }
  }
  const std::size_t shift = K / 2;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> len_dist(config.min_len, config.max_len);
  std::uniform_int_distribution<int> token_dist(1, static_cast<int>(K));
  std::uniform_int_distribution<int> other_dist(1, static_cast<int>(K) - 1);
  std::uniform_int_distribution<std::size_t> run_dist(config.min_frames_per_token,
                                                      config.max_frames_per_token);
  std::normal_distribution<double> noise(0.0, 1.0);

  SynthCorpus corpus;
  corpus.tokens = TokenTable::numbered(K);
  for (std::size_t u = 0; u < config.num_utts; ++u) {
    std::ostringstream id;
    id << config.id_prefix << '_' << std::setw(5) << std::setfill('0') << u;
    LabelSequence labels{id.str(), {}};
    std::vector<std::vector<double>> rows;

    const std::size_t length = len_dist(rng);
    std::size_t prev_proto = 0;
    for (std::size_t i = 0; i < length; ++i) {
      int token = 0;
      if (i == 0 || config.allow_repeats) {
        token = token_dist(rng);
      } else {
        // Uniform over the K-1 tokens that differ from the previous one.
        token = other_dist(rng);
        if (token >= labels.tokens.back()) ++token;
      }
      labels.tokens.push_back(token);
      std::size_t proto = static_cast<std::size_t>(token - 1);
      if (config.style == SynthStyle::context_multimodal && i > 0 && prev_proto % 2 == 1) {
        proto = (proto + shift) % K;
      }
      prev_proto = proto;
      const std::size_t run = run_dist(rng);
      for (std::size_t r = 0; r < run; ++r) {
        std::vector<double> frame = prototypes[proto];
        for (double& v : frame) v += config.noise_sigma * noise(rng);
        rows.push_back(std::move(frame));
      }
    }

    Tensor frames = Tensor::matrix(rows.size(), dim);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      std::copy(rows[t].begin(), rows[t].end(), frames.row(t).begin());
    }
    corpus.features.push_back(
        {labels.utterance_id, "spk" + std::to_string(u % config.num_speakers), std::move(frames)});
    corpus.labels.push_back(std::move(labels));
  }
  return corpus;
}

}  // namespace hrctc
