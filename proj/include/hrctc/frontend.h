#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hrctc/tensor.h"

namespace hrctc {

// Reserved label id of the CTC blank.
inline constexpr int kBlank = 0;

// One utterance's acoustic frames (T x D).
struct FeatureSequence {
  std::string utterance_id;
  std::string speaker_id;
  Tensor frames;

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

// Target token ids in [1, K]; the blank (0) never appears here.
struct LabelSequence {
  std::string utterance_id;
  std::vector<int> tokens;
};

// Symbol table; id 0 is always "<blk>".
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> symbols);

  // "<blk>" plus symbols "t1".."tK".
  static TokenTable numbered(std::size_t num_labels);

  std::size_t num_labels() const { return symbols_.empty() ? 0 : symbols_.size() - 1; }
  const std::string& symbol(int id) const;
  int id(const std::string& symbol) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
};

// Text feature format: `<utt> <spk> <T> <D>` then T rows of D reals; a blank
// line separates utterances.
std::vector<FeatureSequence> read_features(std::istream& in);
std::vector<FeatureSequence> read_features(const std::string& path);
void write_features(std::ostream& out, const std::vector<FeatureSequence>& seqs);
void write_features(const std::string& path, const std::vector<FeatureSequence>& seqs);

// `<utt> <id> <id> ...` per line.
std::vector<LabelSequence> read_labels(std::istream& in);
std::vector<LabelSequence> read_labels(const std::string& path);
void write_labels(std::ostream& out, const std::vector<LabelSequence>& labels);
void write_labels(const std::string& path, const std::vector<LabelSequence>& labels);

// `<symbol> <id>` per line.
TokenTable read_tokens(std::istream& in);
TokenTable read_tokens(const std::string& path);
void write_tokens(std::ostream& out, const TokenTable& table);
void write_tokens(const std::string& path, const TokenTable& table);

// Appends first and second order regression deltas (window +-2, edges
// replicated): D -> 3D.
FeatureSequence append_deltas(const FeatureSequence& seq);

// Mean/variance normalization with statistics pooled over all frames of each
// speaker. Variances are floored at 1e-8.
std::vector<FeatureSequence> cmvn_per_speaker(const std::vector<FeatureSequence>& seqs);

// Stacks frames t-left..t+right (edges replicated): D -> (left+1+right)D.
FeatureSequence splice(const FeatureSequence& seq, std::size_t left = 1, std::size_t right = 1);

// Keeps frames whose index is a multiple of keep_every.
FeatureSequence skip_frames(const FeatureSequence& seq, std::size_t keep_every = 3);

struct FrontendConfig {
  bool deltas = true;
  bool cmvn = true;
  std::size_t splice_left = 1;
  std::size_t splice_right = 1;
  std::size_t keep_every = 3;
};

// deltas -> CMVN -> splice -> skip, each stage optional.
std::vector<FeatureSequence> apply_frontend(const std::vector<FeatureSequence>& seqs,
                                            const FrontendConfig& config);
std::size_t frontend_output_dim(std::size_t input_dim, const FrontendConfig& config);

enum class SynthStyle {
  // Each token emits a scaled one-hot vector (D = K).
  one_hot,
  // Each token has two emission modes picked by the previous token's emitted
  // prototype, and the modes of different tokens share prototypes, so a frame
  // alone does not determine its label.
  context_multimodal,
};

struct SynthConfig {
  std::size_t num_utts = 200;
  std::size_t num_labels = 20;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  std::size_t min_frames_per_token = 2;
  std::size_t max_frames_per_token = 5;
  double noise_sigma = 0.3;
  std::uint64_t seed = 1;
  SynthStyle style = SynthStyle::one_hot;
  // Emission dimension for context_multimodal; one_hot always uses K.
  std::size_t feature_dim = 8;
  double scale = 1.0;
  // Seeds the emission prototypes independently of the utterances so that
  // train and test corpora drawn with different seeds share them.
  std::uint64_t embedding_seed = 7;
  std::size_t num_speakers = 4;
  std::string id_prefix = "utt";
  // Immediate repeats emit one unbroken run of identical frames, which no
  // model can split; they are off unless asked for.
  bool allow_repeats = false;
};

struct SynthCorpus {
  std::vector<FeatureSequence> features;
  std::vector<LabelSequence> labels;
  TokenTable tokens;
};

SynthCorpus synth_generate(const SynthConfig& config);

SynthStyle parse_synth_style(const std::string& name);
std::string to_string(SynthStyle style);

}  // namespace hrctc
