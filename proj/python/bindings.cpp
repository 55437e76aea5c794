#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "hrctc/ctc.h"
#include "hrctc/decode.h"
#include "hrctc/error.h"
#include "hrctc/frontend.h"
#include "hrctc/heads.h"
#include "hrctc/selftest.h"
#include "hrctc/trainer.h"

namespace py = pybind11;
using namespace hrctc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FeatureSequence as_sequence(const Array& frames, std::string speaker = "spk") {
  return {"utt", std::move(speaker), to_tensor(frames)};
}

py::tuple hypothesis(const Hypothesis& h) { return py::make_tuple(h.tokens, h.score); }

Array head_forward_py(const Array& hidden, const Array& projection, std::optional<Array> mixing,
                      const std::string& kind, double temperature) {
  const Tensor h = to_tensor(hidden);
  HeadConfig cfg;
  cfg.kind = parse_head_kind(kind);
  cfg.hidden_dim = h.cols();
  cfg.temperature = temperature;
  ParamStore params;
  params.add(kHeadProjection, to_tensor(projection));
  if (cfg.kind == HeadKind::single) {
    cfg.num_outputs = params.at(kHeadProjection).cols();
  } else {
    if (!mixing) throw ArgumentError("mom and highrank heads need the mixing matrix W");
    params.add(kHeadMixing, to_tensor(*mixing));
    cfg.num_components = params.at(kHeadMixing).cols();
    if (params.at(kHeadProjection).cols() % cfg.num_components != 0) {
      throw ShapeError("projection columns must be a multiple of the number of components");
    }
    cfg.num_outputs = params.at(kHeadProjection).cols() / cfg.num_components;
  }
  cfg.validate();
  Tape tape;
  return to_array(head_forward(tape, params, cfg, tape.constant(h)).value());
}

py::list synth_py(std::size_t num_utts, std::size_t num_labels, std::size_t min_len, std::size_t max_len,
                  std::size_t min_frames, std::size_t max_frames, double noise, std::uint64_t seed,
                  const std::string& style, std::size_t feature_dim, double scale, std::uint64_t embedding_seed,
                  bool allow_repeats) {
  SynthConfig cfg;
  cfg.num_utts = num_utts;
  cfg.num_labels = num_labels;
  cfg.min_len = min_len;
  cfg.max_len = max_len;
  cfg.min_frames_per_token = min_frames;
  cfg.max_frames_per_token = max_frames;
  cfg.noise_sigma = noise;
  cfg.seed = seed;
  cfg.style = parse_synth_style(style);
  cfg.feature_dim = feature_dim;
  cfg.scale = scale;
  cfg.embedding_seed = embedding_seed;
  cfg.allow_repeats = allow_repeats;
  const SynthCorpus corpus = synth_generate(cfg);
  py::list out;
  for (std::size_t u = 0; u < corpus.features.size(); ++u) {
    const auto& f = corpus.features[u];
    out.append(py::make_tuple(f.utterance_id, f.speaker_id, to_array(f.frames), corpus.labels[u].tokens));
  }
  return out;
}

py::list train_py(const std::map<std::string, std::string>& settings, const std::string& preset) {
  TrainConfig cfg = config_preset(preset);
  for (const auto& [key, value] : settings) set_config_value(cfg, key, value);
  TrainResult r;
  {
    py::gil_scoped_release release;
    r = train(cfg);
  }
  py::list history;
  for (const auto& m : r.history) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["train_loss"] = m.train_loss;
    d["val_loss"] = m.val_loss;
    d["val_ter"] = m.val_ter;
    d["lr"] = m.lr;
    history.append(d);
  }
  return history;
}

}  // namespace

PYBIND11_MODULE(hrctc, m) {
  m.doc() = "CTC loss, decoding, frontend and output heads from the hrctc C++ library";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());

  m.attr("BLANK") = kBlank;

  m.def("expand", [](const std::vector<int>& y) { return expand(y); }, py::arg("labels"));
  m.def("collapse", [](const std::vector<int>& p) { return collapse(p); }, py::arg("path"));
  m.def("min_frames", [](const std::vector<int>& y) { return min_frames(y); }, py::arg("labels"));
  m.def(
      "ctc_loss",
      [](const Array& logits, const std::vector<int>& labels) {
        const CtcResult r = ctc_loss(to_tensor(logits), labels);
        return py::make_tuple(r.loss, to_array(r.grad_logits));
      },
      py::arg("logits"), py::arg("labels"), "Returns (loss, d loss / d logits).");
  m.def(
      "brute_force_loss",
      [](const Array& logits, const std::vector<int>& labels) { return brute_force_loss(to_tensor(logits), labels); },
      py::arg("logits"), py::arg("labels"));
  m.def(
      "log_softmax",
      [](const Array& logits) { return to_array(log_softmax_rows(to_tensor(logits))); }, py::arg("logits"));
  m.def(
      "label_prior",
      [](const std::vector<std::vector<int>>& labels, std::size_t num_outputs) {
        std::vector<LabelSequence> seqs;
        for (const auto& l : labels) seqs.push_back({"", l});
        return label_prior(seqs, num_outputs);
      },
      py::arg("labels"), py::arg("num_outputs"));

  m.def(
      "prior_normalize",
      [](const Array& log_post, const std::vector<double>& prior, double alpha) {
        return to_array(prior_normalize(to_tensor(log_post), prior, alpha));
      },
      py::arg("log_post"), py::arg("prior"), py::arg("alpha") = 1.0);
  m.def(
      "greedy_decode", [](const Array& scores) { return hypothesis(greedy_decode(to_tensor(scores))); },
      py::arg("scores"), "Returns (tokens, score).");
  m.def(
      "prefix_beam_decode",
      [](const Array& scores, std::optional<std::size_t> beam_width) {
        py::list out;
        for (const auto& h : prefix_beam_decode(to_tensor(scores), beam_width.value_or(kUnboundedBeam))) {
          out.append(hypothesis(h));
        }
        return out;
      },
      py::arg("scores"), py::arg("beam_width") = py::none(), "None means an unbounded beam.");
  m.def(
      "token_error_rate",
      [](const std::vector<int>& hyp, const std::vector<int>& ref) {
        const EditStats s = token_error_rate(hyp, ref);
        py::dict d;
        d["substitutions"] = s.substitutions;
        d["deletions"] = s.deletions;
        d["insertions"] = s.insertions;
        d["ref_length"] = s.ref_length;
        d["rate"] = s.rate();
        return d;
      },
      py::arg("hyp"), py::arg("ref"));

  m.def(
      "append_deltas", [](const Array& frames) { return to_array(append_deltas(as_sequence(frames)).frames); },
      py::arg("frames"));
  m.def(
      "splice",
      [](const Array& frames, std::size_t left, std::size_t right) {
        return to_array(splice(as_sequence(frames), left, right).frames);
      },
      py::arg("frames"), py::arg("left") = 1, py::arg("right") = 1);
  m.def(
      "skip_frames",
      [](const Array& frames, std::size_t keep_every) {
        return to_array(skip_frames(as_sequence(frames), keep_every).frames);
      },
      py::arg("frames"), py::arg("keep_every") = 3);
  m.def(
      "cmvn_per_speaker",
      [](const std::vector<Array>& frames, const std::vector<std::string>& speakers) {
        if (frames.size() != speakers.size()) throw ArgumentError("one speaker id per utterance");
        std::vector<FeatureSequence> seqs;
        for (std::size_t i = 0; i < frames.size(); ++i) seqs.push_back(as_sequence(frames[i], speakers[i]));
        std::vector<Array> out;
        for (const auto& s : cmvn_per_speaker(seqs)) out.push_back(to_array(s.frames));
        return out;
      },
      py::arg("frames"), py::arg("speakers"));
  m.def("synth_generate", &synth_py, py::arg("num_utts") = 200, py::arg("num_labels") = 20,
        py::arg("min_len") = 3, py::arg("max_len") = 10, py::arg("min_frames") = 2, py::arg("max_frames") = 5,
        py::arg("noise") = 0.3, py::arg("seed") = 1, py::arg("style") = "one_hot", py::arg("feature_dim") = 8,
        py::arg("scale") = 1.0, py::arg("embedding_seed") = 7, py::arg("allow_repeats") = false,
        "Returns a list of (utterance_id, speaker_id, frames, tokens).");

  m.def("head_forward", &head_forward_py, py::arg("hidden"), py::arg("projection"), py::arg("mixing") = py::none(),
        py::arg("kind") = "single", py::arg("temperature") = kDefaultTemperature,
        "Logits of an output head. projection is H x N for single, H x nN otherwise; mixing is H x n.");

  m.def(
      "model_gradient_check",
      [](const std::string& head, std::uint64_t seed, bool tiny) {
        const GradCheckReport r = model_gradient_check({parse_head_kind(head), seed, tiny, 1e-5});
        return py::make_tuple(r.max_rel_error, r.num_checked);
      },
      py::arg("head") = "highrank", py::arg("seed") = 1, py::arg("tiny") = true,
      "Returns (max relative error, number of parameters checked).");
  m.def(
      "ctc_oracle_suite",
      [](std::size_t cases, std::uint64_t seed) {
        const OracleReport r = ctc_oracle_suite(cases, seed);
        return py::make_tuple(r.max_rel_error, r.cases);
      },
      py::arg("cases") = 200, py::arg("seed") = 1);

  m.def("train", &train_py, py::arg("config"), py::arg("preset") = "wsj",
        "Trains with config keys given as strings and returns the per-epoch metrics.");
  m.def("config_keys", &config_keys);
}
