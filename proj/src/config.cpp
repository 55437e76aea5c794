#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "hrctc/error.h"
#include "hrctc/text_io.h"
#include "hrctc/trainer.h"

namespace hrctc {

namespace {

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParseError("invalid boolean '" + value + "'");
}

std::size_t parse_count(const std::string& value) {
  const long long v = parse_int(value, "count");
  if (v < 0) throw ParseError("expected a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename M>
Field string_field(const char* key, M TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, const std::string& v) { c.*member = v; }};
}

template <typename M>
Field count_field(const char* key, M TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member](TrainConfig& c, const std::string& v) { c.*member = static_cast<M>(parse_count(v)); }};
}

Field real_field(const char* key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return format_real(c.*member); },
          [member, key](TrainConfig& c, const std::string& v) { c.*member = parse_real(v, key); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("train_features", &TrainConfig::train_features),
      string_field("train_labels", &TrainConfig::train_labels),
      string_field("tokens", &TrainConfig::tokens),
      string_field("valid_features", &TrainConfig::valid_features),
      string_field("valid_labels", &TrainConfig::valid_labels),
      string_field("test_features", &TrainConfig::test_features),
      string_field("test_labels", &TrainConfig::test_labels),
      string_field("out_dir", &TrainConfig::out_dir),
      count_field("num_labels", &TrainConfig::num_labels),
      count_field("hidden_dim", &TrainConfig::hidden_dim),
      count_field("num_layers", &TrainConfig::num_layers),
      {"head", [](const TrainConfig& c) { return to_string(c.head); },
       [](TrainConfig& c, const std::string& v) { c.head = parse_head_kind(v); }},
      count_field("n", &TrainConfig::num_components),
      real_field("lambda", &TrainConfig::temperature),
      {"deltas", [](const TrainConfig& c) { return std::string(c.frontend.deltas ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v) { c.frontend.deltas = parse_bool(v); }},
      {"cmvn", [](const TrainConfig& c) { return std::string(c.frontend.cmvn ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v) { c.frontend.cmvn = parse_bool(v); }},
      {"splice_left", [](const TrainConfig& c) { return std::to_string(c.frontend.splice_left); },
       [](TrainConfig& c, const std::string& v) { c.frontend.splice_left = parse_count(v); }},
      {"splice_right", [](const TrainConfig& c) { return std::to_string(c.frontend.splice_right); },
       [](TrainConfig& c, const std::string& v) { c.frontend.splice_right = parse_count(v); }},
      {"keep_every", [](const TrainConfig& c) { return std::to_string(c.frontend.keep_every); },
       [](TrainConfig& c, const std::string& v) {
         c.frontend.keep_every = parse_count(v);
         if (c.frontend.keep_every == 0) throw ParseError("keep_every must be >= 1");
       }},
      real_field("lr_init", &TrainConfig::lr_init),
      real_field("lr_decay", &TrainConfig::lr_decay),
      real_field("min_lr", &TrainConfig::min_lr),
      count_field("batch_size", &TrainConfig::batch_size),
      count_field("seed", &TrainConfig::seed),
      count_field("max_epochs", &TrainConfig::max_epochs),
      count_field("patience", &TrainConfig::patience),
      real_field("clip_norm", &TrainConfig::clip_norm),
      real_field("val_fraction", &TrainConfig::val_fraction),
      real_field("prior_alpha", &TrainConfig::prior_alpha),
      count_field("threads", &TrainConfig::threads),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ParseError("unknown configuration key '" + key + "'");
}

}  // namespace

TrainConfig config_preset(const std::string& name) {
  TrainConfig config;
  if (name == "wsj") return config;
  if (name == "librispeech") {
    config.lr_init = 0.0004;
    config.lr_decay = 0.5;
    config.batch_size = 64;
    return config;
  }
  throw ParseError("unknown preset '" + name + "' (expected wsj or librispeech)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  return find_field(key).get(config);
}

void read_config(std::istream& in, TrainConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value' on config line " + std::to_string(line_no));
    }
    set_config_value(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
}

void read_config(const std::string& path, TrainConfig& config) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  read_config(in, config);
}

void write_config(std::ostream& out, const TrainConfig& config) {
  for (const auto& f : fields()) out << f.key << " = " << f.get(config) << '\n';
}

ModelConfig model_config(const TrainConfig& config, std::size_t input_dim, std::size_t num_labels) {
  ModelConfig m;
  m.input_dim = input_dim;
  m.num_labels = num_labels;
  m.hidden_dim = config.hidden_dim;
  m.num_layers = config.num_layers;
  m.head = config.head;
  m.num_components = config.num_components;
  m.temperature = config.temperature;
  return m;
}

}  // namespace hrctc
