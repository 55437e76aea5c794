#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hrctc/error.h"
#include "hrctc/text_io.h"
#include "hrctc/trainer.h"

namespace hrctc {

namespace {

constexpr const char* kMagic = "hrctc-checkpoint";
constexpr int kVersion = 1;

void write_tensors(std::ostream& out, const char* section, const ParamStore& store) {
  out << '[' << section << "] " << store.size() << '\n';
  for (const auto& [name, t] : store) {
    out << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) out << ' ';
      out << format_real(t.data()[i]);
    }
    out << '\n';
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) throw ParseError("checkpoint truncated after line " + std::to_string(line_no_));
    ++line_no_;
    return s;
  }

  std::vector<std::string> fields() { return split_whitespace(line()); }

  // Expects "<key> <value>" and returns value.
  std::string value(const std::string& key) {
    auto f = fields();
    if (f.size() != 2 || f[0] != key) fail("expected '" + key + " <value>'");
    return f[1];
  }

  std::size_t section(const std::string& name) {
    auto f = fields();
    if (f.size() != 2 || f[0] != "[" + name + "]") fail("expected section [" + name + "]");
    return static_cast<std::size_t>(parse_int(f[1], "section size"));
  }

  ParamStore tensors(const std::string& name) {
    const std::size_t count = section(name);
    ParamStore store;
    for (std::size_t k = 0; k < count; ++k) {
      auto header = fields();
      if (header.size() < 2) fail("malformed tensor header");
      const std::size_t rank = static_cast<std::size_t>(parse_int(header[1], "rank"));
      if (header.size() != 2 + rank) fail("tensor header rank mismatch");
      std::vector<std::size_t> shape;
      for (std::size_t d = 0; d < rank; ++d) {
        shape.push_back(static_cast<std::size_t>(parse_int(header[2 + d], "extent")));
      }
      auto values = fields();
      std::size_t expected = 1;
      for (std::size_t d : shape) expected *= d;
      if (values.size() != expected) fail("tensor '" + header[0] + "' has the wrong number of values");
      std::vector<double> data;
      data.reserve(values.size());
      for (const auto& v : values) data.push_back(parse_real(v, "tensor value"));
      store.add(header[0], Tensor(std::move(shape), std::move(data)));
    }
    return store;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "[config]\n";
  write_config(out, ckpt.config);
  out << "[model]\n";
  out << "input_dim " << ckpt.model.input_dim << '\n';
  out << "num_labels " << ckpt.model.num_labels << '\n';
  out << "hidden_dim " << ckpt.model.hidden_dim << '\n';
  out << "num_layers " << ckpt.model.num_layers << '\n';
  out << "head " << to_string(ckpt.model.head) << '\n';
  out << "n " << ckpt.model.num_components << '\n';
  out << "lambda " << format_real(ckpt.model.temperature) << '\n';
  out << "[state]\n";
  out << "epoch " << ckpt.epoch << '\n';
  out << "lr " << format_real(ckpt.lr) << '\n';
  out << "best_val_loss " << format_real(ckpt.best_val_loss) << '\n';
  out << "best_epoch " << ckpt.best_epoch << '\n';
  out << "adam_step " << ckpt.adam.step << '\n';
  out << "[history] " << ckpt.history.size() << '\n';
  for (const auto& m : ckpt.history) out << format_metrics_line(m) << '\n';
  out << "[prior] " << ckpt.prior.size() << '\n';
  for (std::size_t i = 0; i < ckpt.prior.size(); ++i) {
    if (i) out << ' ';
    out << format_real(ckpt.prior[i]);
  }
  out << '\n';
  write_tensors(out, "params", ckpt.params);
  write_tensors(out, "adam_m", ckpt.adam.m);
  write_tensors(out, "adam_v", ckpt.adam.v);
  out << "[end]\n";
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  // Write then rename so a crash never leaves a truncated checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint '" + tmp + "'");
    save_checkpoint(out, ckpt);
    if (!out) throw ParseError("error while writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ParseError("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  {
    auto magic = r.fields();
    if (magic.size() != 2 || magic[0] != kMagic) r.fail("not an hrctc checkpoint");
    if (parse_int(magic[1], "version") != kVersion) r.fail("unsupported checkpoint version " + magic[1]);
  }
  Checkpoint ckpt;
  if (trim(r.line()) != "[config]") r.fail("expected [config]");
  std::ostringstream config_text;
  for (std::string line = r.line(); trim(line) != "[model]"; line = r.line()) config_text << line << '\n';
  std::istringstream config_in(config_text.str());
  read_config(config_in, ckpt.config);

  auto count = [&](const std::string& key) {
    return static_cast<std::size_t>(parse_int(r.value(key), key));
  };
  ckpt.model.input_dim = count("input_dim");
  ckpt.model.num_labels = count("num_labels");
  ckpt.model.hidden_dim = count("hidden_dim");
  ckpt.model.num_layers = count("num_layers");
  ckpt.model.head = parse_head_kind(r.value("head"));
  ckpt.model.num_components = count("n");
  ckpt.model.temperature = parse_real(r.value("lambda"), "lambda");

  if (trim(r.line()) != "[state]") r.fail("expected [state]");
  ckpt.epoch = count("epoch");
  ckpt.lr = parse_real(r.value("lr"), "lr");
  ckpt.best_val_loss = parse_real(r.value("best_val_loss"), "best_val_loss");
  ckpt.best_epoch = count("best_epoch");
  ckpt.adam.step = count("adam_step");

  const std::size_t history = r.section("history");
  for (std::size_t i = 0; i < history; ++i) {
    auto f = r.fields();
    if (f.size() != 5) r.fail("malformed history line");
    ckpt.history.push_back({static_cast<std::size_t>(parse_int(f[0], "epoch")), parse_real(f[1]),
                            parse_real(f[2]), parse_real(f[3]), parse_real(f[4])});
  }

  const std::size_t prior_size = r.section("prior");
  auto prior = r.fields();
  if (prior.size() != prior_size) r.fail("prior length mismatch");
  for (const auto& v : prior) ckpt.prior.push_back(parse_real(v, "prior"));

  ckpt.params = r.tensors("params");
  ckpt.adam.m = r.tensors("adam_m");
  ckpt.adam.v = r.tensors("adam_v");
  if (trim(r.line()) != "[end]") r.fail("expected [end]");
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace hrctc
