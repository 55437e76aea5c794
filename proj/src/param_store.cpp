#include "hrctc/param_store.h"

#include "hrctc/error.h"

namespace hrctc {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw ArgumentError("duplicate parameter name '" + name + "'");
  }
}

bool ParamStore::contains(const std::string& name) const { return tensors_.count(name) != 0; }

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::assign(const std::string& name, const Tensor& value) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  if (!it->second.same_shape(value)) {
    throw ShapeError("parameter '" + name + "' has shape " + it->second.shape_string() +
                     ", cannot assign " + value.shape_string());
  }
  it->second = value;
}

std::span<double> ParamStore::values(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArgumentError("unknown parameter '" + name + "'");
  return it->second.data();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape(), 0.0));
  return out;
}

}  // namespace hrctc
