#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hrctc/tensor.h"

namespace hrctc {

// Named collection of trainable tensors. Iteration is lexicographic by name.
// Names are unique and a tensor's shape is fixed once added.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;

  // Replaces the values of an existing tensor; the shape must match.
  void assign(const std::string& name, const Tensor& value);
  std::span<double> values(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t num_scalars() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }

  // Store with the same names and shapes, all values zero.
  ParamStore zeros_like() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.tensors_ == b.tensors_;
  }

 private:
  Map tensors_;
};

using Gradients = std::map<std::string, Tensor>;

}  // namespace hrctc
