#pragma once

#include <string>
#include <vector>

#include "clh3g/tensor.hpp"

namespace clh3g {

// A named trainable tensor. Names are slash-free dotted paths
// ("enc.layer0.attn.wq.weight") and must be unique within a store.
struct Parameter {
  std::string name;
  Tensor tensor;
};

// Registry of all trainable tensors of a model, in creation order. The
// order is stable for a given config, which keeps optimizer state and
// checkpoints aligned without extra bookkeeping.
class ParamStore {
 public:
  Tensor create_xavier(const std::string& name, size_t rows, size_t cols,
                       Rng& rng);
  Tensor create_zeros(const std::string& name, size_t rows, size_t cols);
  Tensor create_ones(const std::string& name, size_t rows, size_t cols);

  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }

  bool contains(const std::string& name) const;
  Tensor find(const std::string& name) const;  // throws if absent
  size_t total_scalars() const;
  void zero_grad();

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<Parameter> items_;
};

}  // namespace clh3g
