#include "clh3g/params.hpp"

#include "clh3g/error.hpp"

namespace clh3g {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) {
    throw ContractError("ParamStore: duplicate parameter name " + name);
  }
  t.set_requires_grad(true);
  items_.push_back({name, t});
  return t;
}

Tensor ParamStore::create_xavier(const std::string& name, size_t rows,
                                 size_t cols, Rng& rng) {
  return add(name, Tensor::xavier(rows, cols, rng));
}

Tensor ParamStore::create_zeros(const std::string& name, size_t rows,
                                size_t cols) {
  return add(name, Tensor::zeros(rows, cols, true));
}

Tensor ParamStore::create_ones(const std::string& name, size_t rows,
                               size_t cols) {
  return add(name, Tensor::full(rows, cols, 1.0, true));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return true;
  }
  return false;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("ParamStore: no parameter named " + name);
}

size_t ParamStore::total_scalars() const {
  size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

}  // namespace clh3g
