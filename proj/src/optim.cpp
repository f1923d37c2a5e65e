#include "clh3g/optim.hpp"

#include <cmath>

#include "clh3g/error.hpp"

namespace clh3g {

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  if (cfg_.lr <= 0.0) {
    throw ConfigError("adam: learning rate must be positive, got " +
                      std::to_string(cfg_.lr));
  }
  m_.reserve(params_.items().size());
  v_.reserve(params_.items().size());
  for (const auto& p : params_.items()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double lr_scale) {
  t_ += 1;
  const double lr = cfg_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.items().size(); ++k) {
    Tensor& p = params_.items()[k].tensor;
    const bool has_grad = p.has_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    auto& val = p.data();
    for (size_t i = 0; i < val.size(); ++i) {
      double g = has_grad ? p.grad()[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace clh3g
