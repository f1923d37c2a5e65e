#pragma once

#include <cstdint>
#include <vector>

#include "clh3g/params.hpp"

namespace clh3g {

// Optimizer interface so the adaptive update rule can be swapped without
// touching the training loop.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // One update from the gradients currently held by the parameters.
  // lr_scale multiplies the base rate (warmup schedules).
  virtual void step(double lr_scale = 1.0) = 0;
  virtual uint64_t step_count() const = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Parameters without a populated gradient are
// treated as having zero gradient. Deterministic given inputs.
class Adam : public Optimizer {
 public:
  Adam(ParamStore& params, AdamConfig cfg);

  void step(double lr_scale = 1.0) override;
  uint64_t step_count() const override { return t_; }

  // Exposed for checkpointing: moments are ordered like the ParamStore.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_step_count(uint64_t t) { t_ = t; }

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace clh3g
