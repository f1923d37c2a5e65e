#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "clh3g/rng.hpp"

namespace clh3g {

// Dense row-major float64 matrices with dynamic tape-based reverse-mode
// differentiation. The graph is rebuilt on every forward pass; a Tensor
// is a cheap handle onto a graph node, so copies share storage and
// gradient state.
//
// Everything in the model is a matrix; scalars are 1x1. All math is
// single-threaded and runs in a fixed order, so forward passes are
// bit-deterministic.

struct TensorNode {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // empty for leaves and constants

  size_t numel() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(size_t rows, size_t cols, bool requires_grad = false);
  static Tensor full(size_t rows, size_t cols, double fill,
                     bool requires_grad = false);
  static Tensor from_values(size_t rows, size_t cols,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Xavier-uniform over [-sqrt(6/(fan_in+fan_out)), +...]
  static Tensor xavier(size_t rows, size_t cols, Rng& rng);

  bool defined() const { return node_ != nullptr; }
  size_t rows() const { return node_->rows; }
  size_t cols() const { return node_->cols; }
  size_t numel() const { return node_->numel(); }
  bool is_scalar() const { return defined() && numel() == 1; }
  std::string shape_str() const;

  double at(size_t r, size_t c) const { return node_->value[r * cols() + c]; }
  void set(size_t r, size_t c, double v) { node_->value[r * cols() + c] = v; }
  double item() const;

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  bool has_grad() const;
  const std::vector<double>& grad() const;
  double grad_at(size_t r, size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad();

  // Same values, detached from the graph, never requires grad.
  Tensor detach() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_op_result(size_t rows, size_t cols,
                               std::vector<double> value,
                               std::vector<Tensor> parents,
                               std::function<void()> backward_fn,
                               TensorNode** self_out);
  friend void backward(const Tensor& loss);
};

// Runs reverse-mode accumulation from a scalar loss. Gradients add into
// .grad of every reachable node that requires grad; calling twice
// without zero_grad accumulates.
void backward(const Tensor& loss);

// While alive, ops record no graph (inference mode).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// ---- elementwise binary ops (2-D broadcasting: full shape, row
//      vector 1xN, column vector Mx1, or scalar 1x1 on either side)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// ---- scalar-argument conveniences
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

// ---- linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise unary
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);   // domain error on x <= 0
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// ---- reductions
Tensor sum(const Tensor& a);                 // -> 1x1
Tensor mean(const Tensor& a);                // -> 1x1
Tensor sum_axis(const Tensor& a, int axis);  // axis 0 -> 1xN, axis 1 -> Mx1
Tensor mean_axis(const Tensor& a, int axis);

// ---- shape ops
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, size_t r0, size_t r1);  // [r0, r1)
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);
Tensor reshape(const Tensor& a, size_t rows, size_t cols);

// ---- indexing
// Rows of `table` selected by ids; gradient scatter-adds back.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
// out[i, 0] = a[i, ids[i]]
Tensor gather_cols_per_row(const Tensor& a, const std::vector<int>& ids);
// out[i, ids[j]] += a[i, j]; duplicate ids accumulate (copy-mass scatter).
Tensor scatter_add_cols(const Tensor& a, const std::vector<int>& ids,
                        size_t width);

// ---- neural-net ops
// Numerically stable softmax (max subtraction). NaN input raises.
Tensor softmax(const Tensor& a, int axis = 1);
// Per-row standardization then affine; gain/bias are 1xD.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// log(sum(exp(row))) -> Mx1, stable, exact gradient.
Tensor logsumexp_rows(const Tensor& a);

}  // namespace clh3g
