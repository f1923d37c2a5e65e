#include "clh3g/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "clh3g/error.hpp"

namespace clh3g {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_of(size_t r, size_t c) {
  std::ostringstream os;
  os << "(" << r << " x " << c << ")";
  return os.str();
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------

Tensor Tensor::zeros(size_t rows, size_t cols, bool requires_grad) {
  return from_values(rows, cols, std::vector<double>(rows * cols, 0.0),
                     requires_grad);
}

Tensor Tensor::full(size_t rows, size_t cols, double fill, bool requires_grad) {
  return from_values(rows, cols, std::vector<double>(rows * cols, fill),
                     requires_grad);
}

Tensor Tensor::from_values(size_t rows, size_t cols, std::vector<double> values,
                           bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_of(rows, cols));
  }
  auto node = std::make_shared<TensorNode>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values(1, 1, {v}, requires_grad);
}

Tensor Tensor::xavier(size_t rows, size_t cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return from_values(rows, cols, std::move(v), true);
}

std::string Tensor::shape_str() const {
  return defined() ? shape_of(rows(), cols()) : "(undefined)";
}

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("item: tensor is " + shape_str() + ", expected 1 x 1");
  }
  return node_->value[0];
}

bool Tensor::has_grad() const {
  return defined() && node_->grad.size() == node_->value.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw ContractError("grad: no gradient populated for tensor " + shape_str());
  }
  return node_->grad;
}

double Tensor::grad_at(size_t r, size_t c) const {
  return grad()[r * cols() + c];
}

void Tensor::zero_grad() {
  if (defined() && !node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

Tensor Tensor::detach() const {
  return from_values(rows(), cols(), node_->value, false);
}

// ---------------------------------------------------------------------
// Graph construction + backward
// ---------------------------------------------------------------------

// Creates the result node of an op. If the tape is active and any parent
// requires grad, the node is wired into the graph and *self_out gives the
// caller a raw handle to attach the backward closure; otherwise *self_out
// is null and the op skips closure construction entirely.
Tensor make_op_result(size_t rows, size_t cols, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void()> backward_fn,
                      TensorNode** self_out) {
  auto node = std::make_shared<TensorNode>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.defined() && p.node()->requires_grad) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
    if (self_out) *self_out = node.get();
  } else if (self_out) {
    *self_out = nullptr;
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw ContractError("backward: loss must be a scalar, got " +
                        loss.shape_str());
  }
  auto root = loss.node_;
  if (!root->requires_grad) return;  // nothing reachable

  // Iterative post-order DFS for a reverse topological order.
  std::vector<TensorNode*> order;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  std::unordered_set<TensorNode*> visited;
  visited.insert(root.get());
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

// ---------------------------------------------------------------------
// Elementwise binary ops with 2-D broadcasting
// ---------------------------------------------------------------------

namespace {

void check_broadcast(const Tensor& a, const Tensor& b, const char* op,
                     size_t& out_r, size_t& out_c) {
  size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  bool ok_r = ar == br || ar == 1 || br == 1;
  bool ok_c = ac == bc || ac == 1 || bc == 1;
  if (!ok_r || !ok_c) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + a.shape_str() +
                     " with " + b.shape_str());
  }
  out_r = std::max(ar, br);
  out_c = std::max(ac, bc);
}

inline size_t bidx(size_t i, size_t j, size_t r, size_t c) {
  return (r == 1 ? 0 : i) * c + (c == 1 ? 0 : j);
}

// Generic broadcasting binary op. fwd(x, y) gives the value; bwd_a and
// bwd_b give d(out)/d(a) resp. d(out)/d(b) as functions of (x, y, out).
template <typename F, typename Ga, typename Gb>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F fwd,
                 Ga bwd_a, Gb bwd_b) {
  size_t R, C;
  check_broadcast(a, b, name, R, C);
  size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  std::vector<double> out(R * C);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < C; ++j) {
      out[i * C + j] = fwd(av[bidx(i, j, ar, ac)], bv[bidx(i, j, br, bc)]);
    }
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), {a, b}, {}, &self);
  if (self) {
    auto an = a.node();
    auto bn = b.node();
    self->backward_fn = [self, an, bn, R, C, ar, ac, br, bc, bwd_a, bwd_b]() {
      const bool need_a = an->requires_grad;
      const bool need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < C; ++j) {
          size_t o = i * C + j;
          double go = self->grad[o];
          if (go == 0.0) continue;
          double x = an->value[bidx(i, j, ar, ac)];
          double y = bn->value[bidx(i, j, br, bc)];
          double z = self->value[o];
          if (need_a) an->grad[bidx(i, j, ar, ac)] += go * bwd_a(x, y, z);
          if (need_b) bn->grad[bidx(i, j, br, bc)] += go * bwd_b(x, y, z);
        }
      }
    };
  }
  return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

// ---------------------------------------------------------------------
// Scalar conveniences
// ---------------------------------------------------------------------

namespace {

template <typename F, typename G>
Tensor unary_op(const Tensor& a, const char* /*name*/, F fwd, G bwd) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  const auto& av = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, bwd]() {
      an->ensure_grad();
      for (size_t i = 0; i < self->value.size(); ++i) {
        an->grad[i] += self->grad[i] * bwd(an->value[i], self->value[i]);
      }
    };
  }
  return res;
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "add_scalar", [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "mul_scalar", [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

// ---------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() +
                     " x " + b.shape_str());
  }
  const size_t M = a.rows(), K = a.cols(), N = b.cols();
  std::vector<double> out(M * N, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (size_t i = 0; i < M; ++i) {
    double* crow = out.data() + i * N;
    const double* arow = A + i * K;
    for (size_t p = 0; p < K; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = B + p * N;
      for (size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(M, N, std::move(out), {a, b}, {}, &self);
  if (self) {
    auto an = a.node();
    auto bn = b.node();
    self->backward_fn = [self, an, bn, M, K, N]() {
      const double* G = self->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // dA[i,p] += sum_j G[i,j] * B[p,j]
        for (size_t i = 0; i < M; ++i) {
          double* darow = an->grad.data() + i * K;
          const double* grow = G + i * N;
          for (size_t p = 0; p < K; ++p) {
            const double* brow = bn->value.data() + p * N;
            double acc = 0.0;
            for (size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB[p,j] += sum_i A[i,p] * G[i,j]
        for (size_t i = 0; i < M; ++i) {
          const double* arow = an->value.data() + i * K;
          const double* grow = G + i * N;
          for (size_t p = 0; p < K; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* dbrow = bn->grad.data() + p * N;
            for (size_t j = 0; j < N; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return res;
}

Tensor transpose(const Tensor& a) {
  const size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < C; ++j) out[j * R + i] = a.data()[i * C + j];
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(C, R, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, R, C]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < C; ++j) {
          an->grad[i * C + j] += self->grad[j * R + i];
        }
      }
    };
  }
  return res;
}

// ---------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double z) { return z; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) {
      throw NumericError("log: domain error, input " + std::to_string(x));
    }
  }
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double z) { return 0.5 / z; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double z) { return z * (1.0 - z); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double z) { return 1.0 - z * z; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(
      a, "clamp_min", [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  TensorNode* self = nullptr;
  Tensor res = make_op_result(1, 1, {s}, {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an]() {
      an->ensure_grad();
      double go = self->grad[0];
      for (double& g : an->grad) g += go;
    };
  }
  return res;
}

Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("sum_axis: axis must be 0 or 1");
  const size_t R = a.rows(), C = a.cols();
  size_t oR = axis == 0 ? 1 : R;
  size_t oC = axis == 0 ? C : 1;
  std::vector<double> out(oR * oC, 0.0);
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < C; ++j) {
      out[axis == 0 ? j : i] += a.data()[i * C + j];
    }
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(oR, oC, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, R, C, axis]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < C; ++j) {
          an->grad[i * C + j] += self->grad[axis == 0 ? j : i];
        }
      }
    };
  }
  return res;
}

Tensor mean_axis(const Tensor& a, int axis) {
  double n = static_cast<double>(axis == 0 ? a.rows() : a.cols());
  return mul_scalar(sum_axis(a, axis), 1.0 / n);
}

// ---------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  size_t C = parts[0].cols(), R = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != C) {
      throw ShapeError("concat_rows: column mismatch " + p.shape_str());
    }
    R += p.rows();
  }
  std::vector<double> out;
  out.reserve(R * C);
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), parts, {}, &self);
  if (self) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    self->backward_fn = [self, nodes, C]() {
      size_t row0 = 0;
      for (auto& n : nodes) {
        if (n->requires_grad) {
          n->ensure_grad();
          for (size_t k = 0; k < n->value.size(); ++k) {
            n->grad[k] += self->grad[row0 * C + k];
          }
        }
        row0 += n->rows;
      }
    };
  }
  return res;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  size_t R = parts[0].rows(), C = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != R) {
      throw ShapeError("concat_cols: row mismatch " + p.shape_str());
    }
    C += p.cols();
  }
  std::vector<double> out(R * C);
  size_t col0 = 0;
  for (const Tensor& p : parts) {
    for (size_t i = 0; i < R; ++i) {
      for (size_t j = 0; j < p.cols(); ++j) {
        out[i * C + col0 + j] = p.data()[i * p.cols() + j];
      }
    }
    col0 += p.cols();
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), parts, {}, &self);
  if (self) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    self->backward_fn = [self, nodes, R, C]() {
      size_t col0 = 0;
      for (auto& n : nodes) {
        if (n->requires_grad) {
          n->ensure_grad();
          for (size_t i = 0; i < R; ++i) {
            for (size_t j = 0; j < n->cols; ++j) {
              n->grad[i * n->cols + j] += self->grad[i * C + col0 + j];
            }
          }
        }
        col0 += n->cols;
      }
    };
  }
  return res;
}

Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
  if (r0 > r1 || r1 > a.rows()) {
    throw ContractError("slice_rows: [" + std::to_string(r0) + ", " +
                        std::to_string(r1) + ") out of range for " +
                        a.shape_str());
  }
  const size_t C = a.cols(), R = r1 - r0;
  std::vector<double> out(a.data().begin() + r0 * C, a.data().begin() + r1 * C);
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, r0, C]() {
      an->ensure_grad();
      for (size_t k = 0; k < self->value.size(); ++k) {
        an->grad[r0 * C + k] += self->grad[k];
      }
    };
  }
  return res;
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
  if (c0 > c1 || c1 > a.cols()) {
    throw ContractError("slice_cols: [" + std::to_string(c0) + ", " +
                        std::to_string(c1) + ") out of range for " +
                        a.shape_str());
  }
  const size_t R = a.rows(), C = a.cols(), W = c1 - c0;
  std::vector<double> out(R * W);
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < W; ++j) out[i * W + j] = a.data()[i * C + c0 + j];
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, W, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, R, C, W, c0]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < W; ++j) {
          an->grad[i * C + c0 + j] += self->grad[i * W + j];
        }
      }
    };
  }
  return res;
}

Tensor reshape(const Tensor& a, size_t rows, size_t cols) {
  if (rows * cols != a.numel()) {
    throw ShapeError("reshape: cannot view " + a.shape_str() + " as " +
                     shape_of(rows, cols));
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(rows, cols, a.data(), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an]() {
      an->ensure_grad();
      for (size_t k = 0; k < self->value.size(); ++k) {
        an->grad[k] += self->grad[k];
      }
    };
  }
  return res;
}

// ---------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const size_t C = table.cols();
  std::vector<double> out(ids.size() * C);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= table.rows()) {
      throw ContractError("gather_rows: id " + std::to_string(ids[i]) +
                          " out of range for " + table.shape_str());
    }
    const double* src = table.data().data() + static_cast<size_t>(ids[i]) * C;
    std::copy(src, src + C, out.data() + i * C);
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(ids.size(), C, std::move(out), {table}, {}, &self);
  if (self) {
    auto tn = table.node();
    self->backward_fn = [self, tn, ids, C]() {
      tn->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        for (size_t j = 0; j < C; ++j) {
          tn->grad[static_cast<size_t>(ids[i]) * C + j] += self->grad[i * C + j];
        }
      }
    };
  }
  return res;
}

Tensor gather_cols_per_row(const Tensor& a, const std::vector<int>& ids) {
  if (ids.size() != a.rows()) {
    throw ContractError("gather_cols_per_row: need one id per row");
  }
  const size_t C = a.cols();
  std::vector<double> out(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= C) {
      throw ContractError("gather_cols_per_row: id " + std::to_string(ids[i]) +
                          " out of range for " + a.shape_str());
    }
    out[i] = a.data()[i * C + static_cast<size_t>(ids[i])];
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(ids.size(), 1, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, ids, C]() {
      an->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        an->grad[i * C + static_cast<size_t>(ids[i])] += self->grad[i];
      }
    };
  }
  return res;
}

Tensor scatter_add_cols(const Tensor& a, const std::vector<int>& ids,
                        size_t width) {
  if (ids.size() != a.cols()) {
    throw ContractError("scatter_add_cols: need one target id per column");
  }
  const size_t R = a.rows(), C = a.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= width) {
      throw ContractError("scatter_add_cols: id " + std::to_string(id) +
                          " outside width " + std::to_string(width));
    }
  }
  std::vector<double> out(R * width, 0.0);
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < C; ++j) {
      out[i * width + static_cast<size_t>(ids[j])] += a.data()[i * C + j];
    }
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, width, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, ids, R, C, width]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        for (size_t j = 0; j < C; ++j) {
          an->grad[i * C + j] +=
              self->grad[i * width + static_cast<size_t>(ids[j])];
        }
      }
    };
  }
  return res;
}

// ---------------------------------------------------------------------
// Neural-net ops
// ---------------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  for (double x : a.data()) {
    if (std::isnan(x)) throw NumericError("softmax: NaN in input");
  }
  if (axis == 0) return transpose(softmax(transpose(a), 1));

  const size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  for (size_t i = 0; i < R; ++i) {
    const double* row = a.data().data() + i * C;
    double m = row[0];
    for (size_t j = 1; j < C; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (size_t j = 0; j < C; ++j) {
      double e = std::exp(row[j] - m);
      out[i * C + j] = e;
      s += e;
    }
    for (size_t j = 0; j < C; ++j) out[i * C + j] /= s;
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, C, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, R, C]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        const double* y = self->value.data() + i * C;
        const double* gy = self->grad.data() + i * C;
        double dot = 0.0;
        for (size_t j = 0; j < C; ++j) dot += gy[j] * y[j];
        for (size_t j = 0; j < C; ++j) {
          an->grad[i * C + j] += y[j] * (gy[j] - dot);
        }
      }
    };
  }
  return res;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const size_t R = x.rows(), D = x.cols();
  if (gain.rows() != 1 || gain.cols() != D || bias.rows() != 1 ||
      bias.cols() != D) {
    throw ShapeError("layer_norm: gain/bias must be (1 x " + std::to_string(D) +
                     "), got " + gain.shape_str() + " and " + bias.shape_str());
  }
  std::vector<double> out(R * D);
  std::vector<double> xhat(R * D);
  std::vector<double> inv_std(R);
  for (size_t i = 0; i < R; ++i) {
    const double* row = x.data().data() + i * D;
    double mu = 0.0;
    for (size_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (size_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(D);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (size_t j = 0; j < D; ++j) {
      double xh = (row[j] - mu) * is;
      xhat[i * D + j] = xh;
      out[i * D + j] = xh * gain.data()[j] + bias.data()[j];
    }
  }
  TensorNode* self = nullptr;
  Tensor res =
      make_op_result(R, D, std::move(out), {x, gain, bias}, {}, &self);
  if (self) {
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    self->backward_fn = [self, xn, gn, bn, R, D, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)]() {
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        const double* go = self->grad.data() + i * D;
        const double* xh = xhat.data() + i * D;
        if (gn->requires_grad || bn->requires_grad) {
          for (size_t j = 0; j < D; ++j) {
            if (gn->requires_grad) gn->grad[j] += go[j] * xh[j];
            if (bn->requires_grad) bn->grad[j] += go[j];
          }
        }
        if (xn->requires_grad) {
          // dxhat = go * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
          double m1 = 0.0, m2 = 0.0;
          for (size_t j = 0; j < D; ++j) {
            double dxh = go[j] * gn->value[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= static_cast<double>(D);
          m2 /= static_cast<double>(D);
          for (size_t j = 0; j < D; ++j) {
            double dxh = go[j] * gn->value[j];
            xn->grad[i * D + j] += (dxh - m1 - xh[j] * m2) * inv_std[i];
          }
        }
      }
    };
  }
  return res;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
  std::vector<double> out(a.numel());
  for (size_t k = 0; k < out.size(); ++k) out[k] = a.data()[k] * mask[k];
  TensorNode* self = nullptr;
  Tensor res = make_op_result(a.rows(), a.cols(), std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, mask = std::move(mask)]() {
      an->ensure_grad();
      for (size_t k = 0; k < mask.size(); ++k) {
        an->grad[k] += self->grad[k] * mask[k];
      }
    };
  }
  return res;
}

Tensor logsumexp_rows(const Tensor& a) {
  const size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R);
  for (size_t i = 0; i < R; ++i) {
    const double* row = a.data().data() + i * C;
    double m = row[0];
    for (size_t j = 1; j < C; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (size_t j = 0; j < C; ++j) s += std::exp(row[j] - m);
    out[i] = m + std::log(s);
  }
  TensorNode* self = nullptr;
  Tensor res = make_op_result(R, 1, std::move(out), {a}, {}, &self);
  if (self) {
    auto an = a.node();
    self->backward_fn = [self, an, R, C]() {
      an->ensure_grad();
      for (size_t i = 0; i < R; ++i) {
        double go = self->grad[i];
        if (go == 0.0) continue;
        double lse = self->value[i];
        for (size_t j = 0; j < C; ++j) {
          an->grad[i * C + j] += go * std::exp(an->value[i * C + j] - lse);
        }
      }
    };
  }
  return res;
}

}  // namespace clh3g
