#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dcg/error.hpp"
#include "dcg/rng.hpp"

namespace dcg {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // persistent; empty until backward touches the node
  std::vector<double> pass;  // scratch for one backward invocation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's pass-local grad and accumulates into the parents'.
  std::function<void(TensorNode&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void ensure_pass() {
    if (pass.size() != data.size()) pass.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major float64 tensor with a reverse-mode differentiation
// record. Value-semantic handle: copies share the underlying node.
//
// Broadcasting is deliberately narrow: elementwise binary ops accept equal
// shapes, a numel-1 tensor against anything, or a length-n vector against
// an m-by-n matrix (row broadcast). Anything else is a ShapeError.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  // Entries i.i.d. normal(0, stddev^2) from the given stream.
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  // Xavier-uniform in [-sqrt(6/(fan_in+fan_out)), +...] for a 2-D weight.
  static Tensor xavier(int64_t fan_in, int64_t fan_out, Rng& rng, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  int64_t dim(int64_t i) const { return shape()[static_cast<size_t>(i)]; }
  int64_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaves only (parameter updates)
  double value() const;                 // numel-1 tensors
  double at(int64_t i) const;
  double at(int64_t i, int64_t j) const;

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();

  // Reverse-mode pass from a numel-1 root. Gradients accumulate additively
  // across repeated calls; callers zero them explicitly.
  void backward() const;

  // Same values, no history, requires_grad=false.
  Tensor detach() const;

  // Internal handle; used by the op implementations.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// RAII guard: while alive, newly built ops record no history (forward
// values are unchanged). Used by evaluation paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// ---- elementwise / broadcast ops -------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
// Natural log; non-positive input is a NumericError.
Tensor log(const Tensor& a);
// ln(max(x, eps)); gradient is 1/x where x > eps and 0 where the floor binds.
Tensor log_floored(const Tensor& a, double eps);
Tensor relu(const Tensor& a);
// 1/(1+e^-x), computed as e^x/(1+e^x) for x<0 so it saturates without overflow.
Tensor sigmoid(const Tensor& a);
// ln(1+e^x), computed as x + log1p(e^-x) for x>0 and log1p(e^x) otherwise.
Tensor softplus(const Tensor& a);

// ---- linear algebra ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// out[i,:] = v[i] * a[i,:]  (row gating; gradient reaches both factors)
Tensor scale_rows(const Tensor& a, const Tensor& v);

// ---- reductions / shape ------------------------------------------------

Tensor sum(const Tensor& a);                // -> scalar (shape {})
Tensor sum(const Tensor& a, int64_t axis);  // 2-D only
Tensor mean_all(const Tensor& a);
Tensor mean(const Tensor& a, int64_t axis);  // 2-D only
// Stable exp-normalize with max subtraction:
//   y_i = exp(x_i - max(x)) / sum_j exp(x_j - max(x))
// axis 0 on 1-D, axis 0 (columns) or 1 (rows) on 2-D.
Tensor softmax(const Tensor& a, int64_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx);
Tensor gather_cols(const Tensor& a, const std::vector<int64_t>& idx);
// Max along the last axis: 1-D -> scalar, 2-D -> per-row vector.
// Gradient goes to the first (lowest-index) argmax.
Tensor max_last(const Tensor& a);
// Rows scaled to unit l2 norm; a zero row is a NumericError.
Tensor l2_normalize_rows(const Tensor& a);
// Rows with positive sum divided by their sum; all-zero rows stay zero.
// Any negative entry is a NumericError (contract violation).
Tensor row_normalize_nonneg(const Tensor& a);

// ---- misc ----------------------------------------------------------------

bool all_finite(const Tensor& a);

// Named trainable tensor. Names are "module/slot" paths and must be unique
// within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace dcg
