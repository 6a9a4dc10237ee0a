#include "dcg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dcg {

namespace {

thread_local bool g_grad_enabled = true;

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

// Output node of an op. Parents are kept alive for the backward pass even
// when they carry no gradient themselves (their values may be needed).
NodePtr make_op(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  n->requires_grad = rg && g_grad_enabled;
  if (n->requires_grad)
    for (const Tensor* t : inputs) n->parents.push_back(t->node());
  return n;
}

void check_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix, got " + shape_str(t.shape()));
}

enum class Bc { Elementwise, ScalarA, ScalarB, RowA, RowB };

struct BcPlan {
  Bc kind;
  Shape out_shape;
  int64_t cols = 0;  // for row broadcast

  int64_t a_index(int64_t oi) const {
    switch (kind) {
      case Bc::ScalarA: return 0;
      case Bc::RowA: return oi % cols;
      default: return oi;
    }
  }
  int64_t b_index(int64_t oi) const {
    switch (kind) {
      case Bc::ScalarB: return 0;
      case Bc::RowB: return oi % cols;
      default: return oi;
    }
  }
};

BcPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() == b.shape()) return {Bc::Elementwise, a.shape(), 0};
  if (a.numel() == 1) return {Bc::ScalarA, b.shape(), 0};
  if (b.numel() == 1) return {Bc::ScalarB, a.shape(), 0};
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0))
    return {Bc::RowB, a.shape(), a.dim(1)};
  if (b.rank() == 2 && a.rank() == 1 && b.dim(1) == a.dim(0))
    return {Bc::RowA, b.shape(), b.dim(1)};
  throw ShapeError(std::string(who) + ": incompatible shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}

void acc(TensorNode* p, int64_t i, double v) {
  p->pass[static_cast<size_t>(i)] += v;
}

// Shared scaffolding for elementwise binary ops.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* who, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  BcPlan plan = broadcast_plan(a, b, who);
  int64_t n = shape_numel(plan.out_shape);
  std::vector<double> out(static_cast<size_t>(n));
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int64_t i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] = fwd(ad[static_cast<size_t>(plan.a_index(i))],
                                      bd[static_cast<size_t>(plan.b_index(i))]);
  auto node = make_op(plan.out_shape, std::move(out), {&a, &b});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    TensorNode* pb = b.node().get();
    node->backprop = [pa, pb, plan, n, bwd_a, bwd_b](TensorNode& self) {
      if (pa->requires_grad) pa->ensure_pass();
      if (pb->requires_grad) pb->ensure_pass();
      for (int64_t i = 0; i < n; ++i) {
        double g = self.pass[static_cast<size_t>(i)];
        int64_t ia = plan.a_index(i), ib = plan.b_index(i);
        double av = pa->data[static_cast<size_t>(ia)];
        double bv = pb->data[static_cast<size_t>(ib)];
        if (pa->requires_grad) acc(pa, ia, bwd_a(g, av, bv));
        if (pb->requires_grad) acc(pb, ib, bwd_b(g, av, bv));
      }
    };
  }
  return Tensor(node);
}

// Shared scaffolding for elementwise unary ops; backward receives
// (upstream grad, input value, output value).
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
  int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const auto& ad = a.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fwd(ad[static_cast<size_t>(i)]);
  auto node = make_op(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, n, bwd](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (int64_t i = 0; i < n; ++i) {
        size_t ii = static_cast<size_t>(i);
        acc(pa, i, bwd(self.pass[ii], pa->data[ii], self.data[ii]));
      }
    };
  }
  return Tensor(node);
}

struct Lane {
  int64_t offset, stride, count;
};

// Views a 1-D/2-D tensor as independent lanes along `axis`.
std::vector<Lane> lanes_of(const Tensor& a, int64_t axis, const char* who) {
  std::vector<Lane> lanes;
  if (a.rank() == 1) {
    if (axis != 0) throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
    lanes.push_back({0, 1, a.dim(0)});
  } else if (a.rank() == 2) {
    int64_t m = a.dim(0), n = a.dim(1);
    if (axis == 1) {
      for (int64_t i = 0; i < m; ++i) lanes.push_back({i * n, 1, n});
    } else if (axis == 0) {
      for (int64_t j = 0; j < n; ++j) lanes.push_back({j, n, m});
    } else {
      throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
    }
  } else {
    throw ShapeError(std::string(who) + ": expected rank 1 or 2, got " + shape_str(a.shape()));
  }
  return lanes;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= d;
  }
  return n;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{}, {value}, requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  int64_t n = shape_numel(shape);
  std::vector<double> d(static_cast<size_t>(n));
  for (auto& v : d) v = stddev * rng.normal();
  return Tensor(make_leaf(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::xavier(int64_t fan_in, int64_t fan_out, Rng& rng, bool requires_grad) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> d(static_cast<size_t>(fan_in * fan_out));
  for (auto& v : d) v = rng.uniform(-limit, limit);
  return Tensor(make_leaf(Shape{fan_in, fan_out}, std::move(d), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("undefined tensor");
  return node_->shape;
}

int64_t Tensor::numel() const { return node_ ? node_->numel() : 0; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw Error("undefined tensor");
  return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw Error("undefined tensor");
  if (!node_->parents.empty()) throw Error("mutable_data: only leaf tensors may be mutated");
  return node_->data;
}

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value(): tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(int64_t i) const {
  if (i < 0 || i >= numel()) throw ShapeError("at(): index out of range");
  return node_->data[static_cast<size_t>(i)];
}

double Tensor::at(int64_t i, int64_t j) const {
  check_rank2(*this, "at");
  if (i < 0 || i >= dim(0) || j < 0 || j >= dim(1)) throw ShapeError("at(): index out of range");
  return node_->data[static_cast<size_t>(i * dim(1) + j)];
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw Error("grad(): no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  if (!node_) throw Error("undefined tensor");
  return Tensor(make_leaf(node_->shape, node_->data, false));
}

void Tensor::backward() const {
  if (!node_) throw Error("backward: undefined tensor");
  if (numel() != 1)
    throw NumericError("backward: root must be a scalar, got shape " + shape_str(shape()));
  if (!node_->requires_grad)
    throw Error("backward: root does not require grad");

  // Postorder DFS over the requires-grad subgraph; deterministic because it
  // follows construction order only.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> pushed;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  pushed.insert(node_.get());
  stack.emplace_back(node_.get(), 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    TensorNode* n = top.first;
    if (top.second < n->parents.size()) {
      TensorNode* p = n->parents[top.second++].get();
      if (p->requires_grad && !pushed.count(p)) {
        pushed.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Propagate through pass-local buffers, then fold into the persistent
  // grads, so repeated backward calls add one fresh unit seed each time.
  for (TensorNode* n : order) n->pass.assign(n->data.size(), 0.0);
  node_->pass[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
  for (TensorNode* n : order) {
    n->ensure_grad();
    for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->pass[i];
    n->pass.clear();
    n->pass.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise ops --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return c * x; }, [c](double g, double, double) { return c * g; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double g, double x, double) { return g / x; });
}

Tensor log_floored(const Tensor& a, double eps) {
  if (!(eps > 0.0)) throw ConfigError("log_floored: eps must be positive");
  return unary_op(
      a, [eps](double x) { return std::log(x > eps ? x : eps); },
      [eps](double g, double x, double) { return x > eps ? g / x : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        if (x > 0.0) return x + std::log1p(std::exp(-x));
        return std::log1p(std::exp(x));
      },
      [](double g, double x, double) {
        // derivative is sigmoid(x)
        if (x >= 0.0) return g / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return g * e / (1.0 + e);
      });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      double av = ad[static_cast<size_t>(i * k + p)];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      double* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto node = make_op(Shape{m, n}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    TensorNode* pb = b.node().get();
    node->backprop = [pa, pb, m, k, n](TensorNode& self) {
      const double* g = self.pass.data();
      if (pa->requires_grad) {
        pa->ensure_pass();
        // ga += g . b^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb->data.data() + p * n;
            for (int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            pa->pass[static_cast<size_t>(i * k + p)] += s;
          }
      }
      if (pb->requires_grad) {
        pb->ensure_pass();
        // gb += a^T . g
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double av = pa->data[static_cast<size_t>(i * k + p)];
            if (av == 0.0) continue;
            const double* grow = g + i * n;
            double* brow = pb->pass.data() + p * n;
            for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    };
  }
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  check_rank2(a, "transpose");
  int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto& ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(j * m + i)] = ad[static_cast<size_t>(i * n + j)];
  auto node = make_op(Shape{n, m}, std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, m, n](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          pa->pass[static_cast<size_t>(i * n + j)] += self.pass[static_cast<size_t>(j * m + i)];
    };
  }
  return Tensor(node);
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
  check_rank2(a, "scale_rows");
  if (v.rank() != 1 || v.dim(0) != a.dim(0))
    throw ShapeError("scale_rows: row count mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(v.shape()));
  int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto& ad = a.data();
  const auto& vd = v.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(i * n + j)] = vd[static_cast<size_t>(i)] * ad[static_cast<size_t>(i * n + j)];
  auto node = make_op(Shape{m, n}, std::move(out), {&a, &v});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    TensorNode* pv = v.node().get();
    node->backprop = [pa, pv, m, n](TensorNode& self) {
      if (pa->requires_grad) pa->ensure_pass();
      if (pv->requires_grad) pv->ensure_pass();
      for (int64_t i = 0; i < m; ++i) {
        double gi = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          size_t ij = static_cast<size_t>(i * n + j);
          double g = self.pass[ij];
          if (pa->requires_grad) pa->pass[ij] += pv->data[static_cast<size_t>(i)] * g;
          gi += g * pa->data[ij];
        }
        if (pv->requires_grad) pv->pass[static_cast<size_t>(i)] += gi;
      }
    };
  }
  return Tensor(node);
}

// ---- reductions / shape -------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto node = make_op(Shape{}, {s}, {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      double g = self.pass[0];
      for (auto& gv : pa->pass) gv += g;
    };
  }
  return Tensor(node);
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {
Tensor reduce_axis(const Tensor& a, int64_t axis, bool take_mean, const char* who) {
  check_rank2(a, who);
  if (axis != 0 && axis != 1)
    throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) + " invalid");
  int64_t m = a.dim(0), n = a.dim(1);
  int64_t out_len = axis == 0 ? n : m;
  int64_t reduced = axis == 0 ? m : n;
  double inv = take_mean ? 1.0 / static_cast<double>(reduced) : 1.0;
  std::vector<double> out(static_cast<size_t>(out_len), 0.0);
  const auto& ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[static_cast<size_t>(axis == 0 ? j : i)] += ad[static_cast<size_t>(i * n + j)];
  for (auto& v : out) v *= inv;
  auto node = make_op(Shape{out_len}, std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, m, n, axis, inv](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          pa->pass[static_cast<size_t>(i * n + j)] +=
              inv * self.pass[static_cast<size_t>(axis == 0 ? j : i)];
    };
  }
  return Tensor(node);
}
}  // namespace

Tensor sum(const Tensor& a, int64_t axis) { return reduce_axis(a, axis, false, "sum"); }
Tensor mean(const Tensor& a, int64_t axis) { return reduce_axis(a, axis, true, "mean"); }

Tensor softmax(const Tensor& a, int64_t axis) {
  for (double v : a.data())
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  auto lanes = lanes_of(a, axis, "softmax");
  std::vector<double> out(a.data().size());
  const auto& ad = a.data();
  for (const Lane& L : lanes) {
    double mx = ad[static_cast<size_t>(L.offset)];
    for (int64_t t = 1; t < L.count; ++t)
      mx = std::max(mx, ad[static_cast<size_t>(L.offset + t * L.stride)]);
    double s = 0.0;
    for (int64_t t = 0; t < L.count; ++t) {
      size_t i = static_cast<size_t>(L.offset + t * L.stride);
      out[i] = std::exp(ad[i] - mx);
      s += out[i];
    }
    for (int64_t t = 0; t < L.count; ++t) out[static_cast<size_t>(L.offset + t * L.stride)] /= s;
  }
  auto node = make_op(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, lanes](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (const Lane& L : lanes) {
        double dot = 0.0;
        for (int64_t t = 0; t < L.count; ++t) {
          size_t i = static_cast<size_t>(L.offset + t * L.stride);
          dot += self.pass[i] * self.data[i];
        }
        for (int64_t t = 0; t < L.count; ++t) {
          size_t i = static_cast<size_t>(L.offset + t * L.stride);
          pa->pass[i] += self.data[i] * (self.pass[i] - dot);
        }
      }
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto node = make_op(std::move(shape), a.data(), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (size_t i = 0; i < self.pass.size(); ++i) pa->pass[i] += self.pass[i];
    };
  }
  return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  int64_t rank = parts[0].rank();
  for (const auto& p : parts)
    if (p.rank() != rank) throw ShapeError("concat: mixed ranks");

  Shape out_shape;
  std::vector<double> out;
  std::vector<const Tensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);

  if (rank == 1) {
    if (axis != 0) throw ShapeError("concat: axis invalid for vectors");
    int64_t total = 0;
    for (const auto& p : parts) total += p.dim(0);
    out.reserve(static_cast<size_t>(total));
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    out_shape = {total};
  } else if (rank == 2 && axis == 0) {
    int64_t n = parts[0].dim(1), total = 0;
    for (const auto& p : parts) {
      if (p.dim(1) != n) throw ShapeError("concat: column mismatch: " + shape_str(p.shape()));
      total += p.dim(0);
    }
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    out_shape = {total, n};
  } else if (rank == 2 && axis == 1) {
    int64_t m = parts[0].dim(0), total = 0;
    for (const auto& p : parts) {
      if (p.dim(0) != m) throw ShapeError("concat: row mismatch: " + shape_str(p.shape()));
      total += p.dim(1);
    }
    out.resize(static_cast<size_t>(m * total));
    int64_t col0 = 0;
    for (const auto& p : parts) {
      int64_t n = p.dim(1);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          out[static_cast<size_t>(i * total + col0 + j)] = p.data()[static_cast<size_t>(i * n + j)];
      col0 += n;
    }
    out_shape = {m, total};
  } else {
    throw ShapeError("concat: unsupported rank/axis");
  }

  std::vector<detail::TensorNode*> raw;
  std::vector<Shape> shapes;
  for (const auto& p : parts) {
    raw.push_back(p.node().get());
    shapes.push_back(p.shape());
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = out_shape;
  node->data = std::move(out);
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  node->requires_grad = rg && grad_enabled();
  if (node->requires_grad) {
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backprop = [raw, shapes, axis, rank](TensorNode& self) {
      if (rank == 1 || axis == 0) {
        size_t off = 0;
        for (size_t pi = 0; pi < raw.size(); ++pi) {
          size_t len = static_cast<size_t>(shape_numel(shapes[pi]));
          if (raw[pi]->requires_grad) {
            raw[pi]->ensure_pass();
            for (size_t i = 0; i < len; ++i) raw[pi]->pass[i] += self.pass[off + i];
          }
          off += len;
        }
      } else {
        int64_t m = self.shape[0], total = self.shape[1], col0 = 0;
        for (size_t pi = 0; pi < raw.size(); ++pi) {
          int64_t n = shapes[pi][1];
          if (raw[pi]->requires_grad) {
            raw[pi]->ensure_pass();
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < n; ++j)
                raw[pi]->pass[static_cast<size_t>(i * n + j)] +=
                    self.pass[static_cast<size_t>(i * total + col0 + j)];
          }
          col0 += n;
        }
      }
    };
  }
  return Tensor(node);
}

Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& idx) {
  if (a.rank() != 1 && a.rank() != 2) throw ShapeError("gather_rows: expected rank 1 or 2");
  int64_t rows = a.dim(0);
  int64_t width = a.rank() == 2 ? a.dim(1) : 1;
  for (int64_t i : idx)
    if (i < 0 || i >= rows) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
  std::vector<double> out(idx.size() * static_cast<size_t>(width));
  const auto& ad = a.data();
  for (size_t r = 0; r < idx.size(); ++r)
    for (int64_t j = 0; j < width; ++j)
      out[r * static_cast<size_t>(width) + static_cast<size_t>(j)] =
          ad[static_cast<size_t>(idx[r] * width + j)];
  Shape out_shape = a.rank() == 2 ? Shape{static_cast<int64_t>(idx.size()), width}
                                  : Shape{static_cast<int64_t>(idx.size())};
  auto node = make_op(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, idx, width](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (size_t r = 0; r < idx.size(); ++r)
        for (int64_t j = 0; j < width; ++j)
          pa->pass[static_cast<size_t>(idx[r] * width + j)] +=
              self.pass[r * static_cast<size_t>(width) + static_cast<size_t>(j)];
    };
  }
  return Tensor(node);
}

Tensor gather_cols(const Tensor& a, const std::vector<int64_t>& idx) {
  check_rank2(a, "gather_cols");
  int64_t m = a.dim(0), n = a.dim(1);
  for (int64_t j : idx)
    if (j < 0 || j >= n) throw ShapeError("gather_cols: index " + std::to_string(j) + " out of range");
  int64_t w = static_cast<int64_t>(idx.size());
  std::vector<double> out(static_cast<size_t>(m * w));
  const auto& ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t c = 0; c < w; ++c)
      out[static_cast<size_t>(i * w + c)] = ad[static_cast<size_t>(i * n + idx[static_cast<size_t>(c)])];
  auto node = make_op(Shape{m, w}, std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, idx, m, n, w](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t c = 0; c < w; ++c)
          pa->pass[static_cast<size_t>(i * n + idx[static_cast<size_t>(c)])] +=
              self.pass[static_cast<size_t>(i * w + c)];
    };
  }
  return Tensor(node);
}

Tensor max_last(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("max_last: empty tensor");
  std::vector<Lane> lanes = lanes_of(a, a.rank() == 1 ? 0 : 1, "max_last");
  std::vector<double> out(lanes.size());
  std::vector<int64_t> arg(lanes.size());
  const auto& ad = a.data();
  for (size_t li = 0; li < lanes.size(); ++li) {
    const Lane& L = lanes[li];
    double best = ad[static_cast<size_t>(L.offset)];
    int64_t besti = 0;
    for (int64_t t = 1; t < L.count; ++t) {
      double v = ad[static_cast<size_t>(L.offset + t * L.stride)];
      if (v > best) {
        best = v;
        besti = t;
      }
    }
    out[li] = best;
    arg[li] = L.offset + besti * L.stride;
  }
  Shape out_shape = a.rank() == 1 ? Shape{} : Shape{a.dim(0)};
  auto node = make_op(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, arg](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (size_t li = 0; li < arg.size(); ++li)
        pa->pass[static_cast<size_t>(arg[li])] += self.pass[li];
    };
  }
  return Tensor(node);
}

Tensor l2_normalize_rows(const Tensor& a) {
  std::vector<Lane> lanes = lanes_of(a, a.rank() == 1 ? 0 : 1, "l2_normalize_rows");
  std::vector<double> out(a.data().size());
  std::vector<double> norms(lanes.size());
  const auto& ad = a.data();
  for (size_t li = 0; li < lanes.size(); ++li) {
    const Lane& L = lanes[li];
    double s = 0.0;
    for (int64_t t = 0; t < L.count; ++t) {
      double v = ad[static_cast<size_t>(L.offset + t * L.stride)];
      s += v * v;
    }
    double nrm = std::sqrt(s);
    if (nrm < 1e-150) throw NumericError("l2_normalize: zero vector at row " + std::to_string(li));
    norms[li] = nrm;
    for (int64_t t = 0; t < L.count; ++t) {
      size_t i = static_cast<size_t>(L.offset + t * L.stride);
      out[i] = ad[i] / nrm;
    }
  }
  auto node = make_op(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, lanes, norms](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (size_t li = 0; li < lanes.size(); ++li) {
        const Lane& L = lanes[li];
        double dot = 0.0;
        for (int64_t t = 0; t < L.count; ++t) {
          size_t i = static_cast<size_t>(L.offset + t * L.stride);
          dot += self.pass[i] * self.data[i];
        }
        for (int64_t t = 0; t < L.count; ++t) {
          size_t i = static_cast<size_t>(L.offset + t * L.stride);
          pa->pass[i] += (self.pass[i] - self.data[i] * dot) / norms[li];
        }
      }
    };
  }
  return Tensor(node);
}

Tensor row_normalize_nonneg(const Tensor& a) {
  check_rank2(a, "row_normalize");
  int64_t m = a.dim(0), n = a.dim(1);
  const auto& ad = a.data();
  std::vector<double> out(ad.size());
  std::vector<double> degree(static_cast<size_t>(m), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double v = ad[static_cast<size_t>(i * n + j)];
      if (v < 0.0) throw NumericError("row_normalize: negative entry at (" + std::to_string(i) +
                                      "," + std::to_string(j) + ")");
      s += v;
    }
    degree[static_cast<size_t>(i)] = s;
    for (int64_t j = 0; j < n; ++j) {
      size_t ij = static_cast<size_t>(i * n + j);
      out[ij] = s > 0.0 ? ad[ij] / s : 0.0;
    }
  }
  auto node = make_op(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    TensorNode* pa = a.node().get();
    node->backprop = [pa, degree, m, n](TensorNode& self) {
      if (!pa->requires_grad) return;
      pa->ensure_pass();
      for (int64_t i = 0; i < m; ++i) {
        double d = degree[static_cast<size_t>(i)];
        if (d <= 0.0) continue;  // zero rows carry no gradient
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          size_t ij = static_cast<size_t>(i * n + j);
          dot += self.pass[ij] * self.data[ij];
        }
        for (int64_t j = 0; j < n; ++j) {
          size_t ij = static_cast<size_t>(i * n + j);
          pa->pass[ij] += (self.pass[ij] - dot) / d;
        }
      }
    };
  }
  return Tensor(node);
}

bool all_finite(const Tensor& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace dcg
