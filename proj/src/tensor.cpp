#include "jdiff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace jdiff {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<size_t>(numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.values()) x = v;
  return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("from_vector: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_vector({1}, {v}); }

double Tensor::value() const {
  if (node_->value.size() != 1) throw std::logic_error("value(): tensor is not a scalar");
  return node_->value[0];
}

void Tensor::set_requires_grad(bool b) { node_->requires_grad = b; }

std::vector<double>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::backward() {
  if (size() != 1) throw std::logic_error("backward(): loss must be scalar");
  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace detail {

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

Tensor make_op(const char* name, Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backward_fn) {
  check_finite(name, value);
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool needs = false;
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      n->requires_grad = true;
      for (Tensor& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(n));
}

}  // namespace detail

namespace detail {

void accum_grad(Tensor::Node& node, const std::vector<double>& contrib) {
  if (!node.requires_grad) return;
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  for (size_t i = 0; i < contrib.size(); ++i) node.grad[i] += contrib[i];
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

// Adds src into dst grad, allocating on demand.
void accum(Tensor::Node& parent, const std::vector<double>& contrib) {
  if (!parent.requires_grad) return;
  if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
  for (size_t i = 0; i < contrib.size(); ++i) parent.grad[i] += contrib[i];
}

}  // namespace detail

Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  return detail::make_op("add", a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
    detail::accum(*n.parents[0], n.grad);
    detail::accum(*n.parents[1], n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  return detail::make_op("sub", a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
    detail::accum(*n.parents[0], n.grad);
    auto& p = *n.parents[1];
    if (p.requires_grad) {
      if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
      for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  return detail::make_op("mul", a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      if (pa.grad.empty()) pa.grad.assign(pa.value.size(), 0.0);
      for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= s;
  return detail::make_op("scale", a.shape(), std::move(out), {a}, [s](Tensor::Node& n) {
    auto& p = *n.parents[0];
    if (p.requires_grad) {
      if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
      for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += s * n.grad[i];
    }
  });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double v = x.values()[i];
    out[i] = v / (1.0 + std::exp(-v));
  }
  return detail::make_op("silu", x.shape(), std::move(out), {x}, [](Tensor::Node& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (size_t i = 0; i < n.grad.size(); ++i) {
      double v = p.value[i];
      double s = 1.0 / (1.0 + std::exp(-v));
      p.grad[i] += n.grad[i] * (s + v * s * (1.0 - s));
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mse", a, b);
  double acc = 0.0;
  size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) {
    double d = a.values()[i] - b.values()[i];
    acc += d * d;
  }
  double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_op("mse", {1}, {acc * inv_n}, {a, b}, [inv_n](Tensor::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    double g = nd.grad[0];
    if (pa.requires_grad && pa.grad.empty()) pa.grad.assign(pa.value.size(), 0.0);
    if (pb.requires_grad && pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
    for (size_t i = 0; i < pa.value.size(); ++i) {
      double d = 2.0 * inv_n * (pa.value[i] - pb.value[i]) * g;
      if (pa.requires_grad) pa.grad[i] += d;
      if (pb.requires_grad) pb.grad[i] -= d;
    }
  });
}

namespace {
void expect_rank4(const char* op, const Tensor& t) {
  if (t.shape().size() != 4)
    throw std::invalid_argument(std::string(op) + ": expected rank-4 tensor, got " + shape_str(t.shape()));
}
}  // namespace

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  expect_rank4("concat_channels", a);
  expect_rank4("concat_channels", b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
  int n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
  std::vector<double> out(static_cast<size_t>(n) * (ca + cb) * hw);
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.values().data() + static_cast<size_t>(i) * ca * hw, static_cast<size_t>(ca) * hw,
                out.data() + static_cast<size_t>(i) * (ca + cb) * hw);
    std::copy_n(b.values().data() + static_cast<size_t>(i) * cb * hw, static_cast<size_t>(cb) * hw,
                out.data() + (static_cast<size_t>(i) * (ca + cb) + ca) * hw);
  }
  return detail::make_op("concat_channels", {n, ca + cb, sa[2], sa[3]}, std::move(out), {a, b},
                         [n, ca, cb, hw](Tensor::Node& nd) {
                           for (int side = 0; side < 2; ++side) {
                             auto& p = *nd.parents[side];
                             if (!p.requires_grad) continue;
                             if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
                             int c = side == 0 ? ca : cb;
                             int off = side == 0 ? 0 : ca;
                             for (int i = 0; i < n; ++i)
                               for (int j = 0; j < c * hw; ++j)
                                 p.grad[static_cast<size_t>(i) * c * hw + j] +=
                                     nd.grad[(static_cast<size_t>(i) * (ca + cb) + off) * hw + j];
                           }
                         });
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  expect_rank4("slice_channels", x);
  const Shape& s = x.shape();
  if (c0 < 0 || c1 > s[1] || c0 >= c1)
    throw std::invalid_argument("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") invalid for " + shape_str(s));
  int n = s[0], c = s[1], hw = s[2] * s[3], cs = c1 - c0;
  std::vector<double> out(static_cast<size_t>(n) * cs * hw);
  for (int i = 0; i < n; ++i)
    std::copy_n(x.values().data() + (static_cast<size_t>(i) * c + c0) * hw, static_cast<size_t>(cs) * hw,
                out.data() + static_cast<size_t>(i) * cs * hw);
  return detail::make_op("slice_channels", {n, cs, s[2], s[3]}, std::move(out), {x},
                         [n, c, c0, cs, hw](Tensor::Node& nd) {
                           auto& p = *nd.parents[0];
                           if (!p.requires_grad) return;
                           if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
                           for (int i = 0; i < n; ++i)
                             for (int j = 0; j < cs * hw; ++j)
                               p.grad[(static_cast<size_t>(i) * c + c0) * hw + j] +=
                                   nd.grad[static_cast<size_t>(i) * cs * hw + j];
                         });
}

}  // namespace jdiff
