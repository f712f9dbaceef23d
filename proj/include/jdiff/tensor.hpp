#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace jdiff {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor with reverse-mode autodiff. Copies share the
// underlying node; values are not mutated after an operation produces them,
// except for in-place parameter updates by the optimizer (which never run
// while a graph referencing the parameter is alive).
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on demand, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this->grad into parents' grads.
    std::function<void(Node&)> backward_fn;
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v);
  static Tensor from_vector(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }
  double value() const;  // scalar tensors only

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b);

  std::vector<double>& grad();  // allocates zeros on first access
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Reverse pass from a scalar. Seeds d(this)/d(this) = 1.
  void backward();

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Thread-local graph recording toggle; disabled regions build no graph.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {
// Creates the output node of an op, wiring parents/backward only when grad
// recording is on and some parent requires grad. Also runs the finite check.
Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(Tensor::Node&)> backward_fn);
void check_finite(const char* op, const std::vector<double>& v);
// Adds contrib into node's grad (allocating on demand) iff it requires grad.
void accum_grad(Tensor::Node& node, const std::vector<double>& contrib);
}  // namespace detail

// Elementwise and reduction primitives.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor silu(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// Channel-dimension surgery on [N,C,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int c0, int c1);

}  // namespace jdiff
