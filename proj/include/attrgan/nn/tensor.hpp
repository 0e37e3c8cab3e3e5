#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace attrgan::nn {

using Shape = std::vector<int>;

int numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. `backward` reads this node's grad and
// accumulates into the grads of `inputs`.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad();
};

// Dense row-major tensor with optional gradient tracking. Copies share the
// underlying node; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double v) { return from({1}, {v}); }
  // Leaf that accumulates gradients.
  static Tensor parameter(const Shape& shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int dim(int i) const;
  int rank() const { return static_cast<int>(shape().size()); }
  int size() const { return static_cast<int>(node_->value.size()); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();

  double item() const;
  double at(int i) const { return node_->value[static_cast<size_t>(i)]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  // Backpropagates from a single-element tensor.
  void backward() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(const Shape& shape) const;

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. If no input requires grad (or grad mode is off) the
// inputs and backward closure are dropped and the result is a constant.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

}  // namespace attrgan::nn
