#include "attrgan/nn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "attrgan/errors.hpp"

namespace attrgan::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

int numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double v) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value.assign(static_cast<size_t>(numel(shape)), v);
  return Tensor(std::move(node));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  require(static_cast<int>(values.size()) == numel(shape), ErrorCode::kShapeMismatch,
          "value count " + std::to_string(values.size()) + " does not match shape " +
              shape_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(const Shape& shape, std::vector<double> values) {
  Tensor t = from(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::dim(int i) const {
  const Shape& s = node_->shape;
  if (i < 0) i += static_cast<int>(s.size());
  return s.at(static_cast<size_t>(i));
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  require(size() == 1, ErrorCode::kShapeMismatch,
          "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::backward() const {
  require(size() == 1, ErrorCode::kShapeMismatch, "backward() needs a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    for (auto& in : n->inputs)
      if (in->requires_grad) in->ensure_grad();
    n->ensure_grad();
    n->backward(*n);
  }
  // Interior grads are not needed after the sweep.
  for (Node* n : order)
    if (n->backward) std::vector<double>().swap(n->grad);
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = node_->requires_grad && !node_->backward;
  return Tensor(std::move(node));
}

Tensor Tensor::reshape(const Shape& shape) const {
  require(numel(shape) == size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + shape_string(this->shape()) + " to " + shape_string(shape));
  return make_result(shape, node_->value, {*this}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool track = false;
  if (g_grad_enabled)
    for (const auto& t : inputs) track = track || t.requires_grad();
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace attrgan::nn
