#include "slsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "slsnet/error.hpp"

namespace slsnet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

namespace detail {

std::span<real> Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), real(0));
  return grad;
}

}  // namespace detail

namespace {
thread_local bool grad_mode_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<real> values, bool requires_grad) {
  if (values.size() != shape.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape.str());
  }
  check_finite(values, "tensor construction");
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}
}  // namespace

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

void check_finite(std::span<const real> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite value " + std::to_string(values[i]) + " at index " +
                         std::to_string(i) + " in " + what);
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_leaf(shape, std::vector<real>(shape.size(), real(0)), requires_grad));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  return Tensor(make_leaf(shape, std::vector<real>(shape.size(), value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  return Tensor(make_leaf(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape empty{};
  return node_ ? node_->shape : empty;
}

std::span<const real> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<real> Tensor::mutable_data() {
  if (!node_) throw UsageError("mutable_data on an undefined tensor");
  if (!node_->parents.empty()) throw UsageError("mutable_data on a non-leaf tensor");
  return node_->data;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const real> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  if (!node_) throw UsageError("mutable_grad on an undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw UsageError("set_requires_grad on an undefined tensor");
  node_->requires_grad = on;
}

real Tensor::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + shape().str());
  return node_->data[0];
}

real Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Shape& s = shape();
  return node_->data[((n * s.c + c) * s.h + h) * s.w + w];
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape();
  node->data = node_->data;
  node->op = "detach";
  return Tensor(std::move(node));
}

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
  if (!node_) throw UsageError("backward on an undefined tensor");
  if (node_->data.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape().str());
  }
  if (!node_->requires_grad) throw UsageError("backward on a tensor that does not require grad");

  // Iterative post-order DFS; deep generators would overflow a recursive one.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
  }
}

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)), value(std::move(init)), m(value.size(), real(0)),
      v(value.size(), real(0)) {
  value.set_requires_grad(true);
}

}  // namespace slsnet
