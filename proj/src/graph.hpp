#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "slsnet/error.hpp"
#include "slsnet/tensor.hpp"

namespace slsnet::detail {

/// Wraps freshly computed values as a graph node. The backward rule is only
/// attached when recording is on and some input requires grad.
inline Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void(Node&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
  if (any && GradMode::enabled()) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

/// Gradient sink for parent `i`, or an empty span when it does not need one.
inline std::span<real> grad_of(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  if (!p || !p->requires_grad) return {};
  return p->ensure_grad();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace slsnet::detail
