#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slsnet/real.hpp"

namespace slsnet {

/// Extents of a dense (batch, channel, height, width) tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  std::size_t item() const { return c * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::span<real> ensure_grad();
};

}  // namespace detail

/// Global switch for graph recording. Inference paths disable it so no
/// backward closures or saved activations are kept alive.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to an immutable value node in the autodiff graph. Copies share the
/// node; only the gradient buffer (and, for leaves, the data through
/// mutable_data) is ever written after construction.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const { return shape().size(); }

  std::span<const real> data() const;
  // Leaves only: parameter updates, loaders.
  std::span<real> mutable_data();

  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool on);

  real item() const;
  real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable node that requires them.
  void backward() const;

  const char* op_name() const;

  // Used by ops to build graph nodes.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Trainable tensor plus its Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<real> m;
  std::vector<real> v;

  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::size_t size() const { return value.size(); }
};

/// Non-trainable state saved with a model (batchnorm running statistics).
struct Buffer {
  std::string name;
  std::vector<real> values;
};

/// Throws NumericError naming `what` when a value is NaN or infinite.
void check_finite(std::span<const real> values, const std::string& what);

}  // namespace slsnet
