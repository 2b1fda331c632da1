#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlab::ad {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of the dynamic graph. Values are immutable once the node is
// built; `grad` is filled during backward.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  ~Node();

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Handle to a graph node. Copies share the node; use `clone()` for a deep
// copy and `detach()` to cut the graph.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  // Builds a non-leaf node. `backward_fn` is only attached if some parent
  // requires a gradient.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::initializer_list<Tensor> parents,
                        std::function<void(Node<T>&)> backward_fn);
  static Tensor from_op(Shape shape, std::vector<T> values,
                        const std::vector<Tensor>& parents,
                        std::function<void(Node<T>&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  // Direct write access, for parameter initialisation and optimizer updates.
  std::span<T> values_mut() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward_fn; }

  T item() const;
  T at(std::size_t i) const { return node_->value.at(i); }

  Tensor detach() const;
  Tensor clone() const;
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive, new ops record no graph on this thread (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool grad_enabled();

 private:
  bool previous_;
};

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; call
// zero_grad on parameters first.
template <typename T>
void backward(const Tensor<T>& loss);

// Cast values between precisions. The result is a leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> v(t.values().begin(), t.values().end());
  return Tensor<To>(t.shape(), std::move(v), t.requires_grad());
}

}  // namespace dlab::ad
