#include "dlab/ad/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace dlab::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != count)
    throw ShapeError("value count " + std::to_string(count) + " does not match shape " +
                     shape_str(shape));
}

}  // namespace

// Long unrolled graphs (LSTM over 2000 steps) would otherwise recurse once
// per node on destruction.
template <typename T>
Node<T>::~Node() {
  std::vector<std::shared_ptr<Node>> pending = std::move(parents);
  while (!pending.empty()) {
    std::shared_ptr<Node> n = std::move(pending.back());
    pending.pop_back();
    if (n && n.use_count() == 1) {
      for (auto& p : n->parents) pending.push_back(std::move(p));
      n->parents.clear();
      n->backward_fn = nullptr;
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  check_shape(shape, shape_numel(shape));
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  check_shape(shape, values.size());
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return t_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values,
                             std::initializer_list<Tensor> parents,
                             std::function<void(Node<T>&)> backward_fn) {
  return from_op(std::move(shape), std::move(values), std::vector<Tensor>(parents),
                 std::move(backward_fn));
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, const std::vector<Tensor>& parents,
                             std::function<void(Node<T>&)> backward_fn) {
  Tensor out(std::move(shape), std::move(values));
  bool any = false;
  if (NoGradGuard::grad_enabled())
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (any) {
    out.node_->requires_grad = true;
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  if (i >= node_->shape.size())
    throw ShapeError("dim " + std::to_string(i) + " out of range for " + shape_str(node_->shape));
  return node_->shape[i];
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1)
    throw ShapeError("item() on non-scalar tensor " + shape_str(node_->shape));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(node_->shape, node_->value, node_->requires_grad);
  out.node_->grad = node_->grad;
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; the graph can be tens of thousands of nodes deep.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order)
    if (n->backward_fn) n->grad.assign(n->value.size(), T(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace dlab::ad
