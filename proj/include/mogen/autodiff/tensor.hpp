#pragma once

// Define-by-run autodiff core: dense row-major tensors, a recording tape,
// and reverse-mode backward. Templated on the scalar type; training runs
// use float, gradient checks instantiate double.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mogen::ad {

using Shape = std::vector<int>;

inline std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;  // sized like val iff requires_grad
  bool requires_grad = false;
  // Accumulates this node's grad into its parents' grads. Parents are kept
  // alive by the closure's captured shared_ptrs. Empty for leaves.
  std::function<void()> backprop;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Shape shape, std::vector<T> vals, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    if (numel_of(shape) != static_cast<std::int64_t>(vals.size()))
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match value count " +
                                  std::to_string(vals.size()));
    n->shape = std::move(shape);
    n->val = std::move(vals);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->val.size(), T(0));
    return Var(std::move(n));
  }

  static Var scalar(T v, bool requires_grad = false) {
    return leaf({1}, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(n_->val.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  std::vector<T>& val() { return n_->val; }
  const std::vector<T>& val() const { return n_->val; }
  std::vector<T>& grad() { return n_->grad; }
  const std::vector<T>& grad() const { return n_->grad; }
  T item() const {
    if (n_->val.size() != 1)
      throw std::invalid_argument("item: tensor is not scalar");
    return n_->val[0];
  }

  void zero_grad() {
    if (n_->requires_grad) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
  }

  // Value-identical tensor through which no gradient flows.
  Var detach() const {
    auto n = std::make_shared<Node<T>>();
    n->shape = n_->shape;
    n->val = n_->val;
    n->requires_grad = false;
    return Var(std::move(n));
  }

  std::shared_ptr<Node<T>> node() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <typename T>
class Tape {
 public:
  // Create and record an op-result node. requires_grad is usually derived
  // from the parents by the op.
  Var<T> make(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    const auto count = static_cast<std::size_t>(numel_of(shape));
    n->shape = std::move(shape);
    n->val.assign(count, T(0));
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(count, T(0));
    nodes_.push_back(n);
    return Var<T>(std::move(n));
  }

  // Reverse-mode gradient propagation from a scalar loss. Recorded order is
  // a topological order, so one reverse sweep suffices; zero-grad nodes are
  // skipped so unrelated branches contribute nothing.
  void backward(const Var<T>& loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.node()->grad[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (!n.requires_grad || !n.backprop) continue;
      bool any = false;
      for (const T g : n.grad) {
        if (g != T(0)) {
          any = true;
          break;
        }
      }
      if (any) n.backprop();
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

}  // namespace mogen::ad
