#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ccfpse/errors.hpp"

namespace ccfpse {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Storage and autograd record behind a Tensor handle.
///
/// A node produced by a recorded operation keeps strong references to its
/// inputs and a closure that pushes its own grad into theirs. Inputs never
/// reference their consumers, so the graph is acyclic in ownership terms.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool grad_allocated = false;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward;

  /// Returns the grad buffer, allocating it as zeros on first use.
  T* ensure_grad();
  void release_grad();
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled() noexcept;

/// Disables op recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle with reverse-mode autodiff.
///
/// Copies share storage (like std::shared_ptr); use detach() for a deep copy
/// that is cut from the graph. A default-constructed Tensor is undefined and
/// is used for optional operands such as a missing bias.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  /// Extent along `axis`; negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data() const;
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value) const;
  bool is_leaf() const;

  bool has_grad() const;
  /// Gradient buffer; allocated as zeros when absent.
  std::span<const T> grad() const;
  std::span<T> mutable_grad() const;
  void zero_grad() const;

  /// Deep copy of the values as a new leaf without gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<TensorNode<T>>& node() const noexcept { return node_; }

 private:
  void check_defined() const;

  std::shared_ptr<TensorNode<T>> node_;
};

/// Operations recorded for one backward replay, in topological order.
template <typename T>
class Tape {
 public:
  explicit Tape(const Tensor<T>& root);

  std::size_t size() const noexcept { return ops_.size(); }
  const std::vector<std::shared_ptr<TensorNode<T>>>& ops() const noexcept { return ops_; }

  /// Seeds d(root)/d(root) = 1 and replays every recorded op once, in reverse.
  /// Leaf grads accumulate across calls; intermediate grads are scratch.
  void backward();

  /// Severs every recorded edge and drops all held references.
  void clear();

 private:
  std::shared_ptr<TensorNode<T>> root_;
  std::vector<std::shared_ptr<TensorNode<T>>> ops_;
};

/// Backpropagates from a scalar loss into every reachable requires_grad leaf.
template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>(loss).backward();
}

extern template struct TensorNode<float>;
extern template struct TensorNode<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ccfpse
