#include "ccfpse/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace ccfpse {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
T* TensorNode<T>::ensure_grad() {
  if (!grad_allocated) {
    grad.assign(data.size(), T{0});
    grad_allocated = true;
  }
  return grad.data();
}

template <typename T>
void TensorNode<T>::release_grad() {
  grad.clear();
  grad.shrink_to_fit();
  grad_allocated = false;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<TensorNode<T>>()) {
  const auto n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->data.assign(static_cast<std::size_t>(n), fill);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
void Tensor<T>::check_defined() const {
  if (!node_) throw StateError("use of an undefined tensor");
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  check_defined();
  return node_->shape;
}

template <typename T>
int Tensor<T>::rank() const {
  return static_cast<int>(shape().size());
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  check_defined();
  return static_cast<std::int64_t>(node_->data.size());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  check_defined();
  return node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() const {
  check_defined();
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank does not match tensor rank");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  check_defined();
  return node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) const {
  check_defined();
  if (!node_->leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  check_defined();
  return node_->leaf;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  check_defined();
  return node_->grad_allocated;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  check_defined();
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
  check_defined();
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  check_defined();
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  check_defined();
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tape<T>::Tape(const Tensor<T>& root) : root_(root.node()) {
  if (!root_) throw ContractError("backward from an undefined tensor");
  // Iterative post-order DFS over recorded (non-leaf) nodes.
  using NodePtr = std::shared_ptr<TensorNode<T>>;
  std::unordered_set<const TensorNode<T>*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  auto push = [&](const NodePtr& node) {
    if (node->leaf || !node->requires_grad) return;
    if (visited.insert(node.get()).second) stack.emplace_back(node, 0);
  };
  push(root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      push(child);
    } else {
      ops_.push_back(std::move(node));
      stack.pop_back();
    }
  }
}

template <typename T>
void Tape<T>::backward() {
  if (!root_) throw ContractError("backward on a cleared tape");
  if (root_->data.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(root_->shape));
  }
  if (!root_->requires_grad) throw ContractError("loss is not connected to any tensor requiring grad");
  if (root_->leaf) {
    root_->ensure_grad()[0] += T{1};
    return;
  }
  for (auto& node : ops_) {
    node->grad.assign(node->data.size(), T{0});
    node->grad_allocated = true;
  }
  root_->grad[0] = T{1};
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    auto& node = **it;
    if (node.backward) node.backward(node);
  }
  for (auto& node : ops_) node->release_grad();
}

template <typename T>
void Tape<T>::clear() {
  for (auto& node : ops_) {
    node->inputs.clear();
    node->backward = nullptr;
  }
  ops_.clear();
  root_.reset();
}

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ccfpse
