#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <type_traits>
#include <utility>
#include <vector>

#include "ccfpse/tensor.hpp"

namespace ccfpse::detail {

template <typename T>
using BackwardFn = std::function<void(TensorNode<T>&)>;

/// Wraps freshly computed values as an op output, recording `backward` on the
/// tape when grad mode is on and at least one input requires grad.
template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, const char* op,
                      std::initializer_list<Tensor<T>> inputs, std::type_identity_t<BackwardFn<T>> backward) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) track = true;
    }
  }
  if (track) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto& in : inputs) {
      // Undefined optional operands keep their slot so backward indices stay fixed.
      node->inputs.push_back(in.defined() ? in.node() : std::make_shared<TensorNode<T>>());
    }
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Grad buffer of input `i` if it wants a gradient, otherwise nullptr.
template <typename T>
T* input_grad(TensorNode<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad() : nullptr;
}

/// Batched image view: rank-3 [C,H,W] is treated as N=1.
struct ImageDims {
  std::int64_t n = 1, c = 0, h = 0, w = 0;
  bool batched = false;

  std::int64_t plane() const { return h * w; }
  std::int64_t sample() const { return c * h * w; }
  Shape shape() const { return batched ? Shape{n, c, h, w} : Shape{c, h, w}; }
  Shape with(std::int64_t channels, std::int64_t height, std::int64_t width) const {
    return batched ? Shape{n, channels, height, width} : Shape{channels, height, width};
  }
};

ImageDims image_dims(const Shape& shape, const char* op);

}  // namespace ccfpse::detail
