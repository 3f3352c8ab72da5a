// Copyright 2026 The RefineBox Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REFINEBOX_AUTOGRAD_HPP_
#define REFINEBOX_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "refinebox/tensor.hpp"

namespace refinebox {

// One value in the reverse-mode graph. Leaves are created by MakeLeaf;
// interior nodes by ops through MakeResult.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // Empty until the first gradient arrives.
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Gradient buffer, zero-initialized on first use.
  Tensor<T>& Grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

// Shared handle to a graph node. Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  // Null when no gradient has been accumulated.
  const Tensor<T>* grad() const {
    return node_->grad.shape() == node_->value.shape() ? &node_->grad : nullptr;
  }
  void ZeroGrad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> MakeLeaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Constant(Tensor<T> value) {
  return MakeLeaf(std::move(value), false);
}

// True while a NoGradGuard is alive on this thread.
bool GradModeDisabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Wraps an op output. Throws NumericError naming `op` if the value is not
// finite. The backward closure is recorded only when some input needs a
// gradient and grad mode is enabled.
template <typename T>
Var<T> MakeResult(Tensor<T> value, std::string op, std::vector<Var<T>> inputs,
                  std::function<void(Node<T>&)> backward);

// Seeds d(root)/d(root) = 1 for a one-element root and accumulates
// gradients into every reachable node that requires them.
template <typename T>
void Backward(const Var<T>& root);

}  // namespace refinebox

#endif  // REFINEBOX_AUTOGRAD_HPP_
