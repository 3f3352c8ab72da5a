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

#include "refinebox/autograd.hpp"

#include <unordered_set>

#include "refinebox/errors.hpp"

namespace refinebox {

namespace {
thread_local bool g_no_grad = false;
}  // namespace

bool GradModeDisabled() { return g_no_grad; }

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }

template <typename T>
Var<T> MakeResult(Tensor<T> value, std::string op, std::vector<Var<T>> inputs,
                  std::function<void(Node<T>&)> backward) {
  if (!value.AllFinite()) {
    throw NumericError("non-finite value produced by " + op);
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs && !g_no_grad) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    for (auto& in : inputs) node->inputs.push_back(in.node());
  }
  return Var<T>(std::move(node));
}

template <typename T>
void Backward(const Var<T>& root) {
  if (root.value().numel() != 1) {
    throw std::invalid_argument("Backward: root must hold a single element");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->Grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->grad.shape() == node->value.shape()) {
      node->backward(*node);
    }
  }
}

template Var<float> MakeResult(Tensor<float>, std::string, std::vector<Var<float>>,
                               std::function<void(Node<float>&)>);
template Var<double> MakeResult(Tensor<double>, std::string, std::vector<Var<double>>,
                                std::function<void(Node<double>&)>);
template void Backward(const Var<float>&);
template void Backward(const Var<double>&);

}  // namespace refinebox
