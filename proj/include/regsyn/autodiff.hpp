// Copyright 2026 The regsyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace regsyn::ad {

/// Tensor shape. Feature grids are {N, C, D, H, W}; vectors are {N, F};
/// scalars are {}.
using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_string(const Shape& s);

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Handle to a node of the dynamically recorded computation graph. Copies
/// share the node. The graph stays alive as long as some Var refers to it.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<T> value);
  static Var leaf(Shape shape, std::vector<T> value, bool requires_grad);
  static Var scalar(T value) { return constant({}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const T> value() const { return node_->value; }
  std::span<T> mutable_value() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.clear(); }
  T item() const { return node_->value.at(0); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> Var<T>::constant(Shape shape, std::vector<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return Var(std::move(n));
}

template <class T>
Var<T> Var<T>::leaf(Shape shape, std::vector<T> value, bool requires_grad) {
  auto v = constant(std::move(shape), std::move(value));
  v.set_requires_grad(requires_grad);
  return v;
}

/// Builds an op result. The backward closure and input edges are dropped
/// when no input requires a gradient.
template <class T>
Var<T> make_result(Shape shape, std::vector<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var<T>& v) { return v.defined() && v.requires_grad(); });
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& v : inputs) n->inputs.push_back(v.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires a gradient (parameters keep theirs across
/// calls until zeroed).
template <class T>
void backward(const Var<T>& root) {
  if (root.size() != 1) throw std::invalid_argument("backward expects a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are not needed after the sweep.
  for (Node<T>* n : order) {
    if (n->backward_fn) std::vector<T>().swap(n->grad);
  }
}

// Optional record of which side of every non-differentiable point (ReLU hinge,
// |x| at 0, interpolation cell edge) an evaluation lands on. Finite-difference
// checks compare it across perturbations; null means off.
namespace kinks {
inline thread_local std::uint64_t* sink = nullptr;
inline void record(std::uint64_t side) { *sink = (*sink ^ side) * 0x100000001b3ULL; }
}  // namespace kinks

}  // namespace regsyn::ad
