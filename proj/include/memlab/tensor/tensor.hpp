#pragma once

// Dense row-major float32 tensor with a dynamic reverse-mode tape.
// Tensors are cheap handles onto shared nodes; ops in ops.hpp attach
// backward closures when any input requires grad.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "memlab/common.hpp"

namespace memlab {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until touched; same length as value after
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    auto n = std::make_shared<detail::Node>();
    int64_t count = shape_numel(shape);
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(count), 0.0f);
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, float v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.n_->value.begin(), t.n_->value.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<float> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor scalar(float v) { return from({1}, {v}); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  int rank() const { return static_cast<int>(node().shape.size()); }
  int dim(int i) const { return node().shape.at(static_cast<size_t>(i)); }
  int64_t numel() const { return node().numel(); }

  float* data() { return node().value.data(); }
  const float* data() const { return node().value.data(); }
  const std::vector<float>& values() const { return node().value; }
  std::vector<float>& values() { return node().value; }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node().requires_grad = b;
    return *this;
  }

  bool has_grad() const { return defined() && !n_->grad.empty(); }
  const std::vector<float>& grad() const {
    if (!has_grad()) throw Error("tensor has no gradient");
    return n_->grad;
  }
  std::vector<float>& grad_mut() {
    node().ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (defined() && !n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0f);
  }

  // Value copy with no tape attachment.
  Tensor detached_copy() const { return Tensor::from(shape(), node().value); }

  // Reverse-mode sweep from a scalar. Seeds d(self)/d(self)=1 and walks the
  // recorded graph in reverse topological order, accumulating into .grad of
  // every ancestor that requires grad.
  void backward() const {
    detail::Node& root = node();
    if (root.numel() != 1) throw ShapeError("backward requires a scalar, got " + shape_str(root.shape));

    std::vector<detail::Node*> order;
    topo_collect(&root, order);

    root.ensure_grad();
    root.grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward) {
        n->ensure_grad();
        n->backward(*n);
      }
    }
  }

  std::shared_ptr<detail::Node> node_ptr() const { return n_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

 private:
  detail::Node& node() const {
    if (!n_) throw Error("use of undefined tensor");
    return *n_;
  }

  static void topo_collect(detail::Node* root, std::vector<detail::Node*>& order) {
    // Iterative postorder DFS over the recorded graph.
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        detail::Node* p = n->parents[idx++].get();
        if (p && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node> n_;
};

namespace detail {

// Builds the output node for an op: value computed, parents wired and the
// backward closure attached only when some input carries grad.
inline Tensor make_op_output(Shape shape, std::vector<float> value,
                             std::vector<Tensor> inputs,
                             std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (needs) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace memlab
