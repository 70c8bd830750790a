#include "caro/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace caro {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (const int d : shape) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

static Var make_leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad,
                     std::string name) {
  const std::size_t n = shape_numel(shape);
  if (data.size() != n) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->grad.assign(n, 0.0);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return node;
}

Var make_param(std::vector<int> shape, std::vector<double> data, std::string name) {
  return make_leaf(std::move(shape), std::move(data), true, std::move(name));
}

Var make_const(std::vector<int> shape, std::vector<double> data, std::string name) {
  return make_leaf(std::move(shape), std::move(data), false, std::move(name));
}

Var make_scalar_const(double v) { return make_const({1}, {v}); }

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (!root->is_scalar()) {
    throw std::invalid_argument("backward requires a scalar root, got shape " +
                                shape_str(root->shape));
  }
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* parent = node->parents[next_child].get();
      ++next_child;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    node->grad_valid = true;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

void clear_grads(const std::vector<Var>& nodes) {
  for (const auto& n : nodes) {
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
    n->grad_valid = false;
  }
}

}  // namespace caro
