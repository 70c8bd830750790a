#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace caro {

// One node in the reverse-mode computation graph. Nodes are created by the
// operations in ops.hpp; parameters are leaf nodes that persist across
// batches while intermediate nodes die with the graph that produced them.
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  // True once a backward pass has deposited a gradient here. The optimizer
  // skips parameters whose gradient was never populated.
  bool grad_valid = false;
  std::string name;

  std::size_t numel() const { return value.size(); }
  bool is_scalar() const { return value.size() == 1; }
  double scalar() const { return value[0]; }
};

using Var = std::shared_ptr<Node>;

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Leaf with requires_grad=true; the optimizer updates these in place.
Var make_param(std::vector<int> shape, std::vector<double> data, std::string name = "");
// Leaf that never receives gradients.
Var make_const(std::vector<int> shape, std::vector<double> data, std::string name = "");
Var make_scalar_const(double v);

// Reverse-mode sweep from a scalar root. Seeds root.grad with 1, walks the
// graph in reverse topological order and marks every visited requires_grad
// node as grad_valid. Gradients accumulate across calls until cleared.
void backward(const Var& root);

// Zeroes grad and clears grad_valid on the given nodes.
void clear_grads(const std::vector<Var>& nodes);

}  // namespace caro
