#pragma once

#include <string>
#include <vector>

#include "caro/tensor.hpp"

namespace caro {

// A set of parameters updated at one learning rate. Every trainable
// parameter belongs to exactly one group.
struct ParamGroup {
  std::string id;
  std::vector<Var> nodes;
  double learning_rate = 1e-3;
  // Decoupled weight decay; 0 gives the plain adaptive-moment update.
  double weight_decay = 0.0;
};

// Adaptive-moment optimizer over several groups. Parameters whose gradient
// was not populated by a backward pass since the last step are skipped.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<ParamGroup> groups, double beta1 = 0.9,
                         double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update per group at the group's rate, increments the step
  // counter and clears the gradients it consumed. Throws if no parameter in
  // any group carries a valid gradient.
  void step();

  void zero_grads();

  long long step_count() const { return step_count_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

 private:
  std::vector<ParamGroup> groups_;
  // First/second moment accumulators, one pair of buffers per parameter,
  // indexed in group order.
  std::vector<std::vector<double>> moment1_;
  std::vector<std::vector<double>> moment2_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long long step_count_ = 0;
};

}  // namespace caro
