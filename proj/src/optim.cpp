#include "caro/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace caro {

AdamOptimizer::AdamOptimizer(std::vector<ParamGroup> groups, double beta1, double beta2,
                             double epsilon)
    : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamOptimizer: betas must lie in (0,1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("AdamOptimizer: epsilon must be positive");
  std::unordered_set<Node*> seen;
  for (const auto& g : groups_) {
    if (!(g.learning_rate > 0.0)) {
      throw std::invalid_argument("AdamOptimizer: learning rate must be positive in group " + g.id);
    }
    if (g.weight_decay < 0.0) {
      throw std::invalid_argument("AdamOptimizer: weight decay must be >= 0 in group " + g.id);
    }
    for (const auto& p : g.nodes) {
      if (!p->requires_grad) {
        throw std::invalid_argument("AdamOptimizer: non-trainable node in group " + g.id);
      }
      if (!seen.insert(p.get()).second) {
        throw std::invalid_argument("AdamOptimizer: parameter appears in more than one group");
      }
      moment1_.emplace_back(p->numel(), 0.0);
      moment2_.emplace_back(p->numel(), 0.0);
    }
  }
}

void AdamOptimizer::step() {
  bool any_valid = false;
  for (const auto& g : groups_) {
    for (const auto& p : g.nodes) {
      if (p->grad_valid) {
        any_valid = true;
        break;
      }
    }
  }
  if (!any_valid) {
    throw std::runtime_error("AdamOptimizer::step: no parameter carries a gradient; run backward first");
  }

  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));

  std::size_t slot = 0;
  for (const auto& g : groups_) {
    for (const auto& p : g.nodes) {
      auto& m1 = moment1_[slot];
      auto& m2 = moment2_[slot];
      ++slot;
      if (!p->grad_valid) continue;  // untouched this step
      for (std::size_t i = 0; i < p->numel(); ++i) {
        const double grad = p->grad[i];
        m1[i] = beta1_ * m1[i] + (1.0 - beta1_) * grad;
        m2[i] = beta2_ * m2[i] + (1.0 - beta2_) * grad * grad;
        const double mhat = m1[i] / bc1;
        const double vhat = m2[i] / bc2;
        p->value[i] -= g.learning_rate * (mhat / (std::sqrt(vhat) + epsilon_) +
                                          g.weight_decay * p->value[i]);
      }
      std::fill(p->grad.begin(), p->grad.end(), 0.0);
      p->grad_valid = false;
    }
  }
}

void AdamOptimizer::zero_grads() {
  for (const auto& g : groups_) clear_grads(g.nodes);
}

}  // namespace caro
