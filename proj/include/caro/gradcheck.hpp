#pragma once

#include <functional>
#include <string>
#include <vector>

#include "caro/tensor.hpp"

namespace caro {

// A model fragment for gradient verification: a list of leaf parameters and
// a builder that evaluates a scalar from their current values. The builder
// must be deterministic so that finite differences are meaningful.
struct GradCheckFragment {
  std::string name;
  std::vector<Var> params;
  std::function<Var()> build;
};

struct GradCheckEntry {
  std::string fragment;
  std::string param;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_passed = true;
  double worst_rel_error = 0.0;
};

// Central finite differences (step 1e-5) against reverse-mode gradients.
// Reports the max relative error per parameter; failures are entries with
// passed=false, never exceptions.
GradCheckReport grad_check(const GradCheckFragment& fragment, double tolerance,
                           double fd_step = 1e-5);

GradCheckReport grad_check_all(const std::vector<GradCheckFragment>& fragments, double tolerance,
                               double fd_step = 1e-5);

}  // namespace caro
