#include "caro/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace caro {

GradCheckReport grad_check(const GradCheckFragment& fragment, double tolerance, double fd_step) {
  GradCheckReport report;
  clear_grads(fragment.params);
  Var root = fragment.build();
  backward(root);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(fragment.params.size());
  for (const auto& p : fragment.params) analytic.push_back(p->grad);
  clear_grads(fragment.params);

  for (std::size_t pi = 0; pi < fragment.params.size(); ++pi) {
    const auto& p = fragment.params[pi];
    GradCheckEntry entry;
    entry.fragment = fragment.name;
    entry.param = p->name.empty() ? ("param" + std::to_string(pi)) : p->name;
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + fd_step;
      const double up = fragment.build()->scalar();
      p->value[i] = saved - fd_step;
      const double down = fragment.build()->scalar();
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * fd_step);
      const double an = analytic[pi][i];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(an - fd) / denom);
    }
    entry.passed = entry.max_rel_error <= tolerance;
    report.worst_rel_error = std::max(report.worst_rel_error, entry.max_rel_error);
    report.all_passed = report.all_passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport grad_check_all(const std::vector<GradCheckFragment>& fragments, double tolerance,
                               double fd_step) {
  GradCheckReport report;
  for (const auto& f : fragments) {
    GradCheckReport sub = grad_check(f, tolerance, fd_step);
    report.all_passed = report.all_passed && sub.all_passed;
    report.worst_rel_error = std::max(report.worst_rel_error, sub.worst_rel_error);
    for (auto& e : sub.entries) report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace caro
