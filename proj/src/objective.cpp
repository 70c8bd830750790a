#include "caro/objective.hpp"

#include <stdexcept>

namespace caro {

GaussianCode encode_view(const Var& view, const GaussianHeadParams& head,
                         const std::vector<double>& eps) {
  Var t = relu(dense(view, head.wt1, head.bt1));
  t = relu(dense(t, head.wt2, head.bt2));
  GaussianCode code;
  code.mean = dense(t, head.wmu, head.bmu);
  code.stddev = add_const(softplus(dense(t, head.wsig, head.bsig)), head.stddev_floor);
  code.sample = gaussian_sample(code.mean, code.stddev, eps);
  return code;
}

Var critic_score(const CriticParams& critic, const Var& a, const Var& b) {
  Var h = relu(dense(concat(a, b), critic.w1, critic.b1));
  h = relu(dense(h, critic.w2, critic.b2));
  return dense(h, critic.w3, critic.b3);  // shape {1}
}

JsdMiResult jsd_mi_lower_bound(const std::vector<GaussianCode>& z1,
                               const std::vector<GaussianCode>& z2, const CriticParams& critic) {
  if (z1.size() != z2.size()) {
    throw std::invalid_argument("jsd_mi_lower_bound: pair lists differ in length");
  }
  const std::size_t batch = z1.size();
  if (batch < 2) {
    throw std::invalid_argument("jsd_mi_lower_bound: batch must be >= 2 so negatives exist");
  }
  std::vector<Var> terms;
  std::vector<double> coeffs;
  terms.reserve(2 * batch);
  coeffs.reserve(2 * batch);
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    // positive: -softplus(-T(z1_i, z2_i))
    terms.push_back(softplus(scale(critic_score(critic, z1[i].sample, z2[i].sample), -1.0)));
    coeffs.push_back(-inv);
    // negative: -softplus(T(z1_i, z2_{i+1}))
    const std::size_t j = (i + 1) % batch;
    terms.push_back(softplus(critic_score(critic, z1[i].sample, z2[j].sample)));
    coeffs.push_back(-inv);
  }
  JsdMiResult result;
  result.bound = scalar_combine(terms, coeffs);
  return result;
}

IbLossResult ib_loss(const std::vector<GaussianCode>& z1, const std::vector<GaussianCode>& z2,
                     const CriticParams& critic) {
  JsdMiResult mi = jsd_mi_lower_bound(z1, z2, critic);
  const std::size_t batch = z1.size();
  std::vector<Var> kl_terms;
  kl_terms.reserve(2 * batch);
  std::vector<double> kl_coeffs;
  const double half_inv = 0.5 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    kl_terms.push_back(kl_diag_gaussians(z1[i].mean, z1[i].stddev, z2[i].mean, z2[i].stddev));
    kl_coeffs.push_back(half_inv);
    kl_terms.push_back(kl_diag_gaussians(z2[i].mean, z2[i].stddev, z1[i].mean, z1[i].stddev));
    kl_coeffs.push_back(half_inv);
  }
  IbLossResult result;
  result.bound = mi.bound;
  result.skl_mean = scalar_combine(kl_terms, kl_coeffs);
  result.loss = scalar_combine({result.bound, result.skl_mean}, {-1.0, 1.0});
  return result;
}

Var cross_entropy(const Var& logits, int label) {
  const int classes = logits->shape.empty() ? 0 : logits->shape[0];
  if (label < 1 || label > classes) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " outside [1," + std::to_string(classes) + "]");
  }
  return cross_entropy_logits(logits, label - 1);
}

CombinedLoss combined_loss(const std::vector<Var>& ce_batch,
                           const std::optional<IbLossResult>& ib, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("combined_loss: lambda must be >= 0");
  if (ce_batch.empty() && !ib) {
    throw std::invalid_argument("combined_loss: both pools empty");
  }
  std::vector<Var> terms;
  std::vector<double> coeffs;
  CombinedLoss out;
  out.breakdown.lambda = lambda;
  if (!ce_batch.empty()) {
    const double inv = 1.0 / static_cast<double>(ce_batch.size());
    double ce_val = 0.0;
    for (const auto& ce : ce_batch) {
      terms.push_back(ce);
      coeffs.push_back(inv);
      ce_val += inv * ce->scalar();
    }
    out.breakdown.ce_term = ce_val;
  }
  if (ib) {
    terms.push_back(ib->loss);
    coeffs.push_back(lambda);
    out.breakdown.ib_term = ib->loss->scalar();
    out.breakdown.mi_estimate = ib->bound->scalar();
    out.breakdown.skl_term = ib->skl_mean->scalar();
  }
  out.total = scalar_combine(terms, coeffs);
  out.breakdown.total = out.total->scalar();
  return out;
}

}  // namespace caro
