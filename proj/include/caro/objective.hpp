#pragma once

#include <optional>
#include <vector>

#include "caro/ops.hpp"
#include "caro/rng.hpp"

namespace caro {

// Factorized Gaussian posterior for one view: mean, per-dimension stddev and
// one reparameterized sample, all as graph nodes.
struct GaussianCode {
  Var mean;
  Var stddev;
  Var sample;
};

// Projection head producing the code distribution: a two-layer trunk feeding
// separate mean and raw-scale maps. Raw scale goes through softplus plus a
// floor so stddev stays strictly positive.
struct GaussianHeadParams {
  Var wt1, bt1;    // trunk layer 1
  Var wt2, bt2;    // trunk layer 2
  Var wmu, bmu;    // mean map
  Var wsig, bsig;  // raw-scale map
  int proj_dim = 0;
  double stddev_floor = 1e-4;

  std::vector<Var> params() const { return {wt1, bt1, wt2, bt2, wmu, bmu, wsig, bsig}; }
};

GaussianCode encode_view(const Var& view, const GaussianHeadParams& head,
                         const std::vector<double>& eps);

// Scalar-output score network on a pair of codes.
struct CriticParams {
  Var w1, b1;
  Var w2, b2;
  Var w3, b3;  // final map to one score

  std::vector<Var> params() const { return {w1, b1, w2, b2, w3, b3}; }
};

Var critic_score(const CriticParams& critic, const Var& a, const Var& b);

// Jensen-Shannon mutual-information estimator over a batch of code pairs.
// Positives are the aligned pairs; negatives re-pair each z1 with the next
// sample's z2 (a derangement, so no accidental positives). The raw bound is
//   E_pos[-softplus(-T)] - E_neg[softplus(T)]
// which equals -log 4 for a constant-zero critic; adding log 4 calibrates
// the estimate to zero at independence. Both the critic and the encoders
// are trained by ascending this same bound.
struct JsdMiResult {
  Var bound;                    // raw bound, enters the bottleneck loss
  double mi_estimate() const { return bound->scalar() + 1.3862943611198906; }
  double critic_loss() const { return -bound->scalar(); }
};

JsdMiResult jsd_mi_lower_bound(const std::vector<GaussianCode>& z1,
                               const std::vector<GaussianCode>& z2, const CriticParams& critic);

// Multi-view bottleneck loss, batch-averaged:
//   -I(z1;z2) + 1/2 (KL(p(z|v1)||p(z|v2)) + KL(p(z|v2)||p(z|v1))).
struct IbLossResult {
  Var loss;
  Var bound;     // the raw mutual-information bound
  Var skl_mean;  // mean over the batch of 1/2 (KL12 + KL21)
};

IbLossResult ib_loss(const std::vector<GaussianCode>& z1, const std::vector<GaussianCode>& z2,
                     const CriticParams& critic);

// -log softmax(logits)[label] with the 1-based label convention (1..k+1).
Var cross_entropy(const Var& logits, int label);

// Per-step record of the combined objective.
struct LossBreakdown {
  double total = 0.0;
  double ce_term = 0.0;
  double ib_term = 0.0;
  double mi_estimate = 0.0;  // raw bound value
  double skl_term = 0.0;
  double lambda = 0.0;
};

// L = mean(ce_batch) + lambda * ib.loss. Either pool may be absent, not both.
struct CombinedLoss {
  Var total;
  LossBreakdown breakdown;
};

CombinedLoss combined_loss(const std::vector<Var>& ce_batch,
                           const std::optional<IbLossResult>& ib, double lambda);

}  // namespace caro
