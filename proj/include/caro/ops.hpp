#pragma once

#include <cstdint>
#include <vector>

#include "caro/tensor.hpp"

namespace caro {

// Differentiable operations over graph nodes. Vectors have shape {n},
// matrices {rows, cols} in row-major order. Every op validates shapes and
// throws std::invalid_argument with both shapes reported on mismatch.

// Affine map. weights {out,in}; input {in} -> {out}, or {rows,in} -> {rows,out}.
// bias may be null.
Var dense(const Var& input, const Var& weights, const Var& bias);

Var add(const Var& a, const Var& b);        // elementwise, same shape
Var sub(const Var& a, const Var& b);        // elementwise, same shape
Var mul(const Var& a, const Var& b);        // elementwise, same shape
Var scale(const Var& x, double c);          // c * x
Var add_const(const Var& x, double c);      // x + c

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var softplus(const Var& x);

// Max-subtracted softmax. Vectors normalize over the whole vector; matrices
// normalize each row independently.
Var softmax(const Var& x);
// Softmax over positions with mask=true; masked positions get exactly zero
// weight and zero gradient. mask.size() must equal numel(x).
Var masked_softmax(const Var& x, const std::vector<bool>& mask);

Var sum(const Var& x);   // {1}
Var mean(const Var& x);  // {1}

// Mean of rows of e {n,m} where mask is true; at least one row must be unmasked.
Var masked_mean_rows(const Var& e, const std::vector<bool>& mask);
// sum_i w[i] * e[i,:] for e {n,m}, w {n} -> {m}.
Var weighted_row_sum(const Var& e, const Var& w);
// Row-major flatten of {n,m} to {n*m}.
Var flatten(const Var& x);
// Concatenation of two vectors.
Var concat(const Var& a, const Var& b);
// Rows of table {V,m} selected by ids; rows where mask=false are zero and
// receive no gradient. Result {n,m} with n = ids.size().
Var embed_rows(const Var& table, const std::vector<int>& ids, const std::vector<bool>& mask);

// Reparameterized draw mu + stddev .* eps. eps carries no gradient;
// stddev must be strictly positive.
Var gaussian_sample(const Var& mean, const Var& stddev, const std::vector<double>& eps);

// KL( N(mu_a, diag(sig_a^2)) || N(mu_b, diag(sig_b^2)) ), scalar.
Var kl_diag_gaussians(const Var& mu_a, const Var& sig_a, const Var& mu_b, const Var& sig_b);

// -log softmax(logits)[label], label 0-based here; callers own any 1-based
// label convention.
Var cross_entropy_logits(const Var& logits, int label);

// sum_i coeffs[i] * scalars[i]; every term must be a scalar node.
Var scalar_combine(const std::vector<Var>& scalars, const std::vector<double>& coeffs);

}  // namespace caro
