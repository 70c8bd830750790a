#include "caro/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caro {

namespace {

void require_finite(const Var& x, const char* op) {
  for (const double v : x->value) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(op) + ": non-finite input");
    }
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->shape != b->shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
  }
}

Var make_result(std::vector<int> shape, std::vector<Var> parents) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(shape_numel(node->shape), 0.0);
  node->grad.assign(node->value.size(), 0.0);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  return node;
}

// Branch-stable sigmoid.
double sigmoid_stable(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Branch-stable log(1 + e^x).
double softplus_stable(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Var dense(const Var& input, const Var& weights, const Var& bias) {
  if (weights->shape.size() != 2) {
    throw std::invalid_argument("dense: weights must be a matrix, got " +
                                shape_str(weights->shape));
  }
  const int out_dim = weights->shape[0];
  const int in_dim = weights->shape[1];
  const bool batched = input->shape.size() == 2;
  const int in_last = batched ? input->shape[1] : input->shape[0];
  if (input->shape.size() > 2 || in_last != in_dim) {
    throw std::invalid_argument("dense: shape mismatch, input " + shape_str(input->shape) +
                                " vs weights " + shape_str(weights->shape));
  }
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != out_dim)) {
    throw std::invalid_argument("dense: shape mismatch, bias " + shape_str(bias->shape) +
                                " vs weights " + shape_str(weights->shape));
  }
  const int rows = batched ? input->shape[0] : 1;
  std::vector<Var> parents = {input, weights};
  if (bias) parents.push_back(bias);
  Var out = make_result(batched ? std::vector<int>{rows, out_dim} : std::vector<int>{out_dim},
                        std::move(parents));

  const double* x = input->value.data();
  const double* w = weights->value.data();
  double* y = out->value.data();
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * in_dim;
    double* yr = y + static_cast<std::size_t>(r) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* wo = w + static_cast<std::size_t>(o) * in_dim;
      double acc = bias ? bias->value[o] : 0.0;
      for (int i = 0; i < in_dim; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }

  const bool has_bias = static_cast<bool>(bias);
  out->backward_fn = [rows, out_dim, in_dim, has_bias](Node& self) {
    const auto& input_p = self.parents[0];
    const auto& weights_p = self.parents[1];
    const double* g = self.grad.data();
    const double* x = input_p->value.data();
    const double* w = weights_p->value.data();
    if (input_p->requires_grad) {
      double* gx = input_p->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* gr = g + static_cast<std::size_t>(r) * out_dim;
        double* gxr = gx + static_cast<std::size_t>(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) {
          const double go = gr[o];
          if (go == 0.0) continue;
          const double* wo = w + static_cast<std::size_t>(o) * in_dim;
          for (int i = 0; i < in_dim; ++i) gxr[i] += go * wo[i];
        }
      }
    }
    if (weights_p->requires_grad) {
      double* gw = weights_p->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* gr = g + static_cast<std::size_t>(r) * out_dim;
        const double* xr = x + static_cast<std::size_t>(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) {
          const double go = gr[o];
          if (go == 0.0) continue;
          double* gwo = gw + static_cast<std::size_t>(o) * in_dim;
          for (int i = 0; i < in_dim; ++i) gwo[i] += go * xr[i];
        }
      }
    }
    if (has_bias && self.parents[2]->requires_grad) {
      double* gb = self.parents[2]->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* gr = g + static_cast<std::size_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) gb[o] += gr[o];
      }
    }
  };
  return out;
}

static Var elementwise_binary(const Var& a, const Var& b, const char* op, double (*fwd)(double, double),
                              void (*bwd)(double, double, double, double&, double&)) {
  require_same_shape(a, b, op);
  Var out = make_result(a->shape, {a, b});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = fwd(a->value[i], b->value[i]);
  out->backward_fn = [bwd](Node& self) {
    const auto& a_p = self.parents[0];
    const auto& b_p = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double da = 0.0, db = 0.0;
      bwd(a_p->value[i], b_p->value[i], self.grad[i], da, db);
      if (a_p->requires_grad) a_p->grad[i] += da;
      if (b_p->requires_grad) b_p->grad[i] += db;
    }
  };
  return out;
}

Var add(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Var mul(const Var& a, const Var& b) {
  return elementwise_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

static Var elementwise_unary(const Var& x, const char* op, bool check_finite,
                             double (*fwd)(double), double (*dfdx)(double, double)) {
  if (check_finite) require_finite(x, op);
  Var out = make_result(x->shape, {x});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = fwd(x->value[i]);
  out->backward_fn = [dfdx](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      x_p->grad[i] += self.grad[i] * dfdx(x_p->value[i], self.value[i]);
    }
  };
  return out;
}

Var scale(const Var& x, double c) {
  Var out = make_result(x->shape, {x});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = c * x->value[i];
  out->backward_fn = [c](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) x_p->grad[i] += c * self.grad[i];
  };
  return out;
}

Var add_const(const Var& x, double c) {
  Var out = make_result(x->shape, {x});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = x->value[i] + c;
  out->backward_fn = [](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) x_p->grad[i] += self.grad[i];
  };
  return out;
}

Var relu(const Var& x) {
  return elementwise_unary(
      x, "relu", true, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  require_finite(x, "leaky_relu");
  Var out = make_result(x->shape, {x});
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    const double v = x->value[i];
    out->value[i] = v > 0.0 ? v : slope * v;
  }
  out->backward_fn = [slope](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      x_p->grad[i] += self.grad[i] * (x_p->value[i] > 0.0 ? 1.0 : slope);
    }
  };
  return out;
}

Var sigmoid(const Var& x) {
  return elementwise_unary(
      x, "sigmoid", true, [](double v) { return sigmoid_stable(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
  return elementwise_unary(
      x, "softplus", true, [](double v) { return softplus_stable(v); },
      [](double v, double) { return sigmoid_stable(v); });
}

static void softmax_row(const double* x, double* y, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    denom += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= denom;
}

Var softmax(const Var& x) {
  require_finite(x, "softmax");
  const bool batched = x->shape.size() == 2;
  const int rows = batched ? x->shape[0] : 1;
  const int n = batched ? x->shape[1] : x->shape[0];
  Var out = make_result(x->shape, {x});
  for (int r = 0; r < rows; ++r) {
    softmax_row(x->value.data() + static_cast<std::size_t>(r) * n,
                out->value.data() + static_cast<std::size_t>(r) * n, n);
  }
  out->backward_fn = [rows, n](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      const double* y = self.value.data() + static_cast<std::size_t>(r) * n;
      const double* g = self.grad.data() + static_cast<std::size_t>(r) * n;
      double* gx = x_p->grad.data() + static_cast<std::size_t>(r) * n;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += g[i] * y[i];
      for (int i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - dot);
    }
  };
  return out;
}

Var masked_softmax(const Var& x, const std::vector<bool>& mask) {
  require_finite(x, "masked_softmax");
  if (mask.size() != x->numel()) {
    throw std::invalid_argument("masked_softmax: mask length " + std::to_string(mask.size()) +
                                " vs input " + shape_str(x->shape));
  }
  if (std::find(mask.begin(), mask.end(), true) == mask.end()) {
    throw std::invalid_argument("masked_softmax: all positions masked");
  }
  const int n = static_cast<int>(x->numel());
  Var out = make_result(x->shape, {x});
  double mx = -HUGE_VAL;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) mx = std::max(mx, x->value[i]);
  }
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      out->value[i] = std::exp(x->value[i] - mx);
      denom += out->value[i];
    }
  }
  for (int i = 0; i < n; ++i) out->value[i] = mask[i] ? out->value[i] / denom : 0.0;
  out->backward_fn = [mask, n](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask[i]) dot += self.grad[i] * self.value[i];
    }
    for (int i = 0; i < n; ++i) {
      if (mask[i]) x_p->grad[i] += self.value[i] * (self.grad[i] - dot);
    }
  };
  return out;
}

Var sum(const Var& x) {
  Var out = make_result({1}, {x});
  double acc = 0.0;
  for (const double v : x->value) acc += v;
  out->value[0] = acc;
  out->backward_fn = [](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (double& g : x_p->grad) g += self.grad[0];
  };
  return out;
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x->numel())); }

Var masked_mean_rows(const Var& e, const std::vector<bool>& mask) {
  if (e->shape.size() != 2) {
    throw std::invalid_argument("masked_mean_rows: expected matrix, got " + shape_str(e->shape));
  }
  const int n = e->shape[0];
  const int m = e->shape[1];
  if (static_cast<int>(mask.size()) != n) {
    throw std::invalid_argument("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                                " vs rows " + std::to_string(n));
  }
  int count = 0;
  for (const bool b : mask) count += b ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_mean_rows: all rows masked");
  Var out = make_result({m}, {e});
  const double inv = 1.0 / count;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double* row = e->value.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out->value[j] += row[j] * inv;
  }
  out->backward_fn = [mask, n, m, inv](Node& self) {
    const auto& e_p = self.parents[0];
    if (!e_p->requires_grad) return;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      double* grow = e_p->grad.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) grow[j] += self.grad[j] * inv;
    }
  };
  return out;
}

Var weighted_row_sum(const Var& e, const Var& w) {
  if (e->shape.size() != 2 || w->shape.size() != 1 || e->shape[0] != w->shape[0]) {
    throw std::invalid_argument("weighted_row_sum: shape mismatch, rows " + shape_str(e->shape) +
                                " vs weights " + shape_str(w->shape));
  }
  const int n = e->shape[0];
  const int m = e->shape[1];
  Var out = make_result({m}, {e, w});
  for (int i = 0; i < n; ++i) {
    const double wi = w->value[i];
    if (wi == 0.0) continue;
    const double* row = e->value.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out->value[j] += wi * row[j];
  }
  out->backward_fn = [n, m](Node& self) {
    const auto& e_p = self.parents[0];
    const auto& w_p = self.parents[1];
    if (e_p->requires_grad) {
      for (int i = 0; i < n; ++i) {
        const double wi = w_p->value[i];
        if (wi == 0.0) continue;
        double* grow = e_p->grad.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) grow[j] += wi * self.grad[j];
      }
    }
    if (w_p->requires_grad) {
      for (int i = 0; i < n; ++i) {
        const double* row = e_p->value.data() + static_cast<std::size_t>(i) * m;
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += row[j] * self.grad[j];
        w_p->grad[i] += acc;
      }
    }
  };
  return out;
}

Var flatten(const Var& x) {
  Var out = make_result({static_cast<int>(x->numel())}, {x});
  out->value = x->value;
  out->backward_fn = [](Node& self) {
    const auto& x_p = self.parents[0];
    if (!x_p->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) x_p->grad[i] += self.grad[i];
  };
  return out;
}

Var concat(const Var& a, const Var& b) {
  if (a->shape.size() != 1 || b->shape.size() != 1) {
    throw std::invalid_argument("concat: expected vectors, got " + shape_str(a->shape) + " and " +
                                shape_str(b->shape));
  }
  const int na = a->shape[0];
  const int nb = b->shape[0];
  Var out = make_result({na + nb}, {a, b});
  std::copy(a->value.begin(), a->value.end(), out->value.begin());
  std::copy(b->value.begin(), b->value.end(), out->value.begin() + na);
  out->backward_fn = [na, nb](Node& self) {
    const auto& a_p = self.parents[0];
    const auto& b_p = self.parents[1];
    if (a_p->requires_grad) {
      for (int i = 0; i < na; ++i) a_p->grad[i] += self.grad[i];
    }
    if (b_p->requires_grad) {
      for (int i = 0; i < nb; ++i) b_p->grad[i] += self.grad[na + i];
    }
  };
  return out;
}

Var embed_rows(const Var& table, const std::vector<int>& ids, const std::vector<bool>& mask) {
  if (table->shape.size() != 2) {
    throw std::invalid_argument("embed_rows: table must be a matrix, got " +
                                shape_str(table->shape));
  }
  if (ids.size() != mask.size()) {
    throw std::invalid_argument("embed_rows: ids/mask length mismatch");
  }
  const int vocab = table->shape[0];
  const int m = table->shape[1];
  const int n = static_cast<int>(ids.size());
  for (int i = 0; i < n; ++i) {
    if (mask[i] && (ids[i] < 0 || ids[i] >= vocab)) {
      throw std::invalid_argument("embed_rows: id " + std::to_string(ids[i]) +
                                  " out of range [0," + std::to_string(vocab) + ")");
    }
  }
  Var out = make_result({n, m}, {table});
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;  // padding rows stay zero
    const double* row = table->value.data() + static_cast<std::size_t>(ids[i]) * m;
    std::copy(row, row + m, out->value.begin() + static_cast<std::size_t>(i) * m);
  }
  out->backward_fn = [ids, mask, n, m](Node& self) {
    const auto& table_p = self.parents[0];
    if (!table_p->requires_grad) return;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      double* grow = table_p->grad.data() + static_cast<std::size_t>(ids[i]) * m;
      const double* g = self.grad.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) grow[j] += g[j];
    }
  };
  return out;
}

Var gaussian_sample(const Var& mean_v, const Var& stddev, const std::vector<double>& eps) {
  require_same_shape(mean_v, stddev, "gaussian_sample");
  if (eps.size() != mean_v->numel()) {
    throw std::invalid_argument("gaussian_sample: eps length mismatch");
  }
  for (const double s : stddev->value) {
    if (!(s > 0.0)) throw std::invalid_argument("gaussian_sample: stddev must be strictly positive");
  }
  Var out = make_result(mean_v->shape, {mean_v, stddev});
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = mean_v->value[i] + stddev->value[i] * eps[i];
  }
  out->backward_fn = [eps](Node& self) {
    const auto& mu_p = self.parents[0];
    const auto& sig_p = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (mu_p->requires_grad) mu_p->grad[i] += self.grad[i];
      if (sig_p->requires_grad) sig_p->grad[i] += self.grad[i] * eps[i];
    }
  };
  return out;
}

Var kl_diag_gaussians(const Var& mu_a, const Var& sig_a, const Var& mu_b, const Var& sig_b) {
  require_same_shape(mu_a, sig_a, "kl_diag_gaussians");
  require_same_shape(mu_a, mu_b, "kl_diag_gaussians");
  require_same_shape(mu_a, sig_b, "kl_diag_gaussians");
  for (std::size_t i = 0; i < sig_a->numel(); ++i) {
    if (!(sig_a->value[i] > 0.0) || !(sig_b->value[i] > 0.0)) {
      throw std::invalid_argument("kl_diag_gaussians: stddevs must be strictly positive");
    }
  }
  Var out = make_result({1}, {mu_a, sig_a, mu_b, sig_b});
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a->numel(); ++i) {
    const double sa = sig_a->value[i];
    const double sb = sig_b->value[i];
    const double dm = mu_a->value[i] - mu_b->value[i];
    acc += std::log(sb / sa) + (sa * sa + dm * dm) / (2.0 * sb * sb) - 0.5;
  }
  out->value[0] = acc;
  out->backward_fn = [](Node& self) {
    const auto& mu_a_p = self.parents[0];
    const auto& sig_a_p = self.parents[1];
    const auto& mu_b_p = self.parents[2];
    const auto& sig_b_p = self.parents[3];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < mu_a_p->numel(); ++i) {
      const double sa = sig_a_p->value[i];
      const double sb = sig_b_p->value[i];
      const double dm = mu_a_p->value[i] - mu_b_p->value[i];
      if (mu_a_p->requires_grad) mu_a_p->grad[i] += g * dm / (sb * sb);
      if (mu_b_p->requires_grad) mu_b_p->grad[i] -= g * dm / (sb * sb);
      if (sig_a_p->requires_grad) sig_a_p->grad[i] += g * (-1.0 / sa + sa / (sb * sb));
      if (sig_b_p->requires_grad) {
        sig_b_p->grad[i] += g * (1.0 / sb - (sa * sa + dm * dm) / (sb * sb * sb));
      }
    }
  };
  return out;
}

Var cross_entropy_logits(const Var& logits, int label) {
  if (logits->shape.size() != 1) {
    throw std::invalid_argument("cross_entropy_logits: expected a vector of logits, got " +
                                shape_str(logits->shape));
  }
  const int n = logits->shape[0];
  if (label < 0 || label >= n) {
    throw std::invalid_argument("cross_entropy_logits: label " + std::to_string(label) +
                                " out of range [0," + std::to_string(n) + ")");
  }
  require_finite(logits, "cross_entropy_logits");
  Var out = make_result({1}, {logits});
  double mx = logits->value[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits->value[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) denom += std::exp(logits->value[i] - mx);
  out->value[0] = std::log(denom) + mx - logits->value[label];
  out->backward_fn = [label, n, mx, denom](Node& self) {
    const auto& logits_p = self.parents[0];
    if (!logits_p->requires_grad) return;
    const double g = self.grad[0];
    for (int i = 0; i < n; ++i) {
      const double p = std::exp(logits_p->value[i] - mx) / denom;
      logits_p->grad[i] += g * (p - (i == label ? 1.0 : 0.0));
    }
  };
  return out;
}

Var scalar_combine(const std::vector<Var>& scalars, const std::vector<double>& coeffs) {
  if (scalars.empty() || scalars.size() != coeffs.size()) {
    throw std::invalid_argument("scalar_combine: needs equal-length non-empty term lists");
  }
  for (const auto& s : scalars) {
    if (!s->is_scalar()) {
      throw std::invalid_argument("scalar_combine: every term must be scalar, got " +
                                  shape_str(s->shape));
    }
  }
  Var out = make_result({1}, scalars);
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) acc += coeffs[i] * scalars[i]->value[0];
  out->value[0] = acc;
  out->backward_fn = [coeffs](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->grad[0] += coeffs[i] * self.grad[0];
    }
  };
  return out;
}

}  // namespace caro
