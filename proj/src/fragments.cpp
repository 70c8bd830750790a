#include "caro/fragments.hpp"

#include "caro/encoder.hpp"
#include "caro/objective.hpp"
#include "caro/rng.hpp"

namespace caro {

namespace {

Var uniform_param(std::vector<int> shape, double bound, Rng& rng, const std::string& name) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return make_param(std::move(shape), std::move(data), name);
}

std::vector<double> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return data;
}

Var dot_with(const Var& v, const std::vector<double>& probe) {
  return sum(mul(v, make_const(v->shape, probe)));
}

}  // namespace

std::vector<GradCheckFragment> standard_fragments(std::uint64_t seed) {
  // shapes kept tiny so central differences stay cheap
  constexpr int n = 5, m = 6, r1 = 3, r2 = 4, d = 4, hidden = 5, classes = 4, vocab = 8;
  Rng root(seed);
  std::vector<GradCheckFragment> fragments;

  const std::vector<int> ids = {3, 5, 1, 7, 0};
  const std::vector<bool> mask = {true, true, true, true, false};

  {  // mean pooling over unmasked token embeddings
    Rng rng = root.fork("frag-pool");
    Var table = uniform_param({vocab, m}, 0.8, rng, "embedding");
    const auto probe = uniform_values(m, 1.0, rng);
    GradCheckFragment f;
    f.name = "mean-pooling";
    f.params = {table};
    f.build = [table, probe]() {
      Var seq = embed_rows(table, {3, 5, 1, 7, 0}, {true, true, true, true, false});
      return dot_with(global_pool(seq, {true, true, true, true, false}), probe);
    };
    fragments.push_back(std::move(f));
  }

  {  // adaptive reception field
    Rng rng = root.fork("frag-field");
    Var table = uniform_param({vocab, m}, 0.8, rng, "embedding");
    AdaptiveFieldParams field;
    field.r1 = r1;
    field.w1 = uniform_param({r1, n * m}, 0.5, rng, "field.w1");
    field.row_w = uniform_param({n, r1}, 0.7, rng, "field.row_w");
    const auto probe = uniform_values(m, 1.0, rng);
    GradCheckFragment f;
    f.name = "adaptive-field";
    f.params = {table, field.w1, field.row_w};
    f.build = [table, field, probe, ids, mask]() {
      Var seq = embed_rows(table, ids, mask);
      return dot_with(adaptive_field(seq, mask, field), probe);
    };
    fragments.push_back(std::move(f));
  }

  {  // aggregation gate, gradients to both views and both gate maps
    Rng rng = root.fork("frag-gate");
    Var v1 = uniform_param({m}, 0.9, rng, "view1");
    Var v2 = uniform_param({m}, 0.9, rng, "view2");
    AggregationGateParams gate;
    gate.r2 = r2;
    gate.w2 = uniform_param({r2, m}, 0.6, rng, "gate.w2");
    gate.w3 = uniform_param({m, r2}, 0.6, rng, "gate.w3");
    const auto probe = uniform_values(m, 1.0, rng);
    GradCheckFragment f;
    f.name = "aggregation-gate";
    f.params = {v1, v2, gate.w2, gate.w3};
    f.build = [v1, v2, gate, probe]() { return dot_with(aggregate_views(v1, v2, gate), probe); };
    fragments.push_back(std::move(f));
  }

  {  // full bottleneck loss over a batch of three view pairs
    Rng rng = root.fork("frag-ib");
    GaussianHeadParams head;
    head.proj_dim = d;
    head.stddev_floor = 1e-4;
    head.wt1 = uniform_param({hidden, m}, 0.6, rng, "head.wt1");
    head.bt1 = uniform_param({hidden}, 0.3, rng, "head.bt1");
    head.wt2 = uniform_param({hidden, hidden}, 0.6, rng, "head.wt2");
    head.bt2 = uniform_param({hidden}, 0.3, rng, "head.bt2");
    head.wmu = uniform_param({d, hidden}, 0.6, rng, "head.wmu");
    head.bmu = uniform_param({d}, 0.3, rng, "head.bmu");
    head.wsig = uniform_param({d, hidden}, 0.6, rng, "head.wsig");
    head.bsig = uniform_param({d}, 0.3, rng, "head.bsig");
    CriticParams critic;
    critic.w1 = uniform_param({hidden, 2 * d}, 0.6, rng, "critic.w1");
    critic.b1 = uniform_param({hidden}, 0.3, rng, "critic.b1");
    critic.w2 = uniform_param({hidden, hidden}, 0.6, rng, "critic.w2");
    critic.b2 = uniform_param({hidden}, 0.3, rng, "critic.b2");
    critic.w3 = uniform_param({1, hidden}, 0.6, rng, "critic.w3");
    critic.b3 = uniform_param({1}, 0.3, rng, "critic.b3");

    std::vector<Var> views1, views2;
    std::vector<std::vector<double>> eps1, eps2;
    for (int i = 0; i < 3; ++i) {
      views1.push_back(uniform_param({m}, 0.9, rng, "v1_" + std::to_string(i)));
      views2.push_back(uniform_param({m}, 0.9, rng, "v2_" + std::to_string(i)));
      std::vector<double> e1(d), e2(d);
      for (double& e : e1) e = rng.normal();
      for (double& e : e2) e = rng.normal();
      eps1.push_back(std::move(e1));
      eps2.push_back(std::move(e2));
    }
    GradCheckFragment f;
    f.name = "bottleneck-loss";
    f.params = views1;
    for (const auto& v : views2) f.params.push_back(v);
    for (const auto& p : head.params()) f.params.push_back(p);
    for (const auto& p : critic.params()) f.params.push_back(p);
    f.build = [views1, views2, head, critic, eps1, eps2]() {
      std::vector<GaussianCode> z1, z2;
      for (std::size_t i = 0; i < views1.size(); ++i) {
        z1.push_back(encode_view(views1[i], head, eps1[i]));
        z2.push_back(encode_view(views2[i], head, eps2[i]));
      }
      return ib_loss(z1, z2, critic).loss;
    };
    fragments.push_back(std::move(f));
  }

  {  // classifier cross entropy
    Rng rng = root.fork("frag-ce");
    Var rep = uniform_param({m}, 0.9, rng, "representation");
    Var w1 = uniform_param({hidden, m}, 0.6, rng, "cls.w1");
    Var b1 = uniform_param({hidden}, 0.3, rng, "cls.b1");
    Var w2 = uniform_param({classes, hidden}, 0.6, rng, "cls.w2");
    Var b2 = uniform_param({classes}, 0.3, rng, "cls.b2");
    GradCheckFragment f;
    f.name = "cross-entropy";
    f.params = {rep, w1, b1, w2, b2};
    f.build = [rep, w1, b1, w2, b2]() {
      Var h = leaky_relu(dense(rep, w1, b1), 0.01);
      return cross_entropy_logits(dense(h, w2, b2), 2);
    };
    fragments.push_back(std::move(f));
  }

  return fragments;
}

}  // namespace caro
