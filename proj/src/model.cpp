#include "caro/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace caro {

using nlohmann::json;

void ModelConfig::validate() const {
  if (embed_dim < 2) throw std::invalid_argument("ModelConfig: embed_dim must be >= 2");
  if (max_seq_len < 1) throw std::invalid_argument("ModelConfig: max_seq_len must be >= 1");
  if (r1 < 1 || r1 >= embed_dim) {
    throw std::invalid_argument("ModelConfig: r1 must satisfy 1 <= r1 < embed_dim");
  }
  if (r2 < 1 || proj_dim < 1 || trunk_hidden < 1 || critic_hidden < 1 || head_hidden < 1) {
    throw std::invalid_argument("ModelConfig: layer widths must be positive");
  }
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (!(stddev_floor > 0.0)) throw std::invalid_argument("ModelConfig: stddev_floor must be > 0");
  if (view_dropout < 0.0 || view_dropout >= 1.0) {
    throw std::invalid_argument("ModelConfig: view_dropout must lie in [0,1)");
  }
}

std::string AblationFlags::describe() const {
  std::string s;
  auto append = [&s](const char* name) {
    if (!s.empty()) s += ",";
    s += name;
  };
  if (no_unlabeled) append("no-unlabeled");
  if (no_multiview) append("no-multiview");
  if (no_gate) append("no-gate-aggregation");
  if (no_ib) append("no-ib");
  return s.empty() ? "none" : s;
}

namespace {

Var init_dense_weight(int out_dim, int in_dim, Rng& rng, const std::string& name) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::vector<double> data(static_cast<std::size_t>(out_dim) * in_dim);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return make_param({out_dim, in_dim}, std::move(data), name);
}

Var init_bias(int dim, const std::string& name) {
  return make_param({dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0), name);
}

}  // namespace

CaroModel CaroModel::init(const ModelConfig& cfg, Vocabulary vocab, Rng& rng) {
  cfg.validate();
  CaroModel model;
  model.cfg_ = cfg;
  model.vocab_ = std::move(vocab);

  const int m = cfg.embed_dim;
  const int n = cfg.max_seq_len;
  const int vocab_size = model.vocab_.size();
  {
    // each row is drawn from a stream keyed by its token, so a token embeds
    // identically across runs that differ only in vocabulary composition
    // (e.g. sweeps over the unlabeled-pool size)
    std::vector<double> data(static_cast<std::size_t>(vocab_size) * m);
    for (int row = 0; row < vocab_size; ++row) {
      Rng row_rng = rng.fork(model.vocab_.token_of(row));
      for (int j = 0; j < m; ++j) {
        data[static_cast<std::size_t>(row) * m + j] = row_rng.uniform(-0.1, 0.1);
      }
    }
    model.embedding_ = make_param({vocab_size, m}, std::move(data), "embedding");
  }
  model.field_.r1 = cfg.r1;
  model.field_.w1 = init_dense_weight(cfg.r1, n * m, rng, "field.w1");
  model.field_.row_w = init_dense_weight(n, cfg.r1, rng, "field.row_w");
  model.gate_.r2 = cfg.r2;
  model.gate_.w2 = init_dense_weight(cfg.r2, m, rng, "gate.w2");
  model.gate_.w3 = init_dense_weight(m, cfg.r2, rng, "gate.w3");

  model.head_.proj_dim = cfg.proj_dim;
  model.head_.stddev_floor = cfg.stddev_floor;
  model.head_.wt1 = init_dense_weight(cfg.trunk_hidden, m, rng, "head.wt1");
  model.head_.bt1 = init_bias(cfg.trunk_hidden, "head.bt1");
  model.head_.wt2 = init_dense_weight(cfg.trunk_hidden, cfg.trunk_hidden, rng, "head.wt2");
  model.head_.bt2 = init_bias(cfg.trunk_hidden, "head.bt2");
  model.head_.wmu = init_dense_weight(cfg.proj_dim, cfg.trunk_hidden, rng, "head.wmu");
  model.head_.bmu = init_bias(cfg.proj_dim, "head.bmu");
  model.head_.wsig = init_dense_weight(cfg.proj_dim, cfg.trunk_hidden, rng, "head.wsig");
  // start with small code deviations (softplus(-2) ~ 0.13); at softplus(0)
  // the sampling noise drowns the mean spread and the estimator goes flat
  model.head_.bsig = init_bias(cfg.proj_dim, "head.bsig");
  std::fill(model.head_.bsig->value.begin(), model.head_.bsig->value.end(), -2.0);

  model.critic_.w1 = init_dense_weight(cfg.critic_hidden, 2 * cfg.proj_dim, rng, "critic.w1");
  model.critic_.b1 = init_bias(cfg.critic_hidden, "critic.b1");
  model.critic_.w2 = init_dense_weight(cfg.critic_hidden, cfg.critic_hidden, rng, "critic.w2");
  model.critic_.b2 = init_bias(cfg.critic_hidden, "critic.b2");
  model.critic_.w3 = init_dense_weight(1, cfg.critic_hidden, rng, "critic.w3");
  model.critic_.b3 = init_bias(1, "critic.b3");

  model.cls_w1_ = init_dense_weight(cfg.head_hidden, m, rng, "cls.w1");
  model.cls_b1_ = init_bias(cfg.head_hidden, "cls.b1");
  model.cls_w2_ = init_dense_weight(cfg.num_classes, cfg.head_hidden, rng, "cls.w2");
  model.cls_b2_ = init_bias(cfg.num_classes, "cls.b2");
  return model;
}

CaroModel::ViewNodes CaroModel::views(const TokenWindow& window, const AblationFlags& flags,
                                      bool training, Rng* rng) const {
  if (static_cast<int>(window.ids.size()) != cfg_.max_seq_len) {
    throw std::invalid_argument("CaroModel::views: window length " +
                                std::to_string(window.ids.size()) + " vs configured " +
                                std::to_string(cfg_.max_seq_len));
  }
  Var seq = embed_rows(embedding_, window.ids, window.mask);
  ViewNodes out;
  out.v1 = global_pool(seq, window.mask);
  if (flags.no_multiview) {
    if (training) {
      if (!rng) throw std::invalid_argument("CaroModel::views: training draw needs an rng");
      const double keep = 1.0 - cfg_.view_dropout;
      std::vector<double> mask_data(static_cast<std::size_t>(cfg_.embed_dim));
      for (double& v : mask_data) v = rng->uniform01() < keep ? 1.0 / keep : 0.0;
      out.v2 = mul(out.v1, make_const({cfg_.embed_dim}, std::move(mask_data)));
    } else {
      out.v2 = out.v1;
    }
  } else {
    out.v2 = adaptive_field(seq, window.mask, field_, &out.alpha);
  }
  return out;
}

Var CaroModel::aggregate(const ViewNodes& views, const AblationFlags& flags, Var* beta_out) const {
  if (flags.no_gate) {
    if (beta_out) *beta_out = nullptr;
    return scale(add(views.v1, views.v2), 0.5);
  }
  return aggregate_views(views.v1, views.v2, gate_, beta_out);
}

Var CaroModel::classifier_logits(const Var& representation) const {
  Var h = leaky_relu(dense(representation, cls_w1_, cls_b1_), cfg_.leaky_slope);
  return dense(h, cls_w2_, cls_b2_);
}

std::vector<Var> CaroModel::encoder_params() const {
  return {embedding_, field_.w1, field_.row_w};
}

std::vector<Var> CaroModel::head_params() const {
  std::vector<Var> out = {gate_.w2, gate_.w3};
  for (const auto& p : head_.params()) out.push_back(p);
  for (const auto& p : critic_.params()) out.push_back(p);
  out.push_back(cls_w1_);
  out.push_back(cls_b1_);
  out.push_back(cls_w2_);
  out.push_back(cls_b2_);
  return out;
}

std::vector<Var> CaroModel::all_params() const {
  std::vector<Var> out = encoder_params();
  for (const auto& p : head_params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Var>> CaroModel::named_params() const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& p : all_params()) out.emplace_back(p->name, p);
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const CaroModel& model = ckpt.model;
  const ModelConfig& cfg = model.config();
  json j;
  j["format"] = "caro-checkpoint-v1";
  j["seed"] = ckpt.seed;
  j["ind_intents"] = ckpt.ind_intents;
  j["config_echo"] = ckpt.config_echo;
  j["ablation"] = {{"no_unlabeled", ckpt.flags.no_unlabeled},
                   {"no_multiview", ckpt.flags.no_multiview},
                   {"no_gate", ckpt.flags.no_gate},
                   {"no_ib", ckpt.flags.no_ib}};
  j["model"] = {{"embed_dim", cfg.embed_dim},
                {"max_seq_len", cfg.max_seq_len},
                {"r1", cfg.r1},
                {"r2", cfg.r2},
                {"proj_dim", cfg.proj_dim},
                {"trunk_hidden", cfg.trunk_hidden},
                {"critic_hidden", cfg.critic_hidden},
                {"head_hidden", cfg.head_hidden},
                {"num_classes", cfg.num_classes},
                {"stddev_floor", cfg.stddev_floor},
                {"leaky_slope", cfg.leaky_slope},
                {"view_dropout", cfg.view_dropout}};
  j["vocab"] = model.vocab().tokens();
  json params = json::object();
  for (const auto& [name, p] : model.named_params()) {
    params[name] = {{"shape", p->shape}, {"data", p->value}};
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "caro-checkpoint-v1") {
    throw std::runtime_error("load_checkpoint: unrecognized format in " + path);
  }
  Checkpoint ckpt;
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.ind_intents = j.at("ind_intents").get<std::vector<std::string>>();
  ckpt.config_echo = j.at("config_echo").get<std::map<std::string, std::string>>();
  const auto& ab = j.at("ablation");
  ckpt.flags.no_unlabeled = ab.at("no_unlabeled").get<bool>();
  ckpt.flags.no_multiview = ab.at("no_multiview").get<bool>();
  ckpt.flags.no_gate = ab.at("no_gate").get<bool>();
  ckpt.flags.no_ib = ab.at("no_ib").get<bool>();

  const auto& mj = j.at("model");
  ModelConfig cfg;
  cfg.embed_dim = mj.at("embed_dim").get<int>();
  cfg.max_seq_len = mj.at("max_seq_len").get<int>();
  cfg.r1 = mj.at("r1").get<int>();
  cfg.r2 = mj.at("r2").get<int>();
  cfg.proj_dim = mj.at("proj_dim").get<int>();
  cfg.trunk_hidden = mj.at("trunk_hidden").get<int>();
  cfg.critic_hidden = mj.at("critic_hidden").get<int>();
  cfg.head_hidden = mj.at("head_hidden").get<int>();
  cfg.num_classes = mj.at("num_classes").get<int>();
  cfg.stddev_floor = mj.at("stddev_floor").get<double>();
  cfg.leaky_slope = mj.at("leaky_slope").get<double>();
  cfg.view_dropout = mj.at("view_dropout").get<double>();

  Vocabulary vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  Rng dummy(0);
  ckpt.model = CaroModel::init(cfg, std::move(vocab), dummy);
  for (const auto& [name, p] : ckpt.model.named_params()) {
    const auto& pj = j.at("params").at(name);
    const auto shape = pj.at("shape").get<std::vector<int>>();
    if (shape != p->shape) {
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    p->value = pj.at("data").get<std::vector<double>>();
  }
  return ckpt;
}

}  // namespace caro
