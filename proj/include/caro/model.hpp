#pragma once

#include <map>
#include <string>
#include <vector>

#include "caro/encoder.hpp"
#include "caro/objective.hpp"
#include "caro/optim.hpp"

namespace caro {

struct ModelConfig {
  int embed_dim = 64;     // token embedding width m
  int max_seq_len = 256;  // token window n
  int r1 = 16;            // adaptive-field bottleneck
  int r2 = 48;            // aggregation-gate bottleneck
  int proj_dim = 64;      // Gaussian code dimension
  int trunk_hidden = 64;
  int critic_hidden = 64;
  int head_hidden = 64;
  int num_classes = 0;    // k+1, set from data
  double stddev_floor = 1e-4;
  double leaky_slope = 0.01;
  double view_dropout = 0.1;  // perturbation rate for the dropout-view ablation

  void validate() const;
};

struct AblationFlags {
  bool no_unlabeled = false;   // skip stage two entirely
  bool no_multiview = false;   // second view is a dropout perturbation of the first
  bool no_gate = false;        // plain average instead of the learned gate
  bool no_ib = false;          // lambda forced to zero

  std::string describe() const;
};

// The full set of trainable parameters plus the forward paths that assemble
// graphs over them.
class CaroModel {
 public:
  CaroModel() = default;
  static CaroModel init(const ModelConfig& cfg, Vocabulary vocab, Rng& rng);

  struct ViewNodes {
    Var v1;
    Var v2;
    Var alpha;  // masked softmax weights; null under the dropout-view ablation
  };

  // Builds both views for a tokenized sample. When training is true and the
  // dropout-view ablation is active, the second view is a fresh stochastic
  // perturbation drawn from rng; at evaluation time it equals the first view.
  ViewNodes views(const TokenWindow& window, const AblationFlags& flags, bool training,
                  Rng* rng) const;

  // Gated aggregation of the two views (or their plain average under the
  // gate ablation).
  Var aggregate(const ViewNodes& views, const AblationFlags& flags, Var* beta_out = nullptr) const;

  Var classifier_logits(const Var& representation) const;

  GaussianCode encode(const Var& view, const std::vector<double>& eps) const {
    return encode_view(view, head_, eps);
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const CriticParams& critic() const { return critic_; }
  const GaussianHeadParams& gaussian_head() const { return head_; }

  TokenWindow window_for(const DialogueSample& sample) const {
    return build_token_window(sample, vocab_, cfg_.max_seq_len);
  }

  // Backbone-side parameters: embedding table and adaptive field.
  std::vector<Var> encoder_params() const;
  // Everything else: gate, projection head, critic, classifier.
  std::vector<Var> head_params() const;
  std::vector<Var> all_params() const;
  // name -> parameter, fixed deterministic order in the checkpoint
  std::vector<std::pair<std::string, Var>> named_params() const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  Var embedding_;  // {V, m}
  AdaptiveFieldParams field_;
  AggregationGateParams gate_;
  GaussianHeadParams head_;
  CriticParams critic_;
  Var cls_w1_, cls_b1_, cls_w2_, cls_b2_;
};

// Self-describing archive: model dimensions, vocabulary, intent inventory,
// every parameter tensor with its shape, a config echo and the seed.
// Round-trips bit exactly.
struct Checkpoint {
  CaroModel model;
  std::vector<std::string> ind_intents;
  std::map<std::string, std::string> config_echo;
  std::uint64_t seed = 0;
  AblationFlags flags;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace caro
