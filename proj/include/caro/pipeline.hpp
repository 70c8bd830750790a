#pragma once

#include <optional>
#include <string>
#include <vector>

#include "caro/data.hpp"
#include "caro/model.hpp"

namespace caro {

struct TrainingConfig {
  double lambda = 0.5;
  int stage1_epochs = 15;
  int stage2_epochs = 10;
  int batch_size = 25;
  double lr_encoder = 1e-5;   // embedding table + adaptive field
  double lr_heads = 1e-4;     // gate, projection head, critic, classifier
  double weight_decay_encoder = 0.01;  // decoupled; heads use the plain update
  double mix_lo = 0.2;
  double mix_hi = 0.8;
  int pseudo_ood_count = 0;   // 0 = mean per-class in-domain count
  int patience = 3;           // early-stop evaluations without improvement
  int max_context_turns = -1; // -1 keeps full histories
  // critic-only steps on frozen codes before joint stage-two training; an
  // untrained critic cannot hold the mutual-information term up against the
  // divergence term, which otherwise collapses the projection head
  int critic_warmup_steps = 0;
  // feed code means rather than reparameterized samples to the
  // mutual-information critic (the divergence terms always use mean and
  // deviation); sampling noise lets the critic latch onto chance pairings
  bool mi_on_means = true;
  AblationFlags ablation;
  std::uint64_t seed = 1;

  void validate() const;
};

// A synthesized out-of-domain point living in representation space; it
// bypasses the encoder and feeds the classifier head directly.
struct PseudoOODSample {
  std::vector<double> representation;
};

// Convex combinations of representations drawn from two different intent
// classes, mixing coefficient uniform in [lo, hi].
std::vector<PseudoOODSample> synthesize_pseudo_ood(
    const std::vector<std::vector<std::vector<double>>>& reps_by_class, int count, double lo,
    double hi, Rng& rng);

struct MinedSample {
  std::size_t unlabeled_index = 0;
  std::string id;
  double max_softmax = 0.0;  // score of the winning class at mining time
};

struct MinedPool {
  std::vector<MinedSample> members;  // every member was predicted out-of-domain
};

struct Prediction {
  int label = 0;                // 1..k+1, ties broken toward the lowest index
  std::vector<double> scores;   // softmax over k+1 classes
};

Prediction classify(const CaroModel& model, const AblationFlags& flags, const TokenWindow& window);
Prediction classify(const CaroModel& model, const AblationFlags& flags,
                    const DialogueSample& sample);

// Deterministic evaluation-mode aggregated representation v(x).
std::vector<double> compute_representation(const CaroModel& model, const AblationFlags& flags,
                                           const TokenWindow& window);

// Argmax predictions over the unlabeled pool; samples assigned the
// out-of-domain class enter the mined pool.
MinedPool mine_ood(const CaroModel& model, const AblationFlags& flags,
                   const UnlabeledPool& unlabeled);

struct TrainLogRow {
  long long step = 0;
  double ce_term = 0.0;
  double ib_term = 0.0;
  double mi_estimate = 0.0;
  double skl_term = 0.0;
  double total = 0.0;
};

struct TrainResult {
  CaroModel model;
  AblationFlags flags;
  std::vector<TrainLogRow> log;
  MinedPool mined;
  int stage1_epochs_run = 0;
  int stage2_epochs_run = 0;
  double best_valid_accuracy = 0.0;
};

// Algorithm: stage one synthesizes pseudo out-of-domain points from detached
// in-domain representations and pre-trains the (k+1)-way classifier with
// cross entropy; stage two mines out-of-domain samples from the unlabeled
// pool and continues training on cross entropy plus the weighted multi-view
// bottleneck loss, early-stopping on validation in-domain accuracy.
TrainResult run_training(const SplitBundle& bundle, const ModelConfig& model_cfg,
                         const TrainingConfig& cfg);

void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path);

double ind_accuracy(const CaroModel& model, const AblationFlags& flags,
                    const std::vector<DialogueSample>& samples);

}  // namespace caro
