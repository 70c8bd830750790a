#pragma once

#include <map>
#include <string>
#include <vector>

#include "caro/model.hpp"
#include "caro/pipeline.hpp"

namespace caro {

// rows = true class, columns = predicted, both 1..k+1.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<long long> counts;  // row-major (classes x classes)
  long long total = 0;

  long long at(int true_label, int predicted) const {
    return counts[static_cast<std::size_t>(true_label - 1) * classes +
                  static_cast<std::size_t>(predicted - 1)];
  }
};

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
  bool zero_support = false;  // absent from both truths and predictions
};

struct ScoreReport {
  int k = 0;  // in-domain classes; class k+1 is out-of-domain
  double f1_all = 0.0;
  double f1_ood = 0.0;
  double f1_ind = 0.0;
  std::vector<ClassScore> per_class;  // size k+1
  long long sample_count = 0;
  ConfusionMatrix confusion;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int k);

// Macro F1 over all classes, over the k in-domain classes, and the F1 of the
// out-of-domain class. A class with precision+recall = 0 scores F1 = 0;
// classes absent from both sides are flagged zero_support.
ScoreReport score(const std::vector<int>& predictions, const std::vector<int>& truths, int k);

// Machine-readable: header f1_all/f1_ood/f1_ind, one data row, then fixed
// per-class rows. parse_score_report inverts it.
void write_score_report(const ScoreReport& report, const std::string& path);
ScoreReport parse_score_report(const std::string& path);
// Human-readable companion table.
void write_score_table(const ScoreReport& report, const std::string& path);

ScoreReport evaluate_split(const CaroModel& model, const AblationFlags& flags,
                           const std::vector<DialogueSample>& samples, int k);

// --- representation diagnostics ------------------------------------------------

struct InfoPlaneOptions {
  int critic_hidden = 32;
  int train_steps = 300;
  int batch_size = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
};

struct InfoPlaneReport {
  double i_xz = 0.0;        // between v(x) and the code z
  double i_zy = 0.0;        // between z and the one-hot label
  double difference = 0.0;  // i_xz - i_zy
  long long samples_used = 0;
  long long trimmed_per_tail = 0;
};

// Trains two fresh critics on frozen representations and averages per-sample
// estimates after dropping the lowest and highest 5% (exactly floor(0.05 N)
// per tail). Requires at least 40 labeled samples so the trimming is
// meaningful.
InfoPlaneReport information_plane(const CaroModel& model, const AblationFlags& flags,
                                  const std::vector<DialogueSample>& samples,
                                  const InfoPlaneOptions& options);
void write_info_plane(const InfoPlaneReport& report, const std::string& path);

// Generic estimator used by information_plane, exposed for calibration
// tests: trains a critic on aligned pairs and returns the trimmed average of
// per-sample estimates, calibrated to zero at independence.
double estimate_mi_between(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b,
                           const InfoPlaneOptions& options);

// Mean after dropping exactly floor(0.05 N) values from each tail.
double trimmed_mean_5pct(std::vector<double> values);

// --- attention / gate weight dumps ---------------------------------------------

struct AlphaDump {
  int max_len = 0;
  std::vector<std::string> sample_ids;
  std::vector<int> sample_labels;
  std::vector<std::vector<double>> per_sample;      // softmax weights, padding = 0
  std::map<int, std::vector<double>> intent_mean;   // label -> mean weight per index
};

// Rejected for a model trained with the dropout-view ablation (no adaptive
// field weights exist there).
AlphaDump dump_alpha_weights(const CaroModel& model, const AblationFlags& flags,
                             const std::vector<DialogueSample>& samples);
void write_alpha_dump(const AlphaDump& dump, const std::string& path);

struct BetaDump {
  std::vector<double> mean_beta;        // per dimension
  std::vector<double> view_difference;  // 2*beta - 1 per dimension
  long long samples_used = 0;
};

// Rejected for a gate-ablated model.
BetaDump dump_beta_weights(const CaroModel& model, const AblationFlags& flags,
                           const std::vector<DialogueSample>& samples);
void write_beta_dump(const BetaDump& dump, const std::string& path);

}  // namespace caro
