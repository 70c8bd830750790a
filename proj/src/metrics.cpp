#include "caro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace caro {

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int k) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("confusion_matrix: predictions (" +
                                std::to_string(predictions.size()) + ") and truths (" +
                                std::to_string(truths.size()) + ") differ in length");
  }
  const int classes = k + 1;
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    const int p = predictions[i];
    if (t < 1 || t > classes || p < 1 || p > classes) {
      throw std::invalid_argument("confusion_matrix: label outside [1," +
                                  std::to_string(classes) + "] at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(t - 1) * classes + static_cast<std::size_t>(p - 1)];
    ++cm.total;
  }
  return cm;
}

ScoreReport score(const std::vector<int>& predictions, const std::vector<int>& truths, int k) {
  ScoreReport report;
  report.k = k;
  report.confusion = confusion_matrix(predictions, truths, k);
  report.sample_count = report.confusion.total;
  const int classes = k + 1;
  report.per_class.resize(static_cast<std::size_t>(classes));
  double f1_sum_all = 0.0;
  double f1_sum_ind = 0.0;
  for (int c = 1; c <= classes; ++c) {
    long long tp = report.confusion.at(c, c);
    long long pred_count = 0;
    long long true_count = 0;
    for (int other = 1; other <= classes; ++other) {
      pred_count += report.confusion.at(other, c);
      true_count += report.confusion.at(c, other);
    }
    ClassScore& cs = report.per_class[static_cast<std::size_t>(c - 1)];
    cs.support = true_count;
    cs.zero_support = true_count == 0 && pred_count == 0;
    cs.precision = pred_count > 0 ? static_cast<double>(tp) / static_cast<double>(pred_count) : 0.0;
    cs.recall = true_count > 0 ? static_cast<double>(tp) / static_cast<double>(true_count) : 0.0;
    const double pr = cs.precision + cs.recall;
    cs.f1 = pr > 0.0 ? 2.0 * cs.precision * cs.recall / pr : 0.0;
    f1_sum_all += cs.f1;
    if (c <= k) f1_sum_ind += cs.f1;
  }
  report.f1_all = f1_sum_all / static_cast<double>(classes);
  report.f1_ind = k > 0 ? f1_sum_ind / static_cast<double>(k) : 0.0;
  report.f1_ood = report.per_class.back().f1;
  return report;
}

void write_score_report(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_score_report: cannot open " + path);
  char buf[256];
  out << "f1_all\tf1_ood\tf1_ind\tsamples\tk\n";
  std::snprintf(buf, sizeof(buf), "%.9f\t%.9f\t%.9f\t%lld\t%d\n", report.f1_all, report.f1_ood,
                report.f1_ind, report.sample_count, report.k);
  out << buf;
  out << "class\tprecision\trecall\tf1\tsupport\tzero_support\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassScore& cs = report.per_class[c];
    std::snprintf(buf, sizeof(buf), "%zu\t%.9f\t%.9f\t%.9f\t%lld\t%d\n", c + 1, cs.precision,
                  cs.recall, cs.f1, cs.support, cs.zero_support ? 1 : 0);
    out << buf;
  }
}

ScoreReport parse_score_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_score_report: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("f1_all", 0) != 0) {
    throw std::runtime_error("parse_score_report: bad header in " + path);
  }
  ScoreReport report;
  if (!std::getline(in, line)) throw std::runtime_error("parse_score_report: missing scores");
  {
    std::istringstream ss(line);
    ss >> report.f1_all >> report.f1_ood >> report.f1_ind >> report.sample_count >> report.k;
    if (!ss) throw std::runtime_error("parse_score_report: unparsable scores row");
  }
  if (!std::getline(in, line)) throw std::runtime_error("parse_score_report: missing class header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t cls = 0;
    ClassScore cs;
    int zero = 0;
    ss >> cls >> cs.precision >> cs.recall >> cs.f1 >> cs.support >> zero;
    if (!ss) throw std::runtime_error("parse_score_report: unparsable class row");
    cs.zero_support = zero != 0;
    report.per_class.push_back(cs);
  }
  return report;
}

void write_score_table(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_score_table: cannot open " + path);
  char buf[256];
  out << "macro F1 scores over " << report.sample_count << " samples (" << report.k
      << " in-domain classes + 1 out-of-domain)\n\n";
  std::snprintf(buf, sizeof(buf), "  F1-All: %7.3f\n  F1-OOD: %7.3f\n  F1-IND: %7.3f\n\n",
                100.0 * report.f1_all, 100.0 * report.f1_ood, 100.0 * report.f1_ind);
  out << buf;
  out << "  class  precision  recall      f1  support\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassScore& cs = report.per_class[c];
    std::snprintf(buf, sizeof(buf), "  %5zu  %9.4f  %6.4f  %6.4f  %7lld%s\n", c + 1, cs.precision,
                  cs.recall, cs.f1, cs.support, cs.zero_support ? "  (zero support)" : "");
    out << buf;
  }
}

ScoreReport evaluate_split(const CaroModel& model, const AblationFlags& flags,
                           const std::vector<DialogueSample>& samples, int k) {
  std::vector<int> predictions;
  std::vector<int> truths;
  predictions.reserve(samples.size());
  truths.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.label == kUnlabeled) {
      throw std::invalid_argument("evaluate_split: sample " + s.id + " has no label");
    }
    predictions.push_back(classify(model, flags, s).label);
    truths.push_back(s.label);
  }
  return score(predictions, truths, k);
}

// --- mutual-information estimation over frozen pairs ---------------------------

namespace {

CriticParams make_fresh_critic(int in_dim, int hidden, Rng& rng) {
  auto weight = [&rng](int out_d, int in_d, const char* name) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_d + out_d));
    std::vector<double> data(static_cast<std::size_t>(out_d) * in_d);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return make_param({out_d, in_d}, std::move(data), name);
  };
  auto bias = [](int d, const char* name) {
    return make_param({d}, std::vector<double>(static_cast<std::size_t>(d), 0.0), name);
  };
  CriticParams critic;
  critic.w1 = weight(hidden, in_dim, "mi.w1");
  critic.b1 = bias(hidden, "mi.b1");
  critic.w2 = weight(hidden, hidden, "mi.w2");
  critic.b2 = bias(hidden, "mi.b2");
  critic.w3 = weight(1, hidden, "mi.w3");
  critic.b3 = bias(1, "mi.b3");
  return critic;
}

constexpr double kLog4 = 1.3862943611198906;

}  // namespace

double estimate_mi_between(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b,
                           const InfoPlaneOptions& options) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("estimate_mi_between: pair lists differ in length");
  }
  const std::size_t n = a.size();
  if (n < 40) {
    throw std::invalid_argument("estimate_mi_between: need at least 40 samples, got " +
                                std::to_string(n));
  }
  const int da = static_cast<int>(a[0].size());
  const int db = static_cast<int>(b[0].size());
  Rng rng(options.seed);
  Rng init_rng = rng.fork("mi-critic-init");
  CriticParams critic = make_fresh_critic(da + db, options.critic_hidden, init_rng);
  AdamOptimizer optimizer({{"critic", critic.params(), options.learning_rate, 0.0}});

  auto score_pair = [&](std::size_t i, std::size_t j) {
    Var va = make_const({da}, a[i]);
    Var vb = make_const({db}, b[j]);
    return critic_score(critic, va, vb);
  };

  Rng batch_rng = rng.fork("mi-batches");
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), n);
  for (int step_i = 0; step_i < options.train_steps; ++step_i) {
    std::vector<std::size_t> idx(batch);
    for (auto& v : idx) v = batch_rng.uniform_int(n);
    std::vector<Var> terms;
    std::vector<double> coeffs;
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t p = 0; p < batch; ++p) {
      const std::size_t i = idx[p];
      const std::size_t jneg = idx[(p + 1) % batch];
      terms.push_back(softplus(scale(score_pair(i, i), -1.0)));
      coeffs.push_back(-inv);
      terms.push_back(softplus(score_pair(i, jneg)));
      coeffs.push_back(-inv);
    }
    // ascend the bound
    Var objective = scale(scalar_combine(terms, coeffs), -1.0);
    backward(objective);
    optimizer.step();
  }

  // per-sample estimates with a rotation pairing for the negative
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t_pos = score_pair(i, i)->scalar();
    const double t_neg = score_pair(i, (i + 1) % n)->scalar();
    const double sp_npos = std::log1p(std::exp(-std::abs(t_pos))) + std::max(-t_pos, 0.0);
    const double sp_neg = std::log1p(std::exp(-std::abs(t_neg))) + std::max(t_neg, 0.0);
    values[i] = -sp_npos - sp_neg + kLog4;
  }
  return trimmed_mean_5pct(std::move(values));
}

double trimmed_mean_5pct(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("trimmed_mean_5pct: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t trim = static_cast<std::size_t>(0.05 * static_cast<double>(n));
  if (2 * trim >= n) throw std::invalid_argument("trimmed_mean_5pct: too few values");
  double acc = 0.0;
  for (std::size_t i = trim; i < n - trim; ++i) acc += values[i];
  return acc / static_cast<double>(n - 2 * trim);
}

InfoPlaneReport information_plane(const CaroModel& model, const AblationFlags& flags,
                                  const std::vector<DialogueSample>& samples,
                                  const InfoPlaneOptions& options) {
  if (samples.size() < 40) {
    throw std::invalid_argument("information_plane: need at least 40 labeled samples, got " +
                                std::to_string(samples.size()));
  }
  const int classes = model.config().num_classes;
  Rng rng(options.seed);
  Rng noise_rng = rng.fork("info-plane-noise");
  std::vector<std::vector<double>> xs, zs, ys;
  xs.reserve(samples.size());
  zs.reserve(samples.size());
  ys.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.label == kUnlabeled) {
      throw std::invalid_argument("information_plane: sample " + s.id + " has no label");
    }
    const TokenWindow window = model.window_for(s);
    auto views = model.views(window, flags, /*training=*/false, nullptr);
    Var rep = model.aggregate(views, flags);
    std::vector<double> eps(static_cast<std::size_t>(model.config().proj_dim));
    for (double& e : eps) e = noise_rng.normal();
    GaussianCode code = model.encode(rep, eps);
    xs.push_back(rep->value);
    zs.push_back(code.sample->value);
    std::vector<double> onehot(static_cast<std::size_t>(classes), 0.0);
    onehot[static_cast<std::size_t>(s.label - 1)] = 1.0;
    ys.push_back(std::move(onehot));
  }
  InfoPlaneReport report;
  InfoPlaneOptions o_xz = options;
  o_xz.seed = rng.fork("xz").next_u64();
  InfoPlaneOptions o_zy = options;
  o_zy.seed = rng.fork("zy").next_u64();
  report.i_xz = estimate_mi_between(xs, zs, o_xz);
  report.i_zy = estimate_mi_between(zs, ys, o_zy);
  report.difference = report.i_xz - report.i_zy;
  report.samples_used = static_cast<long long>(samples.size());
  report.trimmed_per_tail = static_cast<long long>(0.05 * static_cast<double>(samples.size()));
  return report;
}

void write_info_plane(const InfoPlaneReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_info_plane: cannot open " + path);
  char buf[192];
  out << "i_xz\ti_zy\tdifference\tsamples\ttrimmed_per_tail\n";
  std::snprintf(buf, sizeof(buf), "%.9f\t%.9f\t%.9f\t%lld\t%lld\n", report.i_xz, report.i_zy,
                report.difference, report.samples_used, report.trimmed_per_tail);
  out << buf;
}

// --- weight dumps ----------------------------------------------------------------

AlphaDump dump_alpha_weights(const CaroModel& model, const AblationFlags& flags,
                             const std::vector<DialogueSample>& samples) {
  if (flags.no_multiview) {
    throw std::invalid_argument(
        "dump_alpha_weights: the dropout-view ablation has no adaptive-field weights");
  }
  AlphaDump dump;
  dump.max_len = model.config().max_seq_len;
  std::map<int, std::vector<double>> sums;
  std::map<int, long long> counts;
  for (const auto& s : samples) {
    const TokenWindow window = model.window_for(s);
    auto views = model.views(window, flags, /*training=*/false, nullptr);
    dump.sample_ids.push_back(s.id);
    dump.sample_labels.push_back(s.label);
    dump.per_sample.push_back(views.alpha->value);
    auto& sum = sums[s.label];
    sum.resize(static_cast<std::size_t>(dump.max_len), 0.0);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += views.alpha->value[i];
    ++counts[s.label];
  }
  for (auto& [label, sum] : sums) {
    for (double& v : sum) v /= static_cast<double>(counts[label]);
    dump.intent_mean[label] = sum;
  }
  return dump;
}

void write_alpha_dump(const AlphaDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_alpha_dump: cannot open " + path);
  char buf[64];
  out << "section\tkey\ttoken_index\tweight\n";
  for (const auto& [label, mean] : dump.intent_mean) {
    for (std::size_t i = 0; i < mean.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9f", mean[i]);
      out << "intent_mean\t" << label << "\t" << i << "\t" << buf << "\n";
    }
  }
  for (std::size_t s = 0; s < dump.per_sample.size(); ++s) {
    for (std::size_t i = 0; i < dump.per_sample[s].size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9f", dump.per_sample[s][i]);
      out << "sample\t" << dump.sample_ids[s] << "\t" << i << "\t" << buf << "\n";
    }
  }
}

BetaDump dump_beta_weights(const CaroModel& model, const AblationFlags& flags,
                           const std::vector<DialogueSample>& samples) {
  if (flags.no_gate) {
    throw std::invalid_argument("dump_beta_weights: the gate-ablated model has no gate weights");
  }
  if (samples.empty()) {
    throw std::invalid_argument("dump_beta_weights: no samples given");
  }
  BetaDump dump;
  const int m = model.config().embed_dim;
  dump.mean_beta.assign(static_cast<std::size_t>(m), 0.0);
  for (const auto& s : samples) {
    const TokenWindow window = model.window_for(s);
    auto views = model.views(window, flags, /*training=*/false, nullptr);
    Var beta;
    model.aggregate(views, flags, &beta);
    for (int i = 0; i < m; ++i) dump.mean_beta[static_cast<std::size_t>(i)] += beta->value[i];
  }
  for (double& v : dump.mean_beta) v /= static_cast<double>(samples.size());
  dump.view_difference.resize(dump.mean_beta.size());
  for (std::size_t i = 0; i < dump.mean_beta.size(); ++i) {
    dump.view_difference[i] = 2.0 * dump.mean_beta[i] - 1.0;
  }
  dump.samples_used = static_cast<long long>(samples.size());
  return dump;
}

void write_beta_dump(const BetaDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_beta_dump: cannot open " + path);
  char buf[96];
  out << "dimension\tmean_beta\tview_difference\n";
  for (std::size_t i = 0; i < dump.mean_beta.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.9f\t%.9f\n", i, dump.mean_beta[i],
                  dump.view_difference[i]);
    out << buf;
  }
}

}  // namespace caro
