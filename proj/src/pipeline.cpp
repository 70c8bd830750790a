#include "caro/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace caro {

void TrainingConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("TrainingConfig: lambda must be >= 0");
  if (stage1_epochs < 0 || stage2_epochs < 0) {
    throw std::invalid_argument("TrainingConfig: epoch counts must be >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainingConfig: batch_size must be >= 1");
  if (!(lr_encoder > 0.0) || !(lr_heads > 0.0)) {
    throw std::invalid_argument("TrainingConfig: learning rates must be positive");
  }
  if (weight_decay_encoder < 0.0) {
    throw std::invalid_argument("TrainingConfig: weight decay must be >= 0");
  }
  if (!(mix_lo > 0.0) || !(mix_lo <= mix_hi) || !(mix_hi < 1.0)) {
    throw std::invalid_argument("TrainingConfig: mixing bounds must satisfy 0 < lo <= hi < 1");
  }
  if (pseudo_ood_count < 0) throw std::invalid_argument("TrainingConfig: pseudo_ood_count < 0");
  if (critic_warmup_steps < 0) {
    throw std::invalid_argument("TrainingConfig: critic_warmup_steps must be >= 0");
  }
  if (patience < 1) throw std::invalid_argument("TrainingConfig: patience must be >= 1");
}

std::vector<PseudoOODSample> synthesize_pseudo_ood(
    const std::vector<std::vector<std::vector<double>>>& reps_by_class, int count, double lo,
    double hi, Rng& rng) {
  if (!(lo > 0.0) || !(lo <= hi) || !(hi < 1.0)) {
    throw std::invalid_argument("synthesize_pseudo_ood: bounds must satisfy 0 < lo <= hi < 1");
  }
  std::vector<std::size_t> nonempty;
  for (std::size_t c = 0; c < reps_by_class.size(); ++c) {
    if (!reps_by_class[c].empty()) nonempty.push_back(c);
  }
  if (nonempty.size() < 2) {
    throw std::invalid_argument("synthesize_pseudo_ood: need representations from >= 2 classes");
  }
  std::vector<PseudoOODSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // two different classes, uniformly
    const std::size_t ia = rng.uniform_int(nonempty.size());
    std::size_t ib = rng.uniform_int(nonempty.size() - 1);
    if (ib >= ia) ++ib;
    const auto& pool_a = reps_by_class[nonempty[ia]];
    const auto& pool_b = reps_by_class[nonempty[ib]];
    const auto& ra = pool_a[rng.uniform_int(pool_a.size())];
    const auto& rb = pool_b[rng.uniform_int(pool_b.size())];
    const double c = rng.uniform(lo, hi);
    PseudoOODSample p;
    p.representation.resize(ra.size());
    for (std::size_t d = 0; d < ra.size(); ++d) {
      p.representation[d] = c * ra[d] + (1.0 - c) * rb[d];
    }
    out.push_back(std::move(p));
  }
  return out;
}

Prediction classify(const CaroModel& model, const AblationFlags& flags, const TokenWindow& window) {
  auto views = model.views(window, flags, /*training=*/false, nullptr);
  Var rep = model.aggregate(views, flags);
  Var logits = model.classifier_logits(rep);
  Var probs = softmax(logits);
  Prediction pred;
  pred.scores = probs->value;
  pred.label = 1;
  for (std::size_t i = 1; i < probs->value.size(); ++i) {
    if (probs->value[i] > probs->value[static_cast<std::size_t>(pred.label - 1)]) {
      pred.label = static_cast<int>(i) + 1;  // strict > keeps ties at the lowest index
    }
  }
  return pred;
}

Prediction classify(const CaroModel& model, const AblationFlags& flags,
                    const DialogueSample& sample) {
  return classify(model, flags, model.window_for(sample));
}

std::vector<double> compute_representation(const CaroModel& model, const AblationFlags& flags,
                                           const TokenWindow& window) {
  auto views = model.views(window, flags, /*training=*/false, nullptr);
  return model.aggregate(views, flags)->value;
}

MinedPool mine_ood(const CaroModel& model, const AblationFlags& flags,
                   const UnlabeledPool& unlabeled) {
  MinedPool pool;
  const int ood = model.config().num_classes;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const auto& sample = unlabeled.samples()[i];
    const Prediction pred = classify(model, flags, sample);
    if (pred.label == ood) {
      pool.members.push_back(
          {i, sample.id, pred.scores[static_cast<std::size_t>(pred.label - 1)]});
    }
  }
  return pool;
}

double ind_accuracy(const CaroModel& model, const AblationFlags& flags,
                    const std::vector<DialogueSample>& samples) {
  if (samples.empty()) return 0.0;
  long long correct = 0;
  for (const auto& s : samples) {
    if (classify(model, flags, s).label == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

struct CeItem {
  bool pseudo = false;
  std::size_t index = 0;  // into windows or pseudo list
  int label = 0;
};

std::vector<double> draw_noise(int dim, Rng& rng) {
  std::vector<double> eps(static_cast<std::size_t>(dim));
  for (double& e : eps) e = rng.normal();
  return eps;
}

}  // namespace

TrainResult run_training(const SplitBundle& bundle_in, const ModelConfig& model_cfg_in,
                         const TrainingConfig& cfg) {
  cfg.validate();
  if (bundle_in.d_ind.empty()) {
    throw std::invalid_argument("run_training: labeled in-domain pool is empty");
  }
  const SplitBundle bundle = cfg.max_context_turns >= 0
                                 ? truncate_contexts(bundle_in, cfg.max_context_turns)
                                 : bundle_in;
  const bool use_unlabeled = !cfg.ablation.no_unlabeled;
  const double lambda = cfg.ablation.no_ib ? 0.0 : cfg.lambda;

  // Vocabulary sources: the labeled pool, plus the unlabeled pool unless
  // stage two is ablated away (the model must then be independent of it).
  std::vector<const DialogueSample*> vocab_sources;
  for (const auto& s : bundle.d_ind) vocab_sources.push_back(&s);
  if (use_unlabeled) {
    for (const auto& s : bundle.d_unlabeled.samples()) vocab_sources.push_back(&s);
  }
  Vocabulary vocab = Vocabulary::build(vocab_sources);

  int k = 0;
  for (const auto& s : bundle.d_ind) k = std::max(k, s.label);
  ModelConfig model_cfg = model_cfg_in;
  model_cfg.num_classes = k + 1;

  Rng root(cfg.seed);
  Rng init_rng = root.fork("model-init");
  TrainResult result;
  result.model = CaroModel::init(model_cfg, std::move(vocab), init_rng);
  result.flags = cfg.ablation;
  CaroModel& model = result.model;

  AdamOptimizer optimizer({{"encoder", model.encoder_params(), cfg.lr_encoder,
                            cfg.weight_decay_encoder},
                           {"heads", model.head_params(), cfg.lr_heads, 0.0}});

  std::vector<TokenWindow> ind_windows;
  ind_windows.reserve(bundle.d_ind.size());
  for (const auto& s : bundle.d_ind) ind_windows.push_back(model.window_for(s));

  // ---- stage one: pseudo out-of-domain synthesis + cross-entropy pre-training
  // The pseudo pool is refreshed from current detached representations at the
  // start of every epoch: with a from-scratch encoder the representation
  // space moves quickly, and mixes taken only at initialization go stale
  // before the classifier can use them.
  int pseudo_count = cfg.pseudo_ood_count;
  if (pseudo_count == 0) {
    pseudo_count = static_cast<int>(bundle.d_ind.size()) / std::max(1, k);
  }
  std::vector<PseudoOODSample> pseudo;
  auto refresh_pseudo = [&](Rng& rng) {
    std::vector<std::vector<std::vector<double>>> reps_by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < bundle.d_ind.size(); ++i) {
      reps_by_class[static_cast<std::size_t>(bundle.d_ind[i].label - 1)].push_back(
          compute_representation(model, cfg.ablation, ind_windows[i]));
    }
    pseudo = synthesize_pseudo_ood(reps_by_class, pseudo_count, cfg.mix_lo, cfg.mix_hi, rng);
  };

  std::vector<CeItem> stage1_items;
  for (std::size_t i = 0; i < bundle.d_ind.size(); ++i) {
    stage1_items.push_back({false, i, bundle.d_ind[i].label});
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(pseudo_count); ++i) {
    stage1_items.push_back({true, i, k + 1});
  }

  long long step = 0;
  auto run_ce_ib_step = [&](const std::vector<CeItem>& items, std::size_t begin, std::size_t end,
                            const std::vector<TokenWindow>* ce_windows,
                            const std::vector<const TokenWindow*>* ib_batch, Rng& rng) {
    std::vector<Var> ce_losses;
    ce_losses.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const CeItem& item = items[i];
      Var rep;
      if (item.pseudo) {
        rep = make_const({model.config().embed_dim}, pseudo[item.index].representation);
      } else {
        auto views = model.views((*ce_windows)[item.index], cfg.ablation, /*training=*/true, &rng);
        rep = model.aggregate(views, cfg.ablation);
      }
      ce_losses.push_back(cross_entropy(model.classifier_logits(rep), item.label));
    }
    std::optional<IbLossResult> ib;
    if (ib_batch && ib_batch->size() >= 2) {
      std::vector<GaussianCode> z1, z2;
      z1.reserve(ib_batch->size());
      z2.reserve(ib_batch->size());
      for (const TokenWindow* w : *ib_batch) {
        auto views = model.views(*w, cfg.ablation, /*training=*/true, &rng);
        GaussianCode c1 = model.encode(views.v1, draw_noise(model.config().proj_dim, rng));
        GaussianCode c2 = model.encode(views.v2, draw_noise(model.config().proj_dim, rng));
        if (cfg.mi_on_means) {
          c1.sample = c1.mean;
          c2.sample = c2.mean;
        }
        z1.push_back(std::move(c1));
        z2.push_back(std::move(c2));
      }
      ib = ib_loss(z1, z2, model.critic());
    }
    CombinedLoss loss = combined_loss(ce_losses, ib, ib ? lambda : 0.0);
    backward(loss.total);
    optimizer.step();
    ++step;
    result.log.push_back({step, loss.breakdown.ce_term, loss.breakdown.ib_term,
                          loss.breakdown.mi_estimate, loss.breakdown.skl_term,
                          loss.breakdown.total});
  };

  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    Rng epoch_rng = root.fork("stage1-epoch", static_cast<std::uint64_t>(epoch));
    Rng mix_rng = root.fork("mixup", static_cast<std::uint64_t>(epoch));
    refresh_pseudo(mix_rng);
    std::vector<CeItem> items = stage1_items;
    shuffle(items, epoch_rng);
    for (std::size_t b = 0; b < items.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(items.size(), b + static_cast<std::size_t>(cfg.batch_size));
      run_ce_ib_step(items, b, e, &ind_windows, nullptr, epoch_rng);
    }
    ++result.stage1_epochs_run;
  }

  if (!use_unlabeled) return result;

  // ---- stage two: mine from the unlabeled pool, then joint training
  result.mined = mine_ood(model, cfg.ablation, bundle.d_unlabeled);

  std::vector<TokenWindow> unl_windows;
  unl_windows.reserve(bundle.d_unlabeled.size());
  for (const auto& s : bundle.d_unlabeled.samples()) unl_windows.push_back(model.window_for(s));

  std::vector<TokenWindow> mined_windows;
  mined_windows.reserve(result.mined.members.size());
  for (const auto& m : result.mined.members) {
    mined_windows.push_back(unl_windows[m.unlabeled_index]);
  }

  std::vector<CeItem> stage2_items;
  std::vector<TokenWindow> stage2_windows = ind_windows;
  for (std::size_t i = 0; i < bundle.d_ind.size(); ++i) {
    stage2_items.push_back({false, i, bundle.d_ind[i].label});
  }
  for (const auto& w : mined_windows) {
    stage2_items.push_back({false, stage2_windows.size(), k + 1});
    stage2_windows.push_back(w);
  }

  const bool ib_active = lambda > 0.0 && bundle.d_unlabeled.size() >= 2;
  std::vector<std::size_t> ib_order(bundle.d_unlabeled.size());
  for (std::size_t i = 0; i < ib_order.size(); ++i) ib_order[i] = i;
  std::size_t ib_cursor = 0;
  Rng ib_shuffle_rng = root.fork("ib-cycle");
  if (ib_active) shuffle(ib_order, ib_shuffle_rng);

  auto next_ib_batch = [&](std::size_t size) {
    std::vector<const TokenWindow*> batch;
    batch.reserve(size);
    for (std::size_t j = 0; j < size; ++j) {
      if (ib_cursor == ib_order.size()) {
        shuffle(ib_order, ib_shuffle_rng);
        ib_cursor = 0;
      }
      batch.push_back(&unl_windows[ib_order[ib_cursor++]]);
    }
    return batch;
  };

  if (ib_active && cfg.critic_warmup_steps > 0) {
    AdamOptimizer critic_opt({{"critic", model.critic().params(), cfg.lr_heads, 0.0}});
    Rng warm_rng = root.fork("critic-warmup");
    for (int step_i = 0; step_i < cfg.critic_warmup_steps; ++step_i) {
      const auto batch = next_ib_batch(static_cast<std::size_t>(cfg.batch_size));
      std::vector<GaussianCode> z1, z2;
      for (const TokenWindow* w : batch) {
        auto views = model.views(*w, cfg.ablation, /*training=*/true, &warm_rng);
        GaussianCode c1 = model.encode(views.v1, draw_noise(model.config().proj_dim, warm_rng));
        GaussianCode c2 = model.encode(views.v2, draw_noise(model.config().proj_dim, warm_rng));
        if (cfg.mi_on_means) {
          c1.sample = c1.mean;
          c2.sample = c2.mean;
        }
        z1.push_back(std::move(c1));
        z2.push_back(std::move(c2));
      }
      JsdMiResult jsd = jsd_mi_lower_bound(z1, z2, model.critic());
      backward(scale(jsd.bound, -1.0));  // ascend the bound, critic only
      critic_opt.step();
    }
    clear_grads(model.all_params());  // drop gradients that leaked to frozen parts
  }

  double best_acc = -1.0;
  int stale = 0;
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    Rng epoch_rng = root.fork("stage2-epoch", static_cast<std::uint64_t>(epoch));
    std::vector<CeItem> items = stage2_items;
    shuffle(items, epoch_rng);
    for (std::size_t b = 0; b < items.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(items.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const TokenWindow*> ib_batch;
      if (ib_active) ib_batch = next_ib_batch(static_cast<std::size_t>(cfg.batch_size));
      run_ce_ib_step(items, b, e, &stage2_windows, ib_active ? &ib_batch : nullptr, epoch_rng);
    }
    ++result.stage2_epochs_run;

    const double acc = ind_accuracy(model, cfg.ablation, bundle.d_valid);
    if (acc > best_acc + 1e-12) {
      best_acc = acc;
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;  // validation accuracy plateau
    }
  }
  result.best_valid_accuracy = std::max(best_acc, 0.0);
  return result;
}

void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_training_log: cannot open " + path);
  out << "step\tce\tib\tmi\tskl\ttotal\n";
  char buf[192];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.9f\t%.9f\t%.9f\t%.9f\t%.9f\n", row.step, row.ce_term,
                  row.ib_term, row.mi_estimate, row.skl_term, row.total);
    out << buf;
  }
}

}  // namespace caro
