#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "caro/metrics.hpp"
#include "caro/model.hpp"
#include "caro/pipeline.hpp"

using namespace caro;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

SynthSpec tiny_corpus_spec() {
  SynthSpec spec;
  spec.num_intents = 3;
  spec.ind_train = 120;
  spec.unlabeled = 80;
  spec.valid = 30;
  spec.test = 60;
  spec.mean_history_turns = 3.0;
  spec.noise_turns = 1;
  return spec;
}

ModelConfig tiny_model_cfg() {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.max_seq_len = 32;
  cfg.r1 = 4;
  cfg.r2 = 8;
  cfg.proj_dim = 8;
  cfg.trunk_hidden = 16;
  cfg.critic_hidden = 16;
  cfg.head_hidden = 16;
  return cfg;
}

TrainingConfig tiny_train_cfg() {
  TrainingConfig cfg;
  cfg.stage1_epochs = 6;
  cfg.stage2_epochs = 4;
  cfg.batch_size = 16;
  cfg.lr_encoder = 5e-3;
  cfg.lr_heads = 5e-3;
  cfg.seed = 21;
  return cfg;
}

bool params_equal(const CaroModel& a, const CaroModel& b) {
  const auto pa = a.named_params();
  const auto pb = b.named_params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first) return false;
    if (pa[i].second->value != pb[i].second->value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pseudo samples interpolate between two separated clusters") {
  Rng rng(1);
  const int m = 4;
  std::vector<std::vector<std::vector<double>>> reps(2);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(m, 0.0), b(m, 0.0);
    a[0] = 0.0 + 0.01 * rng.normal();
    b[0] = 10.0 + 0.01 * rng.normal();
    reps[0].push_back(a);
    reps[1].push_back(b);
  }
  const auto pseudo = synthesize_pseudo_ood(reps, 1000, 0.2, 0.8, rng);
  REQUIRE(pseudo.size() == 1000);
  for (const auto& p : pseudo) {
    CHECK(p.representation[0] >= 2.0 - 0.1);
    CHECK(p.representation[0] <= 8.0 + 0.1);
  }
}

TEST_CASE("pseudo samples stay inside the coordinatewise interval of their sources") {
  Rng rng(2);
  std::vector<std::vector<std::vector<double>>> reps(3);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10; ++i) {
      std::vector<double> v(5);
      for (double& x : v) x = rng.uniform(-2.0, 2.0);
      reps[static_cast<std::size_t>(c)].push_back(v);
    }
  }
  // global bounds per coordinate bound every convex combination
  std::vector<double> lo(5, 1e9), hi(5, -1e9);
  for (const auto& pool : reps) {
    for (const auto& v : pool) {
      for (int j = 0; j < 5; ++j) {
        lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], v[static_cast<std::size_t>(j)]);
        hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], v[static_cast<std::size_t>(j)]);
      }
    }
  }
  for (const auto& p : synthesize_pseudo_ood(reps, 200, 0.2, 0.8, rng)) {
    for (int j = 0; j < 5; ++j) {
      CHECK(p.representation[static_cast<std::size_t>(j)] >= lo[static_cast<std::size_t>(j)] - 1e-12);
      CHECK(p.representation[static_cast<std::size_t>(j)] <= hi[static_cast<std::size_t>(j)] + 1e-12);
    }
  }
}

TEST_CASE("pseudo synthesis requires two populated classes") {
  Rng rng(3);
  std::vector<std::vector<std::vector<double>>> reps(3);
  reps[1].push_back({1.0, 2.0});
  CHECK_THROWS_AS(synthesize_pseudo_ood(reps, 10, 0.2, 0.8, rng), std::invalid_argument);
}

TEST_CASE("tie-breaking on equal logits picks the lowest class index") {
  // an untrained model with zeroed classifier produces identical logits
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 4);
  std::vector<const DialogueSample*> sources;
  for (const auto& s : data.bundle.d_ind) sources.push_back(&s);
  Vocabulary vocab = Vocabulary::build(sources);
  ModelConfig mcfg = tiny_model_cfg();
  mcfg.num_classes = 4;
  Rng rng(5);
  CaroModel model = CaroModel::init(mcfg, vocab, rng);
  for (const auto& [name, p] : model.named_params()) {
    if (name.rfind("cls.", 0) == 0) std::fill(p->value.begin(), p->value.end(), 0.0);
  }
  AblationFlags flags;
  const Prediction pred = classify(model, flags, data.bundle.d_ind.front());
  CHECK(pred.label == 1);
  for (const double s : pred.scores) CHECK(s == doctest::Approx(0.25));
}

TEST_CASE("mining collects exactly the samples the classifier rejects") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 6);
  std::vector<const DialogueSample*> sources;
  for (const auto& s : data.bundle.d_ind) sources.push_back(&s);
  Vocabulary vocab = Vocabulary::build(sources);
  ModelConfig mcfg = tiny_model_cfg();
  mcfg.num_classes = 4;
  Rng rng(7);
  CaroModel model = CaroModel::init(mcfg, vocab, rng);
  AblationFlags flags;

  SUBCASE("a randomly initialized model matches an argmax oracle") {
    const MinedPool pool = mine_ood(model, flags, data.bundle.d_unlabeled);
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < data.bundle.d_unlabeled.size(); ++i) {
      const Prediction p = classify(model, flags, data.bundle.d_unlabeled.samples()[i]);
      int best = 0;
      for (int c = 1; c < 4; ++c) {
        if (p.scores[static_cast<std::size_t>(c)] > p.scores[static_cast<std::size_t>(best)]) best = c;
      }
      if (best == 3) expected.push_back(i);
    }
    REQUIRE(pool.members.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(pool.members[i].unlabeled_index == expected[i]);
    }
  }

  SUBCASE("a constant out-of-domain predictor mines the whole pool") {
    for (const auto& [name, p] : model.named_params()) {
      if (name == "cls.b2") {
        std::fill(p->value.begin(), p->value.end(), 0.0);
        p->value.back() = 50.0;
      } else if (name.rfind("cls.", 0) == 0) {
        std::fill(p->value.begin(), p->value.end(), 0.0);
      }
    }
    const MinedPool pool = mine_ood(model, flags, data.bundle.d_unlabeled);
    CHECK(pool.members.size() == data.bundle.d_unlabeled.size());
  }

  SUBCASE("a predictor that never rejects mines nothing") {
    for (const auto& [name, p] : model.named_params()) {
      if (name == "cls.b2") {
        std::fill(p->value.begin(), p->value.end(), 0.0);
        p->value.front() = 50.0;
      } else if (name.rfind("cls.", 0) == 0) {
        std::fill(p->value.begin(), p->value.end(), 0.0);
      }
    }
    const MinedPool pool = mine_ood(model, flags, data.bundle.d_unlabeled);
    CHECK(pool.members.empty());
  }

  SUBCASE("mining twice on a frozen model is identical") {
    const MinedPool a = mine_ood(model, flags, data.bundle.d_unlabeled);
    const MinedPool b = mine_ood(model, flags, data.bundle.d_unlabeled);
    REQUIRE(a.members.size() == b.members.size());
    for (std::size_t i = 0; i < a.members.size(); ++i) {
      CHECK(a.members[i].unlabeled_index == b.members[i].unlabeled_index);
      CHECK(a.members[i].max_softmax == b.members[i].max_softmax);
    }
  }
}

TEST_CASE("zero training epochs leave the parameters at initialization") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 8);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 0;
  tcfg.stage2_epochs = 0;
  tcfg.ablation.no_unlabeled = true;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);

  // replicate the initialization path
  std::vector<const DialogueSample*> sources;
  for (const auto& s : data.bundle.d_ind) sources.push_back(&s);
  Vocabulary vocab = Vocabulary::build(sources);
  ModelConfig mcfg = tiny_model_cfg();
  mcfg.num_classes = 4;
  Rng root(tcfg.seed);
  Rng init = root.fork("model-init");
  CaroModel fresh = CaroModel::init(mcfg, vocab, init);
  CHECK(params_equal(result.model, fresh));
  CHECK(result.log.empty());
}

TEST_CASE("stage-one training reaches high accuracy on separable synthetic intents") {
  SynthSpec spec = tiny_corpus_spec();
  spec.noise_turns = 0;
  spec.context_dependent_rate = 0.0;  // every current utterance names its intent
  SynthResult data = generate_synthetic(spec, 9);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.ablation.no_unlabeled = true;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);
  const double acc = ind_accuracy(result.model, result.flags, data.bundle.d_valid);
  CHECK(acc >= 0.95);
}

TEST_CASE("the training loss trends downward over the first epochs") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 10);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 5;
  tcfg.ablation.no_unlabeled = true;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);
  // epoch-mean cross entropy, allowing one non-monotone step
  const std::size_t steps_per_epoch = result.log.size() / 5;
  std::vector<double> epoch_means;
  for (int e = 0; e < 5; ++e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < steps_per_epoch; ++i) {
      acc += result.log[e * steps_per_epoch + i].ce_term;
    }
    epoch_means.push_back(acc / static_cast<double>(steps_per_epoch));
  }
  int violations = 0;
  for (std::size_t e = 1; e < epoch_means.size(); ++e) {
    if (epoch_means[e] > epoch_means[e - 1]) ++violations;
  }
  CHECK(violations <= 1);
  CHECK(epoch_means.back() < epoch_means.front());
}

TEST_CASE("the unlabeled ablation ignores the unlabeled pool entirely") {
  SynthResult data_a = generate_synthetic(tiny_corpus_spec(), 11);
  // same labeled pools, different unlabeled content
  SynthSpec other = tiny_corpus_spec();
  other.unlabeled_ood_fraction = 0.9;
  SynthResult data_b = generate_synthetic(other, 999);
  SplitBundle hybrid;
  hybrid.d_ind = data_a.bundle.d_ind;
  hybrid.d_valid = data_a.bundle.d_valid;
  hybrid.d_test = data_a.bundle.d_test;
  for (std::size_t i = 0; i < data_b.bundle.d_unlabeled.size(); ++i) {
    hybrid.d_unlabeled.add(data_b.bundle.d_unlabeled.samples()[i],
                           data_b.bundle.d_unlabeled.analysis_labels()[i]);
  }
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 3;
  tcfg.ablation.no_unlabeled = true;
  const TrainResult a = run_training(data_a.bundle, tiny_model_cfg(), tcfg);
  const TrainResult b = run_training(hybrid, tiny_model_cfg(), tcfg);
  CHECK(params_equal(a.model, b.model));
  CHECK(a.mined.members.empty());
  CHECK(b.mined.members.empty());
  for (const auto& row : a.log) {
    CHECK(row.ib_term == 0.0);
    CHECK(row.mi_estimate == 0.0);
    CHECK(row.skl_term == 0.0);
  }
}

TEST_CASE("training is deterministic given config and seed") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 12);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 2;
  tcfg.stage2_epochs = 2;
  const TrainResult a = run_training(data.bundle, tiny_model_cfg(), tcfg);
  const TrainResult b = run_training(data.bundle, tiny_model_cfg(), tcfg);
  CHECK(params_equal(a.model, b.model));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].total == b.log[i].total);
  }
  const ScoreReport ra = evaluate_split(a.model, a.flags, data.bundle.d_test, 3);
  const ScoreReport rb = evaluate_split(b.model, b.flags, data.bundle.d_test, 3);
  CHECK(ra.f1_all == rb.f1_all);
  CHECK(ra.f1_ood == rb.f1_ood);
}

TEST_CASE("stage two leaves the labeled pool untouched and logs bottleneck terms") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 13);
  const std::vector<int> labels_before = [&data]() {
    std::vector<int> out;
    for (const auto& s : data.bundle.d_ind) out.push_back(s.label);
    return out;
  }();
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 2;
  tcfg.stage2_epochs = 2;
  tcfg.patience = 10;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);
  std::vector<int> labels_after;
  for (const auto& s : data.bundle.d_ind) labels_after.push_back(s.label);
  CHECK(labels_before == labels_after);
  CHECK(result.stage2_epochs_run == 2);
  bool any_ib = false;
  for (const auto& row : result.log) {
    if (row.skl_term != 0.0 || row.mi_estimate != 0.0) any_ib = true;
  }
  CHECK(any_ib);
}

TEST_CASE("disabling the bottleneck zeroes every bottleneck log entry") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 14);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 1;
  tcfg.stage2_epochs = 1;
  tcfg.ablation.no_ib = true;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);
  for (const auto& row : result.log) {
    CHECK(row.ib_term == 0.0);
    CHECK(row.mi_estimate == 0.0);
    CHECK(row.skl_term == 0.0);
  }
}

TEST_CASE("ablated view construction still trains and evaluates deterministically") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 15);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 2;
  tcfg.stage2_epochs = 1;
  tcfg.ablation.no_multiview = true;
  const TrainResult a = run_training(data.bundle, tiny_model_cfg(), tcfg);
  const Prediction p1 = classify(a.model, a.flags, data.bundle.d_test.front());
  const Prediction p2 = classify(a.model, a.flags, data.bundle.d_test.front());
  CHECK(p1.label == p2.label);
  CHECK(p1.scores == p2.scores);

  tcfg.ablation = AblationFlags{};
  tcfg.ablation.no_gate = true;
  const TrainResult b = run_training(data.bundle, tiny_model_cfg(), tcfg);
  CHECK(classify(b.model, b.flags, data.bundle.d_test.front()).label >= 1);
}

TEST_CASE("checkpoints round-trip bit exactly") {
  SynthResult data = generate_synthetic(tiny_corpus_spec(), 16);
  TrainingConfig tcfg = tiny_train_cfg();
  tcfg.stage1_epochs = 1;
  tcfg.stage2_epochs = 1;
  const TrainResult result = run_training(data.bundle, tiny_model_cfg(), tcfg);

  Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.ind_intents = data.corpus.ind_intents;
  ckpt.config_echo = {{"train.lambda", "0.5"}, {"seed", "21"}};
  ckpt.seed = 21;
  ckpt.flags = result.flags;
  const std::string path = temp_path("caro_ckpt.json");
  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(params_equal(ckpt.model, loaded.model));
  CHECK(loaded.ind_intents == ckpt.ind_intents);
  CHECK(loaded.seed == 21);
  CHECK(loaded.config_echo.at("train.lambda") == "0.5");

  // saving the loaded checkpoint again is byte-identical
  const std::string path2 = temp_path("caro_ckpt2.json");
  save_checkpoint(loaded, path2);
  std::ifstream f1(path), f2(path2);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
  // evaluation through the loaded model matches the live one
  const ScoreReport live = evaluate_split(result.model, result.flags, data.bundle.d_test, 3);
  const ScoreReport restored = evaluate_split(loaded.model, loaded.flags, data.bundle.d_test, 3);
  CHECK(live.f1_all == restored.f1_all);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("the training log file has the fixed column order") {
  std::vector<TrainLogRow> log = {{1, 0.5, 0.25, -1.0, 0.1, 0.625}};
  const std::string path = temp_path("caro_train_log.tsv");
  write_training_log(log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step\tce\tib\tmi\tskl\ttotal");
  std::string row;
  std::getline(in, row);
  CHECK(row.rfind("1\t0.5", 0) == 0);
  std::remove(path.c_str());
}
