// Command-line front end: data synthesis, training, evaluation, parameter
// sweeps and gradient verification, all driven by a flat key=value config.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"

#include "caro/config.hpp"
#include "caro/data.hpp"
#include "caro/fragments.hpp"
#include "caro/metrics.hpp"
#include "caro/model.hpp"
#include "caro/pipeline.hpp"

namespace fs = std::filesystem;
using namespace caro;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;  // -1 = keep config value
  bool force = false;
  std::vector<std::string> overrides;
};

RunConfig build_config(const GlobalArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg.apply_file(args.config_path);
  for (const auto& kv : args.overrides) cfg.apply_override(kv);
  if (args.seed >= 0) cfg.apply_override("seed", std::to_string(args.seed));
  return cfg;
}

std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm_buf{};
  localtime_r(&t, &tm_buf);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_buf);
  return buf;
}

fs::path resolve_run_dir(const GlobalArgs& args, const RunConfig& cfg) {
  if (!args.out_dir.empty()) return fs::path(args.out_dir);
  const char* root_env = std::getenv("CARO_OUT_ROOT");
  const fs::path root = root_env ? fs::path(root_env) : fs::path("runs");
  return root / (timestamp_now() + "-" + cfg.content_hash());
}

struct DataContext {
  Corpus corpus;
  SplitBundle bundle;
  int k = 0;
  std::vector<std::string> warnings;
};

DataContext resolve_data(const RunConfig& cfg) {
  DataContext ctx;
  const std::string corpus_path = cfg.get_string("corpus");
  if (corpus_path.empty()) {
    SynthResult synth = generate_synthetic(cfg.synth_spec(), cfg.seed());
    ctx.corpus = std::move(synth.corpus);
    ctx.bundle = std::move(synth.bundle);
  } else {
    LoadReport report;
    ctx.corpus = load_star_format(corpus_path, cfg.load_options(), &report);
    for (const auto& w : report.warnings) ctx.warnings.push_back(w);
    const std::string manifest = cfg.get_string("manifest");
    if (!manifest.empty()) {
      ctx.bundle = bundle_from_manifest(ctx.corpus, manifest);
    } else {
      ctx.bundle = make_splits(ctx.corpus, cfg.get_double("ind_hidden_fraction"), cfg.seed(),
                               &ctx.warnings);
    }
  }
  const double fraction = cfg.get_double("unlabeled_fraction");
  if (fraction < 1.0) {
    ctx.bundle = downsample_unlabeled(ctx.bundle, fraction, cfg.seed());
  }
  ctx.k = ctx.corpus.num_ind_classes();
  return ctx;
}

void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

struct EvalScores {
  double f1_all = 0.0;
  double f1_ood = 0.0;
  double f1_ind = 0.0;
};

EvalScores train_and_score(const RunConfig& cfg) {
  DataContext ctx = resolve_data(cfg);
  TrainResult result = run_training(ctx.bundle, cfg.model_config(), cfg.training_config());
  const ScoreReport report =
      evaluate_split(result.model, result.flags, ctx.bundle.d_test, ctx.k);
  return {report.f1_all, report.f1_ood, report.f1_ind};
}

int cmd_synth_data(const GlobalArgs& args) {
  RunConfig cfg = build_config(args);
  const fs::path dir = resolve_run_dir(args, cfg);
  if (fs::exists(dir) && !args.force) {
    std::cerr << "error: output directory '" << dir.string()
              << "' already exists; pass --force to overwrite\n";
    return 1;
  }
  ensure_dir(dir);
  SynthResult synth = generate_synthetic(cfg.synth_spec(), cfg.seed());
  save_corpus(synth.corpus, (dir / "corpus.jsonl").string());
  write_split_manifest(synth.bundle, (dir / "split_manifest.tsv").string());

  std::ofstream rep(dir / "generation_report.txt");
  rep << "samples\t" << synth.corpus.samples.size() << "\n";
  rep << "ind_intents\t" << synth.corpus.ind_intents.size() << "\n";
  std::map<int, long long> class_counts;
  for (const auto& s : synth.corpus.samples) ++class_counts[s.label];
  for (const auto& [label, count] : class_counts) {
    rep << "class_" << label << "\t" << count << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", synth.mean_context_turns);
  rep << "mean_context_turns\t" << buf << "\n";
  rep << "d_ind\t" << synth.bundle.d_ind.size() << "\n";
  rep << "d_unlabeled\t" << synth.bundle.d_unlabeled.size() << "\n";
  rep << "d_valid\t" << synth.bundle.d_valid.size() << "\n";
  rep << "d_test\t" << synth.bundle.d_test.size() << "\n";
  std::cout << "wrote corpus, split manifest and generation report to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const GlobalArgs& args) {
  RunConfig cfg = build_config(args);

  // enumerate configuration problems before any training starts
  std::vector<std::string> problems;
  try {
    ModelConfig mc = cfg.model_config();
    mc.num_classes = 2;  // real value comes from the data later
    mc.validate();
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  try {
    cfg.training_config();
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  if (cfg.get_string("corpus").empty()) {
    try {
      cfg.synth_spec();
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::cerr << "configuration invalid:\n";
    for (const auto& p : problems) std::cerr << "  - " << p << "\n";
    return 1;
  }

  const fs::path dir = resolve_run_dir(args, cfg);
  ensure_dir(dir);
  DataContext ctx = resolve_data(cfg);
  for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << "\n";

  TrainResult result = run_training(ctx.bundle, cfg.model_config(), cfg.training_config());

  Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.ind_intents = ctx.corpus.ind_intents;
  ckpt.config_echo = cfg.echo();
  ckpt.seed = cfg.seed();
  ckpt.flags = result.flags;
  save_checkpoint(ckpt, (dir / "checkpoint.json").string());
  write_training_log(result.log, (dir / "training_log.tsv").string());
  result.model.vocab().save((dir / "vocab.txt").string());
  write_split_manifest(ctx.bundle, (dir / "split_manifest.tsv").string());
  {
    std::ofstream mined(dir / "mined_pool.tsv");
    mined << "count\t" << result.mined.members.size() << "\n";
    mined << "id\tmax_softmax\n";
    char buf[64];
    for (const auto& m : result.mined.members) {
      std::snprintf(buf, sizeof(buf), "%.9f", m.max_softmax);
      mined << m.id << "\t" << buf << "\n";
    }
  }
  std::cout << "trained " << result.stage1_epochs_run << "+" << result.stage2_epochs_run
            << " epochs (ablation: " << result.flags.describe() << "), mined "
            << result.mined.members.size() << " samples, best validation accuracy "
            << result.best_valid_accuracy << "\n";
  std::cout << "artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const GlobalArgs& args, const std::string& checkpoint_path,
                 const std::string& split, bool dump_alpha, bool dump_beta, bool info_plane_flag,
                 int max_context_turns) {
  RunConfig cfg = build_config(args);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  DataContext ctx = resolve_data(cfg);
  if (ctx.corpus.ind_intents != ckpt.ind_intents) {
    std::cerr << "error: checkpoint intent inventory does not match the data ("
              << ckpt.ind_intents.size() << " vs " << ctx.corpus.ind_intents.size()
              << " in-domain intents)\n";
    return 1;
  }
  const fs::path dir = resolve_run_dir(args, cfg);
  ensure_dir(dir);

  SplitBundle bundle = max_context_turns >= 0
                           ? truncate_contexts(ctx.bundle, max_context_turns)
                           : ctx.bundle;
  const std::vector<DialogueSample>* samples = nullptr;
  if (split == "test") {
    samples = &bundle.d_test;
  } else if (split == "valid") {
    samples = &bundle.d_valid;
  } else if (split == "train") {
    samples = &bundle.d_ind;
  } else {
    std::cerr << "error: unknown split '" << split << "' (expected test, valid or train)\n";
    return 1;
  }
  if (samples->empty()) {
    std::cerr << "error: split '" << split << "' is empty\n";
    return 1;
  }

  const ScoreReport report = evaluate_split(ckpt.model, ckpt.flags, *samples, ctx.k);
  write_score_report(report, (dir / "score_report.tsv").string());
  write_score_table(report, (dir / "score_table.txt").string());
  char buf[160];
  std::snprintf(buf, sizeof(buf), "F1-All %.4f  F1-OOD %.4f  F1-IND %.4f over %lld samples\n",
                report.f1_all, report.f1_ood, report.f1_ind, report.sample_count);
  std::cout << buf;

  if (dump_alpha) {
    write_alpha_dump(dump_alpha_weights(ckpt.model, ckpt.flags, *samples),
                     (dir / "alpha_weights.tsv").string());
  }
  if (dump_beta) {
    write_beta_dump(dump_beta_weights(ckpt.model, ckpt.flags, *samples),
                    (dir / "beta_weights.tsv").string());
  }
  if (info_plane_flag) {
    InfoPlaneOptions options;
    options.critic_hidden = static_cast<int>(cfg.get_int("eval.info_hidden"));
    options.train_steps = static_cast<int>(cfg.get_int("eval.info_steps"));
    options.seed = cfg.seed();
    write_info_plane(information_plane(ckpt.model, ckpt.flags, *samples, options),
                     (dir / "info_plane.tsv").string());
  }
  std::cout << "reports in " << dir.string() << "\n";
  return 0;
}

int cmd_sweep(const GlobalArgs& args, const std::string& parameter,
              const std::string& values_csv) {
  RunConfig base = build_config(args);
  std::string key;
  if (parameter == "lambda") {
    key = "train.lambda";
  } else if (parameter == "unlabeled_fraction") {
    key = "unlabeled_fraction";
  } else if (parameter == "max_context_turns") {
    key = "train.max_context_turns";
  } else {
    std::cerr << "error: parameter '" << parameter
              << "' is not sweepable (expected lambda, unlabeled_fraction or max_context_turns)\n";
    return 1;
  }
  std::vector<std::string> values;
  {
    std::istringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) values.push_back(item);
    }
  }
  if (values.empty()) {
    std::cerr << "error: no sweep values given\n";
    return 1;
  }
  const fs::path dir = resolve_run_dir(args, base);
  ensure_dir(dir);
  const int n_seeds = static_cast<int>(base.get_int("sweep.seeds"));
  const std::uint64_t base_seed = base.seed();

  std::ofstream detail(dir / "sweep_detail.tsv");
  detail << "parameter\tvalue\tseed\tf1_all\tf1_ood\tf1_ind\n";
  std::ofstream table(dir / "sweep.tsv");
  table << "parameter\tvalue\tf1_all\tf1_ood\tf1_ind\n";
  char buf[224];
  for (const auto& value : values) {
    EvalScores mean;
    for (int si = 0; si < n_seeds; ++si) {
      RunConfig cfg = build_config(args);
      cfg.apply_override(key, value);
      cfg.apply_override("seed", std::to_string(base_seed + static_cast<std::uint64_t>(si)));
      const EvalScores s = train_and_score(cfg);
      std::snprintf(buf, sizeof(buf), "%s\t%s\t%llu\t%.9f\t%.9f\t%.9f\n", parameter.c_str(),
                    value.c_str(),
                    static_cast<unsigned long long>(base_seed + static_cast<std::uint64_t>(si)),
                    s.f1_all, s.f1_ood, s.f1_ind);
      detail << buf;
      detail.flush();
      mean.f1_all += s.f1_all / n_seeds;
      mean.f1_ood += s.f1_ood / n_seeds;
      mean.f1_ind += s.f1_ind / n_seeds;
    }
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%.9f\t%.9f\t%.9f\n", parameter.c_str(), value.c_str(),
                  mean.f1_all, mean.f1_ood, mean.f1_ind);
    table << buf;
    table.flush();
    std::cout << parameter << "=" << value << " done\n";
  }
  std::cout << "sweep table in " << (dir / "sweep.tsv").string() << "\n";
  return 0;
}

int cmd_grad_check(const GlobalArgs& args, double tolerance) {
  RunConfig cfg = build_config(args);
  const auto fragments = standard_fragments(cfg.seed());
  bool all_passed = true;
  for (const auto& f : fragments) {
    const GradCheckReport report = grad_check(f, tolerance);
    double worst = 0.0;
    for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_error);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-18s max rel err %.3e  %s\n", f.name.c_str(), worst,
                  report.all_passed ? "PASS" : "FAIL");
    std::cout << buf;
    all_passed = all_passed && report.all_passed;
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-aware out-of-domain intent detection"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalArgs args;
  app.add_option("--config", args.config_path, "key=value config file");
  app.add_option("--seed", args.seed, "seed override");
  app.add_option("--out", args.out_dir, "run directory (default: $CARO_OUT_ROOT/<stamp>-<hash>)");
  app.add_flag("--force", args.force, "overwrite existing outputs");
  app.add_option("--set", args.overrides, "config override key=value (repeatable)");

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic dialogue corpus");

  auto* train = app.add_subcommand("train", "run the two-stage training");
  std::string train_lambda, train_max_turns;
  std::vector<std::string> train_ablation;
  train->add_option("--lambda", train_lambda, "bottleneck loss weight");
  train->add_option("--ablation", train_ablation,
                    "no-unlabeled | no-multiview | no-gate-aggregation | no-ib (repeatable)");
  train->add_option("--max-context-turns", train_max_turns, "truncate histories before training");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  std::string ckpt_path, split = "test";
  bool dump_alpha = false, dump_beta = false, info_plane_flag = false;
  int eval_max_turns = -1;
  evaluate->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  evaluate->add_option("--split", split, "test | valid | train");
  evaluate->add_flag("--dump-alpha", dump_alpha, "write per-token weight tables");
  evaluate->add_flag("--dump-beta", dump_beta, "write per-dimension gate weight table");
  evaluate->add_flag("--info-plane", info_plane_flag, "estimate information-plane coordinates");
  evaluate->add_option("--max-context-turns", eval_max_turns, "truncate histories at evaluation");

  auto* sweep = app.add_subcommand("sweep", "train+evaluate across parameter values");
  std::string sweep_parameter, sweep_values;
  sweep->add_option("--parameter", sweep_parameter, "lambda | unlabeled_fraction | max_context_turns")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();

  auto* gradcheck_cmd = app.add_subcommand("grad-check", "finite-difference gradient verification");
  double tolerance = 1e-3;
  gradcheck_cmd->add_option("--tolerance", tolerance, "max relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_data(args);
    if (train->parsed()) {
      if (!train_lambda.empty()) args.overrides.push_back("train.lambda=" + train_lambda);
      if (!train_max_turns.empty()) {
        args.overrides.push_back("train.max_context_turns=" + train_max_turns);
      }
      if (!train_ablation.empty()) {
        std::string joined;
        for (const auto& a : train_ablation) {
          if (!joined.empty()) joined += ",";
          joined += a;
        }
        args.overrides.push_back("ablation=" + joined);
      }
      return cmd_train(args);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(args, ckpt_path, split, dump_alpha, dump_beta, info_plane_flag,
                          eval_max_turns);
    }
    if (sweep->parsed()) return cmd_sweep(args, sweep_parameter, sweep_values);
    if (gradcheck_cmd->parsed()) return cmd_grad_check(args, tolerance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
