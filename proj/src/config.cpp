#include "caro/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace caro {

namespace {

struct KeyDoc {
  const char* key;
  const char* def;
};

// Every configurable key and its default.
const std::vector<std::pair<std::string, std::string>> kDefaults = {
    {"seed", "1"},
    {"corpus", ""},           // path to a line-delimited corpus; empty = synthesize
    {"manifest", ""},         // optional split manifest accompanying the corpus
    {"ood_intent_names", "out_of_scope,custom,ambiguous"},
    {"greeting_filter", ""},  // comma-separated utterances to drop
    {"ind_hidden_fraction", "0.30"},
    {"unlabeled_fraction", "1.0"},
    {"synth.num_intents", "5"},
    {"synth.templates_per_intent", "6"},
    {"synth.keywords_per_intent", "6"},
    {"synth.ood_topics_unlabeled", "3"},
    {"synth.ood_topics_test", "3"},
    {"synth.filler_vocab", "40"},
    {"synth.noise_vocab", "30"},
    {"synth.mean_history_turns", "6.0"},
    {"synth.noise_turns", "2"},
    {"synth.context_keyword_rate", "0.8"},
    {"synth.context_dependent_rate", "0.02"},
    {"synth.distractor_rate", "0.5"},
    {"synth.ind_train", "2000"},
    {"synth.unlabeled", "1000"},
    {"synth.valid", "500"},
    {"synth.test", "500"},
    {"synth.unlabeled_ood_fraction", "0.30"},
    {"synth.test_ood_fraction", "0.30"},
    {"synth.test_unseen_topic_share", "0.25"},
    {"model.embed_dim", "64"},
    {"model.max_seq_len", "256"},
    {"model.r1", "16"},
    {"model.r2", "48"},
    {"model.proj_dim", "64"},
    {"model.trunk_hidden", "64"},
    {"model.critic_hidden", "64"},
    {"model.head_hidden", "64"},
    {"model.view_dropout", "0.1"},
    {"train.lambda", "0.5"},
    {"train.stage1_epochs", "15"},
    {"train.stage2_epochs", "10"},
    {"train.batch_size", "25"},
    {"train.lr_encoder", "1e-5"},
    {"train.lr_heads", "1e-4"},
    {"train.weight_decay_encoder", "0.01"},
    {"train.mix_lo", "0.2"},
    {"train.mix_hi", "0.8"},
    {"train.pseudo_ood_count", "0"},  // 0 = mean per-class in-domain count
    {"train.patience", "3"},
    {"train.max_context_turns", "-1"},
    {"train.critic_warmup_steps", "0"},
    {"train.mi_on_means", "true"},
    {"ablation", ""},  // comma list: no-unlabeled,no-multiview,no-gate-aggregation,no-ib
    {"eval.split", "test"},
    {"eval.dump_alpha", "false"},
    {"eval.dump_beta", "false"},
    {"eval.info_plane", "false"},
    {"eval.info_steps", "300"},
    {"eval.info_hidden", "32"},
    {"sweep.seeds", "3"},
};

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::documented_defaults() {
  return kDefaults;
}

RunConfig::RunConfig() {
  for (const auto& [key, def] : kDefaults) values_[key] = def;
}

void RunConfig::set_checked(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw std::invalid_argument("unknown configuration key '" + key + "'");
  }
  it->second = value;
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key=value, got '" + stripped + "'");
    }
    set_checked(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

void RunConfig::apply_override(const std::string& key_equals_value) {
  const std::size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must be key=value, got '" + key_equals_value + "'");
  }
  set_checked(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  set_checked(key, value);
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown configuration key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw std::invalid_argument("key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw std::invalid_argument("key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.embed_dim = static_cast<int>(get_int("model.embed_dim"));
  cfg.max_seq_len = static_cast<int>(get_int("model.max_seq_len"));
  cfg.r1 = static_cast<int>(get_int("model.r1"));
  cfg.r2 = static_cast<int>(get_int("model.r2"));
  cfg.proj_dim = static_cast<int>(get_int("model.proj_dim"));
  cfg.trunk_hidden = static_cast<int>(get_int("model.trunk_hidden"));
  cfg.critic_hidden = static_cast<int>(get_int("model.critic_hidden"));
  cfg.head_hidden = static_cast<int>(get_int("model.head_hidden"));
  cfg.view_dropout = get_double("model.view_dropout");
  return cfg;
}

AblationFlags parse_ablation_list(const std::vector<std::string>& names) {
  AblationFlags flags;
  for (const auto& name : names) {
    if (name == "no-unlabeled") {
      flags.no_unlabeled = true;
    } else if (name == "no-multiview") {
      flags.no_multiview = true;
    } else if (name == "no-gate-aggregation") {
      flags.no_gate = true;
    } else if (name == "no-ib") {
      flags.no_ib = true;
    } else {
      throw std::invalid_argument(
          "unknown ablation '" + name +
          "' (expected no-unlabeled, no-multiview, no-gate-aggregation or no-ib)");
    }
  }
  return flags;
}

AblationFlags RunConfig::ablation_flags() const { return parse_ablation_list(get_list("ablation")); }

TrainingConfig RunConfig::training_config() const {
  TrainingConfig cfg;
  cfg.lambda = get_double("train.lambda");
  cfg.stage1_epochs = static_cast<int>(get_int("train.stage1_epochs"));
  cfg.stage2_epochs = static_cast<int>(get_int("train.stage2_epochs"));
  cfg.batch_size = static_cast<int>(get_int("train.batch_size"));
  cfg.lr_encoder = get_double("train.lr_encoder");
  cfg.lr_heads = get_double("train.lr_heads");
  cfg.weight_decay_encoder = get_double("train.weight_decay_encoder");
  cfg.mix_lo = get_double("train.mix_lo");
  cfg.mix_hi = get_double("train.mix_hi");
  cfg.pseudo_ood_count = static_cast<int>(get_int("train.pseudo_ood_count"));
  cfg.patience = static_cast<int>(get_int("train.patience"));
  cfg.max_context_turns = static_cast<int>(get_int("train.max_context_turns"));
  cfg.critic_warmup_steps = static_cast<int>(get_int("train.critic_warmup_steps"));
  cfg.mi_on_means = get_bool("train.mi_on_means");
  cfg.ablation = ablation_flags();
  cfg.seed = seed();
  cfg.validate();
  return cfg;
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec spec;
  spec.num_intents = static_cast<int>(get_int("synth.num_intents"));
  spec.templates_per_intent = static_cast<int>(get_int("synth.templates_per_intent"));
  spec.keywords_per_intent = static_cast<int>(get_int("synth.keywords_per_intent"));
  spec.num_ood_topics_unlabeled = static_cast<int>(get_int("synth.ood_topics_unlabeled"));
  spec.num_ood_topics_test = static_cast<int>(get_int("synth.ood_topics_test"));
  spec.filler_vocab = static_cast<int>(get_int("synth.filler_vocab"));
  spec.noise_vocab = static_cast<int>(get_int("synth.noise_vocab"));
  spec.mean_history_turns = get_double("synth.mean_history_turns");
  spec.noise_turns = static_cast<int>(get_int("synth.noise_turns"));
  spec.context_keyword_rate = get_double("synth.context_keyword_rate");
  spec.context_dependent_rate = get_double("synth.context_dependent_rate");
  spec.distractor_rate = get_double("synth.distractor_rate");
  spec.ind_train = static_cast<int>(get_int("synth.ind_train"));
  spec.unlabeled = static_cast<int>(get_int("synth.unlabeled"));
  spec.valid = static_cast<int>(get_int("synth.valid"));
  spec.test = static_cast<int>(get_int("synth.test"));
  spec.unlabeled_ood_fraction = get_double("synth.unlabeled_ood_fraction");
  spec.test_ood_fraction = get_double("synth.test_ood_fraction");
  spec.test_unseen_topic_share = get_double("synth.test_unseen_topic_share");
  spec.validate();
  return spec;
}

LoadOptions RunConfig::load_options() const {
  LoadOptions options;
  options.ood_intent_names = get_list("ood_intent_names");
  options.greeting_filter = get_list("greeting_filter");
  return options;
}

std::string RunConfig::content_hash() const {
  // FNV-1a over the sorted key=value snapshot
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [key, value] : values_) {
    for (const std::string* part : {&key, &value}) {
      for (const char c : *part) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ull;
      }
      h ^= 0x1f;
      h *= 0x100000001b3ull;
    }
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

}  // namespace caro
