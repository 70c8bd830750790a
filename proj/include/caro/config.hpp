#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caro/data.hpp"
#include "caro/model.hpp"
#include "caro/pipeline.hpp"

namespace caro {

// Flat key=value configuration with typed parsing. Every key has a
// documented default; unknown keys are rejected so typos cannot pass
// silently. Later sources override earlier ones (defaults < file < flags).
class RunConfig {
 public:
  RunConfig();  // defaults only

  void apply_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);
  void apply_override(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

  ModelConfig model_config() const;
  TrainingConfig training_config() const;
  SynthSpec synth_spec() const;
  LoadOptions load_options() const;
  AblationFlags ablation_flags() const;

  // Full key->value snapshot in key order, for checkpoints and hashing.
  std::map<std::string, std::string> echo() const { return values_; }
  std::string content_hash() const;

  static const std::vector<std::pair<std::string, std::string>>& documented_defaults();

 private:
  std::map<std::string, std::string> values_;
  void set_checked(const std::string& key, const std::string& value);
};

AblationFlags parse_ablation_list(const std::vector<std::string>& names);

}  // namespace caro
