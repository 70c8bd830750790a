#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "caro/dialogue.hpp"

namespace caro {

// Lowercases and splits on whitespace and punctuation; tokens are maximal
// runs of alphanumeric characters (plus '_', so synthetic keywords and
// speaker markers survive intact).
std::vector<std::string> tokenize_text(const std::string& text);

// Speaker markers prepended to each turn so the model can tell roles apart.
std::string speaker_marker(Speaker s);

class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kSepId = 2;

  Vocabulary();

  // Builds from token frequencies over the given samples (every utterance,
  // history and current, plus speaker markers). Ordering after the reserved
  // entries is frequency descending, then lexicographic.
  static Vocabulary build(const std::vector<const DialogueSample*>& samples);

  int id_of(const std::string& token) const;  // kUnkId when absent
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // One token per line, line number = id, reserved tokens first.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  // Rebuilds from a full token list (reserved entries included, in order).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  void push(const std::string& token);
};

}  // namespace caro
