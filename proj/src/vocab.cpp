#include "caro/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace caro {

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string speaker_marker(Speaker s) { return s == Speaker::User ? "user:" : "agent:"; }

Vocabulary::Vocabulary() {
  push("<pad>");
  push("<unk>");
  push("<sep>");
}

void Vocabulary::push(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<const DialogueSample*>& samples) {
  std::unordered_map<std::string, long long> freq;
  auto count = [&freq](const std::string& text) {
    for (auto& tok : tokenize_text(text)) ++freq[tok];
  };
  for (const DialogueSample* s : samples) {
    for (const auto& turn : s->history) {
      ++freq[speaker_marker(turn.speaker)];
      count(turn.text);
    }
    ++freq[speaker_marker(Speaker::User)];
    count(s->utterance);
  }
  std::vector<std::pair<std::string, long long>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [token, _] : entries) v.push(token);
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token_of: bad id");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < 3 || tokens[0] != v.tokens_[0] || tokens[1] != v.tokens_[1] ||
      tokens[2] != v.tokens_[2]) {
    throw std::runtime_error("Vocabulary::from_tokens: reserved tokens missing or reordered");
  }
  for (std::size_t i = 3; i < tokens.size(); ++i) v.push(tokens[i]);
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < 3) {
      if (line != v.tokens_[static_cast<std::size_t>(line_no)]) {
        throw std::runtime_error("Vocabulary::load: reserved token mismatch at line " +
                                 std::to_string(line_no));
      }
    } else {
      if (line.empty()) continue;
      v.push(line);
    }
    ++line_no;
  }
  return v;
}

}  // namespace caro
