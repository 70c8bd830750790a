#include "caro/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "caro/vocab.hpp"

namespace caro {

using nlohmann::json;

namespace {

// Lowercased tokens re-joined with single spaces, so greeting-list matching
// ignores case, punctuation and spacing.
std::string normalize_utterance(const std::string& text) {
  std::string out;
  for (const auto& tok : tokenize_text(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::string split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Valid: return "valid";
    case SplitTag::Test: return "test";
  }
  return "train";
}

std::optional<SplitTag> split_from_name(const std::string& name) {
  if (name == "train") return SplitTag::Train;
  if (name == "valid") return SplitTag::Valid;
  if (name == "test") return SplitTag::Test;
  return std::nullopt;
}

}  // namespace

Corpus load_star_format(const std::string& path, const LoadOptions& options, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_star_format: cannot open " + path);
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  std::set<std::string> ood_names(options.ood_intent_names.begin(),
                                  options.ood_intent_names.end());
  ood_names.insert("<ood>");  // the library's own marker, so corpora round-trip
  std::set<std::string> greetings;
  for (const auto& g : options.greeting_filter) greetings.insert(normalize_utterance(g));

  Corpus corpus;
  corpus.provenance = path;
  std::set<std::string> ind_names;
  struct Pending {
    DialogueSample sample;
    std::string intent;
    std::optional<SplitTag> split;
  };
  std::vector<Pending> pending;

  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json dlg = json::parse(line, nullptr, false);
    if (dlg.is_discarded() || !dlg.is_object() || !dlg.contains("turns") ||
        !dlg["turns"].is_array()) {
      ++rep.malformed_skipped;
      rep.warnings.push_back("line " + std::to_string(line_no) + ": malformed dialogue record");
      continue;
    }
    ++rep.dialogues;
    const std::string dlg_id =
        dlg.value("dialogue_id", "line" + std::to_string(line_no));
    std::optional<SplitTag> split;
    if (dlg.contains("split") && dlg["split"].is_string()) {
      split = split_from_name(dlg["split"].get<std::string>());
    }
    std::vector<Utterance> history;
    int user_turn_index = 0;
    for (const auto& turn : dlg["turns"]) {
      if (!turn.is_object() || !turn.contains("speaker") || !turn.contains("text") ||
          !turn["speaker"].is_string() || !turn["text"].is_string()) {
        ++rep.malformed_skipped;
        rep.warnings.push_back("dialogue " + dlg_id + ": malformed turn skipped");
        continue;
      }
      const std::string speaker_s = turn["speaker"].get<std::string>();
      if (speaker_s != "user" && speaker_s != "agent") {
        ++rep.malformed_skipped;
        rep.warnings.push_back("dialogue " + dlg_id + ": unknown speaker '" + speaker_s + "'");
        continue;
      }
      const Speaker speaker = speaker_s == "user" ? Speaker::User : Speaker::Agent;
      const std::string text = turn["text"].get<std::string>();
      if (speaker == Speaker::User && turn.contains("intent") && turn["intent"].is_string()) {
        const std::string intent = turn["intent"].get<std::string>();
        if (normalize_utterance(text).empty()) {
          ++rep.malformed_skipped;
          rep.warnings.push_back("dialogue " + dlg_id + ": empty labeled utterance skipped");
        } else if (greetings.count(normalize_utterance(text))) {
          ++rep.greetings_filtered;
        } else {
          Pending p;
          p.sample.id = dlg_id + "#" + std::to_string(user_turn_index);
          p.sample.history = history;  // full prior history
          p.sample.utterance = text;
          p.intent = intent;
          p.split = split;
          if (!ood_names.count(intent)) ind_names.insert(intent);
          pending.push_back(std::move(p));
        }
        ++user_turn_index;
      }
      history.push_back(Utterance{speaker, text});
    }
  }

  corpus.ind_intents.assign(ind_names.begin(), ind_names.end());  // sorted by set order
  std::unordered_map<std::string, int> intent_id;
  for (std::size_t i = 0; i < corpus.ind_intents.size(); ++i) {
    intent_id[corpus.ind_intents[i]] = static_cast<int>(i) + 1;
  }
  bool any_split = false;
  for (const auto& p : pending) any_split = any_split || p.split.has_value();
  for (auto& p : pending) {
    DialogueSample s = std::move(p.sample);
    s.label = ood_names.count(p.intent) ? corpus.ood_label() : intent_id.at(p.intent);
    corpus.samples.push_back(std::move(s));
    if (any_split) corpus.split_tags.push_back(p.split.value_or(SplitTag::Train));
  }
  rep.samples = static_cast<long long>(corpus.samples.size());
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const DialogueSample& s = corpus.samples[i];
    json turns = json::array();
    for (const auto& turn : s.history) {
      turns.push_back({{"speaker", turn.speaker == Speaker::User ? "user" : "agent"},
                       {"text", turn.text}});
    }
    std::string intent;
    if (s.label == corpus.ood_label()) {
      intent = corpus.ood_marker;
    } else if (s.label != kUnlabeled) {
      intent = corpus.ind_intents.at(static_cast<std::size_t>(s.label - 1));
    }
    json current = {{"speaker", "user"}, {"text", s.utterance}};
    if (!intent.empty()) current["intent"] = intent;
    turns.push_back(current);
    json dlg = {{"dialogue_id", s.id.substr(0, s.id.find('#'))}, {"turns", turns}};
    if (!corpus.split_tags.empty()) dlg["split"] = split_name(corpus.split_tags[i]);
    out << dlg.dump() << "\n";
  }
}

SplitBundle make_splits(const Corpus& corpus, double ind_hidden_fraction, std::uint64_t seed,
                        std::vector<std::string>* warnings) {
  if (ind_hidden_fraction < 0.0 || ind_hidden_fraction > 1.0) {
    throw std::invalid_argument("make_splits: ind_hidden_fraction must lie in [0,1]");
  }
  const int ood = corpus.ood_label();
  std::vector<std::size_t> train_idx, valid_idx, test_idx;
  Rng rng(seed);
  if (!corpus.split_tags.empty()) {
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
      switch (corpus.split_tags[i]) {
        case SplitTag::Train: train_idx.push_back(i); break;
        case SplitTag::Valid: valid_idx.push_back(i); break;
        case SplitTag::Test: test_idx.push_back(i); break;
      }
    }
  } else {
    std::vector<std::size_t> all(corpus.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng carve = rng.fork("carve-splits");
    shuffle(all, carve);
    const std::size_t n_valid = all.size() / 10;
    const std::size_t n_test = all.size() / 10;
    valid_idx.assign(all.begin(), all.begin() + n_valid);
    test_idx.assign(all.begin() + n_valid, all.begin() + n_valid + n_test);
    train_idx.assign(all.begin() + n_valid + n_test, all.end());
    std::sort(valid_idx.begin(), valid_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }

  std::vector<std::size_t> train_ind, train_ood;
  for (const std::size_t i : train_idx) {
    (corpus.samples[i].label == ood ? train_ood : train_ind).push_back(i);
  }
  if (train_ood.empty() && warnings) {
    warnings->push_back("corpus has no out-of-domain training samples; unlabeled pool is in-domain only");
  }

  Rng hide = rng.fork("hide-ind");
  std::vector<std::size_t> shuffled_ind = train_ind;
  shuffle(shuffled_ind, hide);
  const std::size_t n_hidden =
      static_cast<std::size_t>(ind_hidden_fraction * static_cast<double>(train_ind.size()));
  std::set<std::size_t> hidden(shuffled_ind.begin(), shuffled_ind.begin() + n_hidden);

  SplitBundle bundle;
  for (const std::size_t i : train_ind) {
    if (hidden.count(i)) {
      bundle.d_unlabeled.add(corpus.samples[i], corpus.samples[i].label);
    } else {
      bundle.d_ind.push_back(corpus.samples[i]);
    }
  }
  for (const std::size_t i : train_ood) {
    bundle.d_unlabeled.add(corpus.samples[i], corpus.samples[i].label);
  }
  for (const std::size_t i : valid_idx) {
    if (corpus.samples[i].label != ood) bundle.d_valid.push_back(corpus.samples[i]);
  }
  for (const std::size_t i : test_idx) bundle.d_test.push_back(corpus.samples[i]);
  return bundle;
}

DialogueSample truncate_history(const DialogueSample& sample, int max_turns) {
  if (max_turns < 0) throw std::invalid_argument("truncate_history: max_turns must be >= 0");
  DialogueSample out = sample;
  const std::size_t keep = static_cast<std::size_t>(max_turns);
  if (out.history.size() > keep) {
    out.history.erase(out.history.begin(), out.history.end() - static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

SplitBundle truncate_contexts(const SplitBundle& bundle, int max_turns) {
  SplitBundle out;
  for (const auto& s : bundle.d_ind) out.d_ind.push_back(truncate_history(s, max_turns));
  for (std::size_t i = 0; i < bundle.d_unlabeled.size(); ++i) {
    out.d_unlabeled.add(truncate_history(bundle.d_unlabeled.samples()[i], max_turns),
                        bundle.d_unlabeled.analysis_labels()[i]);
  }
  for (const auto& s : bundle.d_valid) out.d_valid.push_back(truncate_history(s, max_turns));
  for (const auto& s : bundle.d_test) out.d_test.push_back(truncate_history(s, max_turns));
  return out;
}

SplitBundle downsample_unlabeled(const SplitBundle& bundle, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("downsample_unlabeled: fraction must lie in [0,1]");
  }
  SplitBundle out;
  out.d_ind = bundle.d_ind;
  out.d_valid = bundle.d_valid;
  out.d_test = bundle.d_test;
  std::vector<std::size_t> idx(bundle.d_unlabeled.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(seed).fork("downsample-unlabeled");
  shuffle(idx, rng);
  const std::size_t keep =
      static_cast<std::size_t>(fraction * static_cast<double>(idx.size()) + 0.5);
  idx.resize(std::min(keep, idx.size()));
  std::sort(idx.begin(), idx.end());
  for (const std::size_t i : idx) {
    out.d_unlabeled.add(bundle.d_unlabeled.samples()[i], bundle.d_unlabeled.analysis_labels()[i]);
  }
  return out;
}

void write_split_manifest(const SplitBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_split_manifest: cannot open " + path);
  for (const auto& s : bundle.d_ind) out << "d_ind\t" << s.id << "\n";
  for (const auto& s : bundle.d_unlabeled.samples()) out << "d_unlabeled\t" << s.id << "\n";
  for (const auto& s : bundle.d_valid) out << "d_valid\t" << s.id << "\n";
  for (const auto& s : bundle.d_test) out << "d_test\t" << s.id << "\n";
}

SplitBundle bundle_from_manifest(const Corpus& corpus, const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("bundle_from_manifest: cannot open " + manifest_path);
  std::unordered_map<std::string, const DialogueSample*> by_id;
  for (const auto& s : corpus.samples) by_id[s.id] = &s;
  SplitBundle bundle;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("bundle_from_manifest: bad line " + std::to_string(line_no));
    }
    const std::string pool = line.substr(0, tab);
    const std::string id = line.substr(tab + 1);
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::runtime_error("bundle_from_manifest: unknown sample id '" + id + "'");
    }
    const DialogueSample& s = *it->second;
    if (pool == "d_ind") {
      bundle.d_ind.push_back(s);
    } else if (pool == "d_unlabeled") {
      bundle.d_unlabeled.add(s, s.label);
    } else if (pool == "d_valid") {
      bundle.d_valid.push_back(s);
    } else if (pool == "d_test") {
      bundle.d_test.push_back(s);
    } else {
      throw std::runtime_error("bundle_from_manifest: unknown pool '" + pool + "'");
    }
  }
  return bundle;
}

// --- synthetic generation ----------------------------------------------------

void SynthSpec::validate() const {
  if (num_intents < 2) throw std::invalid_argument("SynthSpec: need at least 2 intents");
  if (templates_per_intent < 1 || keywords_per_intent < 2) {
    throw std::invalid_argument("SynthSpec: templates/keywords per intent too small");
  }
  if (num_ood_topics_unlabeled < 1 || num_ood_topics_test < 1) {
    throw std::invalid_argument("SynthSpec: need at least one ood topic per pool");
  }
  if (filler_vocab < 4 || noise_vocab < 4) {
    throw std::invalid_argument("SynthSpec: filler/noise vocab too small");
  }
  if (mean_history_turns < 0.0) throw std::invalid_argument("SynthSpec: negative mean turns");
  if (noise_turns < 0) throw std::invalid_argument("SynthSpec: negative noise turns");
  if (context_keyword_rate < 0.0 || context_keyword_rate > 1.0) {
    throw std::invalid_argument("SynthSpec: context_keyword_rate must lie in [0,1]");
  }
  if (context_dependent_rate < 0.0 || context_dependent_rate > 1.0) {
    throw std::invalid_argument("SynthSpec: context_dependent_rate must lie in [0,1]");
  }
  if (distractor_rate < 0.0 || distractor_rate > 1.0) {
    throw std::invalid_argument("SynthSpec: distractor_rate must lie in [0,1]");
  }
  if (ind_train < num_intents || unlabeled < 0 || valid < 0 || test < 0) {
    throw std::invalid_argument("SynthSpec: invalid split sizes");
  }
  if (unlabeled_ood_fraction < 0.0 || unlabeled_ood_fraction > 1.0 || test_ood_fraction < 0.0 ||
      test_ood_fraction > 1.0) {
    throw std::invalid_argument("SynthSpec: ood fractions must lie in [0,1]");
  }
  if (test_unseen_topic_share < 0.0 || test_unseen_topic_share > 1.0) {
    throw std::invalid_argument("SynthSpec: test_unseen_topic_share must lie in [0,1]");
  }
}

namespace {

struct SynthVocab {
  std::vector<std::vector<std::string>> ind_keywords;     // [intent][kw]
  std::vector<std::vector<std::string>> ood_shared_kw;    // topics heard in the unlabeled pool
  std::vector<std::vector<std::string>> ood_unseen_kw;    // topics reserved for the test set
  std::vector<std::string> fillers;
  std::vector<std::string> noise;
  // template = fixed keyword subset per intent
  std::vector<std::vector<std::vector<int>>> ind_templates;  // [intent][tpl][kw index]
};

SynthVocab build_synth_vocab(const SynthSpec& spec, Rng& rng) {
  SynthVocab v;
  auto name = [](const std::string& prefix, int a, int b) {
    return prefix + std::to_string(a) + "_" + std::to_string(b);
  };
  for (int i = 0; i < spec.num_intents; ++i) {
    std::vector<std::string> kws;
    for (int j = 0; j < spec.keywords_per_intent; ++j) kws.push_back(name("kw", i, j));
    v.ind_keywords.push_back(std::move(kws));
  }
  for (int i = 0; i < spec.num_ood_topics_unlabeled; ++i) {
    std::vector<std::string> kws;
    for (int j = 0; j < spec.keywords_per_intent; ++j) kws.push_back(name("oodu", i, j));
    v.ood_shared_kw.push_back(std::move(kws));
  }
  for (int i = 0; i < spec.num_ood_topics_test; ++i) {
    std::vector<std::string> kws;
    for (int j = 0; j < spec.keywords_per_intent; ++j) kws.push_back(name("oodt", i, j));
    v.ood_unseen_kw.push_back(std::move(kws));
  }
  for (int i = 0; i < spec.filler_vocab; ++i) v.fillers.push_back("fill" + std::to_string(i));
  for (int i = 0; i < spec.noise_vocab; ++i) v.noise.push_back("noise" + std::to_string(i));
  for (int i = 0; i < spec.num_intents; ++i) {
    std::vector<std::vector<int>> tpls;
    for (int t = 0; t < spec.templates_per_intent; ++t) {
      const int kw_count = 2 + static_cast<int>(rng.uniform_int(2));  // 2 or 3 keywords
      std::vector<int> order(static_cast<std::size_t>(spec.keywords_per_intent));
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
      shuffle(order, rng);
      order.resize(static_cast<std::size_t>(kw_count));
      tpls.push_back(order);
    }
    v.ind_templates.push_back(std::move(tpls));
  }
  return v;
}

std::string join_tokens(std::vector<std::string> tokens, Rng& rng) {
  shuffle(tokens, rng);
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += " ";
    out += t;
  }
  return out;
}

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
}

// Current utterance of an ood sample. Unlabeled-pool topics speak with the
// same keyword density as in-domain intents; the held-out test topics are
// subtler (fewer keywords among more filler), so detecting them leans on the
// mismatch with the dialogue context rather than raw novelty strength.
std::string ood_utterance(const SynthVocab& v, const std::vector<std::string>& topic_kw,
                          bool subtle, Rng& rng) {
  // off-domain requests mix their own topic words with vocabulary that
  // otherwise only shows up in chitchat turns, never in intent-bearing ones
  const int kw_count = subtle ? 2 : 2 + static_cast<int>(rng.uniform_int(2));
  std::vector<std::string> toks;
  std::vector<int> order(topic_kw.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  shuffle(order, rng);
  for (int j = 0; j < kw_count; ++j) toks.push_back(topic_kw[static_cast<std::size_t>(order[j])]);
  const int noise_count = subtle ? 1 + static_cast<int>(rng.uniform_int(2)) : 0;
  for (int j = 0; j < noise_count; ++j) toks.push_back(pick(v.noise, rng));
  const int filler_count = 1 + static_cast<int>(rng.uniform_int(2));
  for (int j = 0; j < filler_count; ++j) toks.push_back(pick(v.fillers, rng));
  return join_tokens(std::move(toks), rng);
}

std::string ind_utterance(const SynthVocab& v, int intent, Rng& rng) {
  const auto& tpls = v.ind_templates[static_cast<std::size_t>(intent)];
  const auto& tpl = tpls[static_cast<std::size_t>(rng.uniform_int(tpls.size()))];
  std::vector<std::string> toks;
  for (const int kw : tpl) {
    toks.push_back(v.ind_keywords[static_cast<std::size_t>(intent)][static_cast<std::size_t>(kw)]);
  }
  const int filler_count = 1 + static_cast<int>(rng.uniform_int(2));
  for (int j = 0; j < filler_count; ++j) toks.push_back(pick(v.fillers, rng));
  return join_tokens(std::move(toks), rng);
}

// generic follow-up carrying no intent keywords of its own
std::string filler_utterance(const SynthVocab& v, Rng& rng) {
  std::vector<std::string> toks;
  const int len = 2 + static_cast<int>(rng.uniform_int(2));
  for (int j = 0; j < len; ++j) toks.push_back(pick(v.fillers, rng));
  return join_tokens(std::move(toks), rng);
}

// Noise turns model drifted conversation: chatter vocabulary mixed with
// keywords of some other intent, so long histories genuinely bleed signal
// from topics that are not the sample's own.
std::vector<std::string> distractor_tokens(const SynthVocab& v, const std::vector<std::string>* own,
                                           Rng& rng) {
  std::vector<std::string> toks;
  const int noise_len = 2 + static_cast<int>(rng.uniform_int(2));
  for (int j = 0; j < noise_len; ++j) toks.push_back(pick(v.noise, rng));
  const std::vector<std::string>* other = nullptr;
  for (int attempt = 0; attempt < 8 && !other; ++attempt) {
    const auto& cand = v.ind_keywords[static_cast<std::size_t>(rng.uniform_int(v.ind_keywords.size()))];
    if (&cand != own) other = &cand;
  }
  if (other) {
    const int kw_len = 1 + static_cast<int>(rng.uniform_int(2));
    for (int j = 0; j < kw_len; ++j) toks.push_back(pick(*other, rng));
  }
  return toks;
}

std::vector<Utterance> make_history(const SynthSpec& spec, const SynthVocab& v,
                                    const std::vector<std::string>* topic_kw, bool force_keyword,
                                    Rng& rng) {
  const int mean_turns = static_cast<int>(spec.mean_history_turns + 0.5);
  const int lo = std::max(0, mean_turns - 3);
  const int hi = 2 * mean_turns - lo;  // symmetric around the mean even when clamped
  const int turns = lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  std::vector<bool> is_noise(static_cast<std::size_t>(turns), false);
  const int noise_count = std::min(spec.noise_turns, turns);
  {
    std::vector<int> order(static_cast<std::size_t>(turns));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
    shuffle(order, rng);
    for (int j = 0; j < noise_count; ++j) is_noise[static_cast<std::size_t>(order[j])] = true;
  }
  std::vector<Utterance> history;
  bool keyword_emitted = false;
  for (int t = 0; t < turns; ++t) {
    Utterance u;
    u.speaker = (turns - t) % 2 == 1 ? Speaker::Agent : Speaker::User;  // ends with agent turn
    std::vector<std::string> toks;
    if (is_noise[static_cast<std::size_t>(t)]) {
      if (rng.uniform01() < spec.distractor_rate) {
        toks = distractor_tokens(v, topic_kw, rng);
      } else {
        const int len = 3 + static_cast<int>(rng.uniform_int(4));
        for (int j = 0; j < len; ++j) toks.push_back(pick(v.noise, rng));
      }
    } else {
      const int len = 2 + static_cast<int>(rng.uniform_int(3));
      for (int j = 0; j < len; ++j) toks.push_back(pick(v.fillers, rng));
      if (topic_kw && rng.uniform01() < spec.context_keyword_rate) {
        toks.push_back(pick(*topic_kw, rng));
        keyword_emitted = true;
      }
    }
    u.text = join_tokens(std::move(toks), rng);
    history.push_back(std::move(u));
  }
  if (force_keyword && topic_kw && !keyword_emitted) {
    // context-dependent samples need the topic named somewhere in the history
    Utterance u;
    u.speaker = history.empty() || history.back().speaker == Speaker::Agent ? Speaker::User
                                                                            : Speaker::Agent;
    std::vector<std::string> toks = {pick(*topic_kw, rng), pick(v.fillers, rng),
                                     pick(*topic_kw, rng)};
    u.text = join_tokens(std::move(toks), rng);
    history.push_back(std::move(u));
  }
  return history;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng root(seed);
  Rng vocab_rng = root.fork("synth-vocab");
  const SynthVocab v = build_synth_vocab(spec, vocab_rng);

  SynthResult result;
  Corpus& corpus = result.corpus;
  for (int i = 0; i < spec.num_intents; ++i) {
    std::string idx = std::to_string(i);
    if (idx.size() < 2) idx = "0" + idx;
    corpus.ind_intents.push_back("intent_" + idx);
  }
  corpus.provenance = "synthetic";
  const int ood_label = corpus.ood_label();

  long long next_id = 0;
  long long turn_total = 0;
  long long sample_total = 0;
  auto make_sample = [&](int label, const std::vector<std::string>* topic_kw,
                         const std::string& utterance, bool force_keyword, Rng& rng) {
    DialogueSample s;
    s.id = "s" + std::to_string(next_id++) + "#0";
    s.history = make_history(spec, v, topic_kw, force_keyword, rng);
    s.utterance = utterance;
    s.label = label;
    turn_total += static_cast<long long>(s.history.size());
    ++sample_total;
    return s;
  };
  // in-domain sample: usually keyword-bearing, sometimes a generic follow-up
  // whose intent is recoverable only from the history
  auto make_ind_sample = [&](int intent, Rng& rng) {
    const auto& kw = v.ind_keywords[static_cast<std::size_t>(intent)];
    const bool ctx_dep = rng.uniform01() < spec.context_dependent_rate;
    const std::string utt = ctx_dep ? filler_utterance(v, rng) : ind_utterance(v, intent, rng);
    return make_sample(intent + 1, &kw, utt, ctx_dep, rng);
  };

  // labeled in-domain training pool, classes balanced round-robin
  {
    Rng rng = root.fork("synth-dind");
    for (int i = 0; i < spec.ind_train; ++i) {
      const int intent = i % spec.num_intents;
      DialogueSample s = make_ind_sample(intent, rng);
      corpus.samples.push_back(std::move(s));
      corpus.split_tags.push_back(SplitTag::Train);
      result.bundle.d_ind.push_back(corpus.samples.back());
    }
  }
  // unlabeled pool: mixture of in-domain intents and the unlabeled ood topics
  {
    Rng rng = root.fork("synth-dunl");
    const int n_ood = static_cast<int>(spec.unlabeled_ood_fraction * spec.unlabeled + 0.5);
    for (int i = 0; i < spec.unlabeled; ++i) {
      DialogueSample s;
      if (i < n_ood) {
        const auto& kw =
            v.ood_shared_kw[static_cast<std::size_t>(rng.uniform_int(v.ood_shared_kw.size()))];
        // out-of-domain requests surface inside dialogues that were about an
        // in-domain topic, so their histories carry in-domain signals
        const auto& ctx =
            v.ind_keywords[static_cast<std::size_t>(rng.uniform_int(v.ind_keywords.size()))];
        s = make_sample(ood_label, &ctx, ood_utterance(v, kw, false, rng), false, rng);
      } else {
        const int intent = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_intents)));
        s = make_ind_sample(intent, rng);
      }
      corpus.samples.push_back(s);
      corpus.split_tags.push_back(SplitTag::Train);
      result.bundle.d_unlabeled.add(s, s.label);
    }
  }
  // validation: in-domain only
  {
    Rng rng = root.fork("synth-dval");
    for (int i = 0; i < spec.valid; ++i) {
      const int intent = i % spec.num_intents;
      DialogueSample s = make_ind_sample(intent, rng);
      corpus.samples.push_back(std::move(s));
      corpus.split_tags.push_back(SplitTag::Valid);
      result.bundle.d_valid.push_back(corpus.samples.back());
    }
  }
  // test: in-domain plus held-out ood topics
  {
    Rng rng = root.fork("synth-dtest");
    const int n_ood = static_cast<int>(spec.test_ood_fraction * spec.test + 0.5);
    for (int i = 0; i < spec.test; ++i) {
      DialogueSample s;
      if (i < n_ood) {
        const bool unseen = rng.uniform01() < spec.test_unseen_topic_share;
        const auto& pool = unseen ? v.ood_unseen_kw : v.ood_shared_kw;
        const auto& kw = pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
        const auto& ctx =
            v.ind_keywords[static_cast<std::size_t>(rng.uniform_int(v.ind_keywords.size()))];
        s = make_sample(ood_label, &ctx, ood_utterance(v, kw, true, rng), false, rng);
      } else {
        const int intent = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_intents)));
        s = make_ind_sample(intent, rng);
      }
      corpus.samples.push_back(std::move(s));
      corpus.split_tags.push_back(SplitTag::Test);
      result.bundle.d_test.push_back(corpus.samples.back());
    }
  }

  result.mean_context_turns =
      sample_total == 0 ? 0.0 : static_cast<double>(turn_total) / static_cast<double>(sample_total);
  return result;
}

}  // namespace caro
