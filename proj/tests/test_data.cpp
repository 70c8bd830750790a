#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <set>

#include "caro/data.hpp"
#include "caro/vocab.hpp"

using namespace caro;

namespace {

SynthSpec small_spec() {
  SynthSpec spec;
  spec.num_intents = 3;
  spec.ind_train = 60;
  spec.unlabeled = 40;
  spec.valid = 15;
  spec.test = 20;
  spec.mean_history_turns = 4.0;
  spec.noise_turns = 2;
  return spec;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool samples_equal(const DialogueSample& a, const DialogueSample& b) {
  if (a.id != b.id || a.utterance != b.utterance || a.label != b.label) return false;
  if (a.history.size() != b.history.size()) return false;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    if (a.history[i].speaker != b.history[i].speaker || a.history[i].text != b.history[i].text) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("synthetic generation produces the requested split sizes") {
  SynthSpec spec = small_spec();
  spec.num_intents = 5;
  spec.ind_train = 200;
  spec.unlabeled = 100;
  spec.valid = 50;
  spec.test = 50;
  SynthResult r = generate_synthetic(spec, 3);
  CHECK(r.bundle.d_ind.size() == 200);
  CHECK(r.bundle.d_unlabeled.size() == 100);
  CHECK(r.bundle.d_valid.size() == 50);
  CHECK(r.bundle.d_test.size() == 50);
  CHECK(r.corpus.samples.size() == 400);
  CHECK(r.corpus.num_ind_classes() == 5);
}

TEST_CASE("a zero-noise spec emits no noise tokens in histories") {
  SynthSpec spec = small_spec();
  spec.noise_turns = 0;
  SynthResult r = generate_synthetic(spec, 4);
  for (const auto& s : r.corpus.samples) {
    for (const auto& turn : s.history) {
      for (const auto& tok : tokenize_text(turn.text)) {
        CHECK(tok.rfind("noise", 0) != 0);
      }
    }
  }
}

TEST_CASE("the empirical mean context length honors the requested mean") {
  SynthSpec spec = small_spec();
  spec.ind_train = 1000;
  spec.unlabeled = 0;
  spec.valid = 0;
  spec.test = 0;
  spec.mean_history_turns = 6.0;
  SynthResult r = generate_synthetic(spec, 5);
  CHECK(std::abs(r.mean_context_turns - 6.0) < 0.5);
}

TEST_CASE("generation is a pure function of spec and seed") {
  SynthSpec spec = small_spec();
  SynthResult a = generate_synthetic(spec, 9);
  SynthResult b = generate_synthetic(spec, 9);
  REQUIRE(a.corpus.samples.size() == b.corpus.samples.size());
  for (std::size_t i = 0; i < a.corpus.samples.size(); ++i) {
    CHECK(samples_equal(a.corpus.samples[i], b.corpus.samples[i]));
  }
  SynthResult c = generate_synthetic(spec, 10);
  CHECK(c.corpus.samples.size() == a.corpus.samples.size());
  bool any_differ = false;
  for (std::size_t i = 0; i < a.corpus.samples.size(); ++i) {
    if (!samples_equal(a.corpus.samples[i], c.corpus.samples[i])) any_differ = true;
  }
  CHECK(any_differ);
}

TEST_CASE("inconsistent specs are rejected") {
  SynthSpec spec = small_spec();
  spec.unlabeled_ood_fraction = 1.5;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
  spec = small_spec();
  spec.num_intents = 1;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
}

TEST_CASE("unlabeled samples never expose their labels") {
  SynthResult r = generate_synthetic(small_spec(), 6);
  for (const auto& s : r.bundle.d_unlabeled.samples()) CHECK(s.label == kUnlabeled);
  // truths kept aside for analysis only
  bool any_ood = false;
  for (const int truth : r.bundle.d_unlabeled.analysis_labels()) {
    if (truth == r.corpus.ood_label()) any_ood = true;
  }
  CHECK(any_ood);
}

TEST_CASE("test out-of-domain topics are held out from the unlabeled pool") {
  SynthResult r = generate_synthetic(small_spec(), 7);
  std::set<std::string> unl_tokens;
  for (const auto& s : r.bundle.d_unlabeled.samples()) {
    for (const auto& t : tokenize_text(s.utterance)) unl_tokens.insert(t);
  }
  for (const auto& s : r.bundle.d_test) {
    if (s.label != r.corpus.ood_label()) continue;
    for (const auto& t : tokenize_text(s.utterance)) {
      if (t.rfind("oodt", 0) == 0) CHECK(unl_tokens.count(t) == 0);
    }
  }
}

TEST_CASE("corpus files round-trip through save and load") {
  SynthResult r = generate_synthetic(small_spec(), 8);
  const std::string path = temp_path("caro_corpus_roundtrip.jsonl");
  save_corpus(r.corpus, path);
  LoadReport report;
  Corpus loaded = load_star_format(path, LoadOptions{}, &report);
  CHECK(report.malformed_skipped == 0);
  REQUIRE(loaded.samples.size() == r.corpus.samples.size());
  CHECK(loaded.ind_intents == r.corpus.ind_intents);
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(loaded.samples[i].label == r.corpus.samples[i].label);
    CHECK(loaded.samples[i].utterance == r.corpus.samples[i].utterance);
    CHECK(loaded.samples[i].history.size() == r.corpus.samples[i].history.size());
  }
  std::remove(path.c_str());
}

TEST_CASE("the loader maps designated intents to the out-of-domain class") {
  const std::string path = temp_path("caro_star_style.jsonl");
  {
    std::ofstream out(path);
    out << R"({"dialogue_id":"d1","split":"train","turns":[)"
        << R"({"speaker":"user","text":"hello","intent":"greet"},)"
        << R"({"speaker":"agent","text":"hi, how can I help?"},)"
        << R"({"speaker":"user","text":"what is the meaning of life","intent":"out_of_scope"}]})"
        << "\n";
    out << R"({"dialogue_id":"d2","split":"test","turns":[)"
        << R"({"speaker":"user","text":"book me a flight","intent":"book_flight"}]})" << "\n";
    out << "this line is not json\n";
  }
  LoadReport report;
  Corpus corpus = load_star_format(path, LoadOptions{}, &report);
  CHECK(report.malformed_skipped == 1);
  REQUIRE(corpus.samples.size() == 3);
  CHECK(corpus.num_ind_classes() == 2);  // book_flight, greet
  int ood_count = 0;
  for (const auto& s : corpus.samples) {
    if (s.label == corpus.ood_label()) ++ood_count;
  }
  CHECK(ood_count == 1);
  // sample built from the second user turn carries the prior history
  const auto& late = corpus.samples[1];
  CHECK(late.history.size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("the greeting filter drops configured utterances") {
  const std::string path = temp_path("caro_greetings.jsonl");
  {
    std::ofstream out(path);
    out << R"({"dialogue_id":"d1","turns":[)"
        << R"({"speaker":"user","text":"Hello!","intent":"greet"},)"
        << R"({"speaker":"user","text":"book a flight","intent":"book_flight"}]})" << "\n";
  }
  LoadOptions options;
  options.greeting_filter = {"hello"};
  LoadReport report;
  Corpus corpus = load_star_format(path, options, &report);
  CHECK(report.greetings_filtered == 1);
  REQUIRE(corpus.samples.size() == 1);
  CHECK(corpus.samples[0].utterance == "book a flight");
  std::remove(path.c_str());
}

TEST_CASE("a dialogue with several labeled user turns yields one sample per turn") {
  const std::string path = temp_path("caro_multi_turn.jsonl");
  {
    std::ofstream out(path);
    out << R"({"dialogue_id":"d1","turns":[)"
        << R"({"speaker":"user","text":"turn one","intent":"a"},)"
        << R"({"speaker":"agent","text":"reply one"},)"
        << R"({"speaker":"user","text":"turn two","intent":"a"},)"
        << R"({"speaker":"agent","text":"reply two"},)"
        << R"({"speaker":"user","text":"turn three","intent":"b"},)"
        << R"({"speaker":"user","text":"turn four","intent":"b"}]})" << "\n";
  }
  Corpus corpus = load_star_format(path, LoadOptions{}, nullptr);
  REQUIRE(corpus.samples.size() == 4);
  CHECK(corpus.samples[0].history.size() == 0);
  CHECK(corpus.samples[1].history.size() == 2);
  CHECK(corpus.samples[2].history.size() == 4);
  CHECK(corpus.samples[3].history.size() == 5);
  std::remove(path.c_str());
}

TEST_CASE("split construction hides the requested fraction exactly") {
  SynthSpec spec = small_spec();
  spec.ind_train = 1000;
  spec.unlabeled = 0;
  spec.valid = 100;
  spec.test = 100;
  spec.test_ood_fraction = 0.3;
  SynthResult r = generate_synthetic(spec, 11);
  // rebuild splits from the corpus (train tags only carry labeled samples here)
  Corpus corpus = r.corpus;

  SUBCASE("fraction zero leaves only out-of-domain samples hidden") {
    std::vector<std::string> warnings;
    SplitBundle b = make_splits(corpus, 0.0, 5, &warnings);
    for (std::size_t i = 0; i < b.d_unlabeled.size(); ++i) {
      CHECK(b.d_unlabeled.analysis_labels()[i] == corpus.ood_label());
    }
  }
  SUBCASE("thirty percent of one thousand is exactly three hundred") {
    SplitBundle b = make_splits(corpus, 0.30, 5, nullptr);
    long long hidden_ind = 0;
    for (const int truth : b.d_unlabeled.analysis_labels()) {
      if (truth != corpus.ood_label()) ++hidden_ind;
    }
    CHECK(hidden_ind == 300);
    CHECK(b.d_ind.size() == 700);
  }
  SUBCASE("the same seed reproduces the same membership") {
    SplitBundle a = make_splits(corpus, 0.30, 5, nullptr);
    SplitBundle b = make_splits(corpus, 0.30, 5, nullptr);
    REQUIRE(a.d_ind.size() == b.d_ind.size());
    for (std::size_t i = 0; i < a.d_ind.size(); ++i) CHECK(a.d_ind[i].id == b.d_ind[i].id);
  }
  SUBCASE("no sample lands in two pools") {
    SplitBundle b = make_splits(corpus, 0.30, 5, nullptr);
    std::set<std::string> seen;
    auto check_unique = [&seen](const std::string& id) {
      CHECK(seen.insert(id).second);
    };
    for (const auto& s : b.d_ind) check_unique(s.id);
    for (const auto& s : b.d_unlabeled.samples()) check_unique(s.id);
    for (const auto& s : b.d_valid) check_unique(s.id);
    for (const auto& s : b.d_test) check_unique(s.id);
  }
  SUBCASE("validation keeps no out-of-domain samples") {
    SplitBundle b = make_splits(corpus, 0.30, 5, nullptr);
    for (const auto& s : b.d_valid) CHECK(s.label != corpus.ood_label());
  }
}

TEST_CASE("a corpus without out-of-domain samples warns and builds an in-domain pool") {
  SynthSpec spec = small_spec();
  spec.unlabeled_ood_fraction = 0.0;
  spec.test_ood_fraction = 0.0;
  SynthResult r = generate_synthetic(spec, 12);
  std::vector<std::string> warnings;
  make_splits(r.corpus, 0.3, 1, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("no out-of-domain") != std::string::npos);
}

TEST_CASE("a corpus without split tags gets ten percent valid and test carved") {
  SynthSpec spec = small_spec();
  spec.ind_train = 200;
  spec.unlabeled = 100;
  spec.valid = 0;
  spec.test = 0;
  SynthResult r = generate_synthetic(spec, 13);
  Corpus corpus = r.corpus;
  corpus.split_tags.clear();
  SplitBundle b = make_splits(corpus, 0.3, 2, nullptr);
  const std::size_t total = corpus.samples.size();
  CHECK(b.d_test.size() == total / 10);
  CHECK(b.d_valid.size() <= total / 10);  // out-of-domain dropped from validation
}

TEST_CASE("history truncation keeps the most recent turns in order") {
  DialogueSample s;
  s.id = "x#0";
  for (int i = 0; i < 6; ++i) {
    s.history.push_back(Utterance{i % 2 ? Speaker::Agent : Speaker::User,
                                  "turn " + std::to_string(i)});
  }
  s.utterance = "current";
  s.label = 1;

  SUBCASE("a large budget is a no-op") {
    DialogueSample t = truncate_history(s, 10);
    CHECK(t.history.size() == 6);
  }
  SUBCASE("zero drops the whole history") {
    DialogueSample t = truncate_history(s, 0);
    CHECK(t.history.empty());
    CHECK(t.utterance == "current");
  }
  SUBCASE("three keeps the last three turns in order") {
    DialogueSample t = truncate_history(s, 3);
    REQUIRE(t.history.size() == 3);
    CHECK(t.history[0].text == "turn 3");
    CHECK(t.history[1].text == "turn 4");
    CHECK(t.history[2].text == "turn 5");
  }
}

TEST_CASE("bundle truncation covers every pool and preserves hidden labels") {
  SynthResult r = generate_synthetic(small_spec(), 14);
  SplitBundle t = truncate_contexts(r.bundle, 1);
  for (const auto& s : t.d_ind) CHECK(s.history.size() <= 1);
  for (const auto& s : t.d_unlabeled.samples()) CHECK(s.history.size() <= 1);
  for (const auto& s : t.d_test) CHECK(s.history.size() <= 1);
  CHECK(t.d_unlabeled.analysis_labels() == r.bundle.d_unlabeled.analysis_labels());
}

TEST_CASE("the split manifest reproduces the exact bundle") {
  SynthResult r = generate_synthetic(small_spec(), 15);
  const std::string path = temp_path("caro_manifest.tsv");
  write_split_manifest(r.bundle, path);
  SplitBundle rebuilt = bundle_from_manifest(r.corpus, path);
  REQUIRE(rebuilt.d_ind.size() == r.bundle.d_ind.size());
  REQUIRE(rebuilt.d_unlabeled.size() == r.bundle.d_unlabeled.size());
  REQUIRE(rebuilt.d_valid.size() == r.bundle.d_valid.size());
  REQUIRE(rebuilt.d_test.size() == r.bundle.d_test.size());
  for (std::size_t i = 0; i < rebuilt.d_ind.size(); ++i) {
    CHECK(rebuilt.d_ind[i].id == r.bundle.d_ind[i].id);
  }
  CHECK(rebuilt.d_unlabeled.analysis_labels() == r.bundle.d_unlabeled.analysis_labels());
  std::remove(path.c_str());
}

TEST_CASE("downsampling the unlabeled pool is deterministic and exact") {
  SynthResult r = generate_synthetic(small_spec(), 16);
  SplitBundle half = downsample_unlabeled(r.bundle, 0.5, 3);
  CHECK(half.d_unlabeled.size() == r.bundle.d_unlabeled.size() / 2);
  SplitBundle again = downsample_unlabeled(r.bundle, 0.5, 3);
  for (std::size_t i = 0; i < half.d_unlabeled.size(); ++i) {
    CHECK(half.d_unlabeled.samples()[i].id == again.d_unlabeled.samples()[i].id);
  }
  SplitBundle full = downsample_unlabeled(r.bundle, 1.0, 3);
  CHECK(full.d_unlabeled.size() == r.bundle.d_unlabeled.size());
}
