#pragma once

#include <optional>
#include <string>
#include <vector>

#include "caro/dialogue.hpp"
#include "caro/rng.hpp"

namespace caro {

// Unlabeled pool: the training-facing samples carry no labels; the true
// labels are kept aside for post-hoc analysis only and are not reachable
// through samples().
class UnlabeledPool {
 public:
  void add(DialogueSample sample, int true_label) {
    sample.label = kUnlabeled;
    samples_.push_back(std::move(sample));
    truths_.push_back(true_label);
  }

  const std::vector<DialogueSample>& samples() const { return samples_; }
  // For diagnostics and scoring of mining quality; never used by training.
  const std::vector<int>& analysis_labels() const { return truths_; }
  std::size_t size() const { return samples_.size(); }

 private:
  std::vector<DialogueSample> samples_;
  std::vector<int> truths_;
};

struct SplitBundle {
  std::vector<DialogueSample> d_ind;    // labeled in-domain training samples
  UnlabeledPool d_unlabeled;            // mixed pool, labels hidden
  std::vector<DialogueSample> d_valid;  // in-domain only
  std::vector<DialogueSample> d_test;   // in-domain + out-of-domain, labels kept
};

// --- corpus file format -----------------------------------------------------
// Line-delimited: one dialogue per line as a JSON object
//   {"dialogue_id": "...", "split": "train|valid|test",
//    "turns": [{"speaker": "user|agent", "text": "...", "intent": "..."}]}
// "split" is optional. "intent" appears on user turns that form samples;
// user turns without it are context only.

struct LoadOptions {
  // Intent names mapped to the out-of-domain class.
  std::vector<std::string> ood_intent_names = {"out_of_scope", "custom", "ambiguous"};
  // Samples whose current utterance normalizes to one of these are dropped.
  std::vector<std::string> greeting_filter;
};

struct LoadReport {
  long long dialogues = 0;
  long long samples = 0;
  long long malformed_skipped = 0;
  long long greetings_filtered = 0;
  std::vector<std::string> warnings;
};

Corpus load_star_format(const std::string& path, const LoadOptions& options, LoadReport* report);
void save_corpus(const Corpus& corpus, const std::string& path);

// --- splits ------------------------------------------------------------------

// Hides ind_hidden_fraction of the training in-domain samples (exact count by
// floor) plus every training out-of-domain sample in the unlabeled pool.
// Validation keeps in-domain samples only. When the corpus carries no split
// tags, 10%/10% are carved for valid/test with the given seed.
SplitBundle make_splits(const Corpus& corpus, double ind_hidden_fraction, std::uint64_t seed,
                        std::vector<std::string>* warnings = nullptr);

// Keeps only the most recent max_turns history turns in every sample of
// every pool; 0 yields single-turn samples.
SplitBundle truncate_contexts(const SplitBundle& bundle, int max_turns);
DialogueSample truncate_history(const DialogueSample& sample, int max_turns);

// Downsamples the unlabeled pool to the given fraction (exact count by
// round), deterministically under the seed. fraction 1 returns a copy.
SplitBundle downsample_unlabeled(const SplitBundle& bundle, double fraction, std::uint64_t seed);

// --- split manifest ----------------------------------------------------------
// Text file, one line per sample: "<pool>\t<sample-id>", pools in fixed order
// d_ind, d_unlabeled, d_valid, d_test.
void write_split_manifest(const SplitBundle& bundle, const std::string& path);
SplitBundle bundle_from_manifest(const Corpus& corpus, const std::string& manifest_path);

// --- synthetic corpus ---------------------------------------------------------

// Desk-scale generator: intent-bearing keywords in the current utterance,
// histories mixing on-topic turns with injected noise turns, out-of-domain
// topics sharing filler vocabulary with in-domain intents but never their
// keywords. Test out-of-domain samples come from held-out topics that never
// appear in the unlabeled pool.
struct SynthSpec {
  int num_intents = 5;
  int templates_per_intent = 6;
  int keywords_per_intent = 6;
  int num_ood_topics_unlabeled = 3;
  int num_ood_topics_test = 3;
  int filler_vocab = 40;
  int noise_vocab = 30;
  double mean_history_turns = 6.0;
  int noise_turns = 2;  // injected irrelevant turns per dialogue history
  // chance an injected turn bleeds keywords of some other intent instead of
  // being pure chatter; off-intent bleed is what makes long contexts hurt
  double distractor_rate = 0.5;
  double context_keyword_rate = 0.8;  // chance an on-topic turn names a topic keyword
  // fraction of in-domain samples whose current utterance is generic filler,
  // classifiable only through the dialogue context
  double context_dependent_rate = 0.02;
  int ind_train = 2000;
  int unlabeled = 1000;
  int valid = 500;
  int test = 500;
  double unlabeled_ood_fraction = 0.30;
  double test_ood_fraction = 0.30;
  // share of test out-of-domain samples drawn from topics never seen in the
  // unlabeled pool (the rest reuse unlabeled-pool topics through held-out,
  // subtler templates)
  double test_unseen_topic_share = 0.25;

  void validate() const;
};

struct SynthResult {
  Corpus corpus;
  SplitBundle bundle;
  double mean_context_turns = 0.0;
};

SynthResult generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

// Deterministic in-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace caro
