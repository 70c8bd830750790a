#pragma once

#include <string>
#include <vector>

namespace caro {

// Intent labels are 1-based: 1..k are in-domain intents, k+1 is the
// out-of-domain class, 0 marks an unlabeled sample.
inline constexpr int kUnlabeled = 0;

enum class Speaker { User, Agent };

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string text;
};

// One input sample: the ordered prior turns plus the current utterance.
struct DialogueSample {
  std::string id;
  std::vector<Utterance> history;  // oldest first
  std::string utterance;           // current user utterance
  int label = kUnlabeled;          // 1..k IND, k+1 OOD, 0 unlabeled
};

enum class SplitTag { Train, Valid, Test };

struct Corpus {
  std::vector<DialogueSample> samples;
  std::vector<SplitTag> split_tags;     // parallel to samples; empty if unknown
  std::vector<std::string> ind_intents; // sorted names, id = index + 1
  std::string ood_marker = "<ood>";
  std::string provenance;

  int num_ind_classes() const { return static_cast<int>(ind_intents.size()); }
  int ood_label() const { return num_ind_classes() + 1; }
};

}  // namespace caro
