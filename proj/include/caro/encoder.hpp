#pragma once

#include <vector>

#include "caro/dialogue.hpp"
#include "caro/ops.hpp"
#include "caro/rng.hpp"
#include "caro/vocab.hpp"

namespace caro {

// Token ids plus validity mask at the configured maximum sequence length.
// Masked positions are padding and embed to zero vectors.
struct TokenWindow {
  std::vector<int> ids;
  std::vector<bool> mask;

  int unmasked_count() const {
    int c = 0;
    for (const bool b : mask) c += b ? 1 : 0;
    return c;
  }
};

// Concatenates history (oldest first) and the current utterance, each turn
// prefixed with its speaker marker and separated by <sep>. Sequences longer
// than max_len are truncated from the front so the most recent turns, and
// always the current utterance, survive; shorter ones are padded at the end.
// Throws if the sample normalizes to zero tokens.
TokenWindow build_token_window(const DialogueSample& sample, const Vocabulary& vocab, int max_len);

// Graph view of the window: {n,m} node gathering rows of the embedding
// table, zeros at padding.
Var tokenize_and_embed(const DialogueSample& sample, const Vocabulary& vocab,
                       const Var& embedding_table, int max_len, TokenWindow* window_out = nullptr);

// Per-position weighting of the whole sequence through a bottleneck layer.
struct AdaptiveFieldParams {
  Var w1;        // {r1, n*m}
  Var row_w;     // {n, r1}, one row vector per position
  int r1 = 0;

  void validate(int n, int m) const;
};

// Gate producing per-dimension mixing weights for the two views.
struct AggregationGateParams {
  Var w2;  // {r2, m}
  Var w3;  // {m, r2}
  int r2 = 0;

  void validate(int m) const;
};

// Mean over unmasked token embeddings.
Var global_pool(const Var& seq, const std::vector<bool>& mask);

// Sequence-conditioned weighted pooling: scores every position from the
// concatenated sequence, masks padding out of the softmax, and mixes the
// token embeddings by the resulting weights. alpha_out, when given, receives
// the softmax weights node for diagnostics.
Var adaptive_field(const Var& seq, const std::vector<bool>& mask, const AdaptiveFieldParams& params,
                   Var* alpha_out = nullptr);

// beta .* v1 + (1-beta) .* v2 with beta = sigmoid(W3 . relu(W2 . (v1+v2))).
Var aggregate_views(const Var& v1, const Var& v2, const AggregationGateParams& gate,
                    Var* beta_out = nullptr);

}  // namespace caro
