#include "caro/encoder.hpp"

#include <stdexcept>

namespace caro {

TokenWindow build_token_window(const DialogueSample& sample, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("build_token_window: max_len must be >= 1");

  std::vector<int> full;
  // History turns carry a speaker marker; the current utterance is always
  // the user's, so it gets none.
  for (const auto& turn : sample.history) {
    const auto tokens = tokenize_text(turn.text);
    if (tokens.empty()) continue;
    full.push_back(vocab.id_of(speaker_marker(turn.speaker)));
    for (const auto& tok : tokens) full.push_back(vocab.id_of(tok));
    full.push_back(Vocabulary::kSepId);
  }
  const auto current = tokenize_text(sample.utterance);
  if (current.empty()) {
    throw std::invalid_argument("build_token_window: sample " + sample.id +
                                " has an empty current utterance after normalization");
  }
  for (const auto& tok : current) full.push_back(vocab.id_of(tok));

  TokenWindow window;
  window.ids.assign(static_cast<std::size_t>(max_len), Vocabulary::kPadId);
  window.mask.assign(static_cast<std::size_t>(max_len), false);
  const std::size_t n = static_cast<std::size_t>(max_len);
  const std::size_t start = full.size() > n ? full.size() - n : 0;  // drop oldest first
  for (std::size_t i = start; i < full.size(); ++i) {
    window.ids[i - start] = full[i];
    window.mask[i - start] = true;
  }
  return window;
}

Var tokenize_and_embed(const DialogueSample& sample, const Vocabulary& vocab,
                       const Var& embedding_table, int max_len, TokenWindow* window_out) {
  TokenWindow window = build_token_window(sample, vocab, max_len);
  Var seq = embed_rows(embedding_table, window.ids, window.mask);
  if (window_out) *window_out = std::move(window);
  return seq;
}

void AdaptiveFieldParams::validate(int n, int m) const {
  if (r1 < 1 || r1 >= m) {
    throw std::invalid_argument("AdaptiveFieldParams: r1 must satisfy 1 <= r1 < m");
  }
  if (w1->shape != std::vector<int>{r1, n * m}) {
    throw std::invalid_argument("AdaptiveFieldParams: w1 shape " + shape_str(w1->shape) +
                                " does not match (r1 x n*m) for n=" + std::to_string(n) +
                                " m=" + std::to_string(m));
  }
  if (row_w->shape != std::vector<int>{n, r1}) {
    throw std::invalid_argument("AdaptiveFieldParams: row_w shape " + shape_str(row_w->shape) +
                                " does not match (n x r1)");
  }
}

void AggregationGateParams::validate(int m) const {
  if (r2 < 1) throw std::invalid_argument("AggregationGateParams: r2 must be >= 1");
  if (w2->shape != std::vector<int>{r2, m}) {
    throw std::invalid_argument("AggregationGateParams: w2 shape " + shape_str(w2->shape) +
                                " does not match (r2 x m)");
  }
  if (w3->shape != std::vector<int>{m, r2}) {
    throw std::invalid_argument("AggregationGateParams: w3 shape " + shape_str(w3->shape) +
                                " does not match (m x r2)");
  }
}

Var global_pool(const Var& seq, const std::vector<bool>& mask) {
  return masked_mean_rows(seq, mask);
}

Var adaptive_field(const Var& seq, const std::vector<bool>& mask, const AdaptiveFieldParams& params,
                   Var* alpha_out) {
  if (seq->shape.size() != 2) {
    throw std::invalid_argument("adaptive_field: expected a token matrix, got " +
                                shape_str(seq->shape));
  }
  params.validate(seq->shape[0], seq->shape[1]);
  Var s = flatten(seq);                         // padding slots contribute zeros
  Var hidden = relu(dense(s, params.w1, nullptr));
  Var alpha = sigmoid(dense(hidden, params.row_w, nullptr));
  Var weights = masked_softmax(alpha, mask);    // padding excluded from the softmax
  if (alpha_out) *alpha_out = weights;
  return weighted_row_sum(seq, weights);
}

Var aggregate_views(const Var& v1, const Var& v2, const AggregationGateParams& gate,
                    Var* beta_out) {
  if (v1->shape != v2->shape || v1->shape.size() != 1) {
    throw std::invalid_argument("aggregate_views: views must be equal-length vectors, got " +
                                shape_str(v1->shape) + " and " + shape_str(v2->shape));
  }
  gate.validate(v1->shape[0]);
  Var summed = add(v1, v2);
  Var beta = sigmoid(dense(relu(dense(summed, gate.w2, nullptr)), gate.w3, nullptr));
  if (beta_out) *beta_out = beta;
  // beta.*v1 + (1-beta).*v2 = v2 + beta.*(v1-v2)
  return add(v2, mul(beta, sub(v1, v2)));
}

}  // namespace caro
