#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "caro/encoder.hpp"

using namespace caro;

namespace {

DialogueSample sample_with(std::vector<std::string> history_texts, std::string current) {
  DialogueSample s;
  s.id = "t#0";
  for (std::size_t i = 0; i < history_texts.size(); ++i) {
    s.history.push_back(Utterance{i % 2 == 0 ? Speaker::User : Speaker::Agent,
                                  std::move(history_texts[i])});
  }
  s.utterance = std::move(current);
  return s;
}

Vocabulary vocab_for(const std::vector<DialogueSample>& samples) {
  std::vector<const DialogueSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return Vocabulary::build(ptrs);
}

Var random_param(std::vector<int> shape, double bound, Rng& rng, const std::string& name = "") {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return make_param(std::move(shape), std::move(data), name);
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits on whitespace and punctuation") {
  const auto toks = tokenize_text("Book, a FLIGHT to N.Y.C.!");
  REQUIRE(toks.size() == 7);
  CHECK(toks[0] == "book");
  CHECK(toks[1] == "a");
  CHECK(toks[2] == "flight");
  CHECK(toks[3] == "to");
  CHECK(toks[4] == "n");
  CHECK(toks[6] == "c");
}

TEST_CASE("vocabulary orders by frequency then lexicographically, reserved ids first") {
  auto s1 = sample_with({}, "alpha beta beta gamma");
  auto s2 = sample_with({}, "beta gamma delta");
  Vocabulary v = vocab_for({s1, s2});
  CHECK(v.id_of("<pad>") == Vocabulary::kPadId);
  CHECK(v.id_of("<unk>") == Vocabulary::kUnkId);
  CHECK(v.id_of("<sep>") == Vocabulary::kSepId);
  // frequencies: user: x2? markers counted once per sample's current turn
  // beta appears 3 times, gamma 2, alpha/delta once (alpha < delta)
  CHECK(v.id_of("beta") < v.id_of("gamma"));
  CHECK(v.id_of("gamma") < v.id_of("alpha"));
  CHECK(v.id_of("alpha") < v.id_of("delta"));
  CHECK(v.id_of("nonexistent") == Vocabulary::kUnkId);
}

TEST_CASE("vocabulary file round-trips through save and load") {
  auto s1 = sample_with({"hello there"}, "book a flight please");
  Vocabulary v = vocab_for({s1});
  const std::string path = (std::filesystem::temp_directory_path() / "caro_vocab_test.txt").string();
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  REQUIRE(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.token_of(i) == v.token_of(i));
  std::remove(path.c_str());
}

TEST_CASE("a single utterance occupies the window front with padding behind") {
  auto s = sample_with({}, "book flight");
  Vocabulary v = vocab_for({s});
  TokenWindow w = build_token_window(s, v, 8);
  CHECK(w.unmasked_count() == 2);
  CHECK(w.mask[0]);
  CHECK(w.mask[1]);
  for (int i = 2; i < 8; ++i) {
    CHECK(!w.mask[i]);
    CHECK(w.ids[i] == Vocabulary::kPadId);
  }
  CHECK(v.token_of(w.ids[0]) == "book");
  CHECK(v.token_of(w.ids[1]) == "flight");
}

TEST_CASE("history turns carry speaker markers and separators") {
  auto s = sample_with({"hello", "how can i help"}, "book flight");
  Vocabulary v = vocab_for({s});
  TokenWindow w = build_token_window(s, v, 16);
  CHECK(v.token_of(w.ids[0]) == "user:");
  CHECK(v.token_of(w.ids[1]) == "hello");
  CHECK(v.token_of(w.ids[2]) == "<sep>");
  CHECK(v.token_of(w.ids[3]) == "agent:");
}

TEST_CASE("long dialogues truncate from the front and keep the current utterance whole") {
  std::vector<std::string> history;
  for (int i = 0; i < 7; ++i) history.push_back("turn number " + std::to_string(i));
  auto s = sample_with(history, "final request please now");
  Vocabulary v = vocab_for({s});
  TokenWindow w = build_token_window(s, v, 10);
  CHECK(w.unmasked_count() == 10);
  // last four slots hold the current utterance
  CHECK(v.token_of(w.ids[6]) == "final");
  CHECK(v.token_of(w.ids[7]) == "request");
  CHECK(v.token_of(w.ids[8]) == "please");
  CHECK(v.token_of(w.ids[9]) == "now");
}

TEST_CASE("a current utterance longer than the window is itself front-truncated") {
  auto s = sample_with({}, "one two three four five");
  Vocabulary v = vocab_for({s});
  TokenWindow w = build_token_window(s, v, 3);
  CHECK(v.token_of(w.ids[0]) == "three");
  CHECK(v.token_of(w.ids[2]) == "five");
}

TEST_CASE("unknown words embed through the unknown token with a true mask") {
  auto known = sample_with({}, "book flight");
  Vocabulary v = vocab_for({known});
  auto s = sample_with({}, "book sprocket");
  TokenWindow w = build_token_window(s, v, 4);
  CHECK(w.ids[1] == Vocabulary::kUnkId);
  CHECK(w.mask[1]);
}

TEST_CASE("empty samples are rejected") {
  auto s = sample_with({}, "...!?");
  Vocabulary v;
  CHECK_THROWS_AS(build_token_window(s, v, 4), std::invalid_argument);
}

TEST_CASE("global pool of a single real token returns that embedding") {
  Var e = make_const({3, 2}, {1.5, -2.0, 9.0, 9.0, 9.0, 9.0});
  Var pooled = global_pool(e, {true, false, false});
  CHECK(pooled->value[0] == doctest::Approx(1.5));
  CHECK(pooled->value[1] == doctest::Approx(-2.0));
}

TEST_CASE("global pool averages only unmasked rows") {
  Var e = make_const({3, 2}, {1.0, 3.0, 3.0, 1.0, 0.0, 0.0});
  Var pooled = global_pool(e, {true, true, false});
  CHECK(pooled->value[0] == doctest::Approx(2.0));
  CHECK(pooled->value[1] == doctest::Approx(2.0));
}

TEST_CASE("global pool ignores garbage in padding rows") {
  Var clean = make_const({3, 2}, {1.0, 3.0, 3.0, 1.0, 0.0, 0.0});
  Var dirty = make_const({3, 2}, {1.0, 3.0, 3.0, 1.0, 77.0, -55.0});
  const std::vector<bool> mask = {true, true, false};
  Var a = global_pool(clean, mask);
  Var b = global_pool(dirty, mask);
  CHECK(a->value[0] == b->value[0]);
  CHECK(a->value[1] == b->value[1]);
  CHECK_THROWS_AS(global_pool(clean, std::vector<bool>(3, false)), std::invalid_argument);
}

TEST_CASE("adaptive field with zero weights reduces to global pooling") {
  Rng rng(31);
  const int n = 4, m = 3;
  Var e = random_param({n, m}, 1.0, rng);
  const std::vector<bool> mask = {true, true, true, false};
  AdaptiveFieldParams field;
  field.r1 = 2;
  field.w1 = make_const({2, n * m}, std::vector<double>(2 * n * m, 0.0));
  field.row_w = random_param({n, 2}, 1.0, rng);
  Var v2 = adaptive_field(e, mask, field);
  Var v1 = global_pool(e, mask);
  for (int j = 0; j < m; ++j) {
    CHECK(std::abs(v2->value[j] - v1->value[j]) < 1e-12);
  }
}

TEST_CASE("adaptive field of a single real token returns that embedding") {
  Rng rng(32);
  const int n = 4, m = 3;
  Var e = random_param({n, m}, 1.0, rng);
  const std::vector<bool> mask = {false, true, false, false};
  AdaptiveFieldParams field;
  field.r1 = 2;
  field.w1 = random_param({2, n * m}, 1.0, rng);
  field.row_w = random_param({n, 2}, 1.0, rng);
  Var v2 = adaptive_field(e, mask, field);
  for (int j = 0; j < m; ++j) {
    CHECK(v2->value[j] == doctest::Approx(e->value[1 * m + j]).epsilon(1e-12));
  }
}

TEST_CASE("adaptive field matches a straight-line oracle") {
  Rng rng(33);
  const int n = 4, m = 3, r1 = 2;
  Var e = random_param({n, m}, 1.2, rng);
  const std::vector<bool> mask = {true, true, true, true};
  AdaptiveFieldParams field;
  field.r1 = r1;
  field.w1 = random_param({r1, n * m}, 0.8, rng);
  field.row_w = random_param({n, r1}, 0.8, rng);
  Var alpha_node;
  Var v2 = adaptive_field(e, mask, field, &alpha_node);

  // explicit concat, matrix products, sigmoid, softmax, weighted sum
  std::vector<double> s(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n * m; ++i) s[static_cast<std::size_t>(i)] = e->value[i];
  std::vector<double> hidden(r1, 0.0);
  for (int r = 0; r < r1; ++r) {
    for (int i = 0; i < n * m; ++i) hidden[r] += field.w1->value[r * n * m + i] * s[i];
    hidden[r] = std::max(0.0, hidden[r]);
  }
  std::vector<double> alpha(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int r = 0; r < r1; ++r) dot += field.row_w->value[i * r1 + r] * hidden[r];
    alpha[i] = 1.0 / (1.0 + std::exp(-dot));
  }
  double denom = 0.0;
  std::vector<double> weights(n);
  double mx = *std::max_element(alpha.begin(), alpha.end());
  for (int i = 0; i < n; ++i) {
    weights[i] = std::exp(alpha[i] - mx);
    denom += weights[i];
  }
  for (int i = 0; i < n; ++i) weights[i] /= denom;
  std::vector<double> expected(m, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) expected[j] += weights[i] * e->value[i * m + j];
  }
  for (int j = 0; j < m; ++j) CHECK(v2->value[j] == doctest::Approx(expected[j]).epsilon(1e-10));
  for (int i = 0; i < n; ++i) {
    CHECK(alpha_node->value[i] == doctest::Approx(weights[i]).epsilon(1e-10));
  }
}

TEST_CASE("adaptive field weights sum to one with zero weight on padding") {
  Rng rng(34);
  const int n = 6, m = 4;
  Var e = random_param({n, m}, 1.0, rng);
  const std::vector<bool> mask = {true, true, true, true, false, false};
  AdaptiveFieldParams field;
  field.r1 = 3;
  field.w1 = random_param({3, n * m}, 1.0, rng);
  field.row_w = random_param({n, 3}, 1.0, rng);
  Var alpha;
  adaptive_field(e, mask, field, &alpha);
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += alpha->value[i];
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(alpha->value[4] == 0.0);
  CHECK(alpha->value[5] == 0.0);
}

TEST_CASE("permuting real tokens never changes the pooled view but changes the adaptive one") {
  Rng rng(35);
  const int n = 4, m = 3;
  int adaptive_changed = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> data(shape_numel({n, m}));
    for (double& v : data) v = rng.uniform(-1.0, 1.0);
    std::vector<double> permuted = data;  // swap rows 0 and 2
    for (int j = 0; j < m; ++j) std::swap(permuted[0 * m + j], permuted[2 * m + j]);
    const std::vector<bool> mask(n, true);
    AdaptiveFieldParams field;
    field.r1 = 2;
    field.w1 = random_param({2, n * m}, 1.0, rng);
    field.row_w = random_param({n, 2}, 1.0, rng);

    Var a = make_const({n, m}, data);
    Var b = make_const({n, m}, permuted);
    Var pool_a = global_pool(a, mask);
    Var pool_b = global_pool(b, mask);
    for (int j = 0; j < m; ++j) CHECK(pool_a->value[j] == doctest::Approx(pool_b->value[j]));
    Var field_a = adaptive_field(a, mask, field);
    Var field_b = adaptive_field(b, mask, field);
    double diff = 0.0;
    for (int j = 0; j < m; ++j) diff += std::abs(field_a->value[j] - field_b->value[j]);
    if (diff > 1e-6) ++adaptive_changed;
  }
  CHECK(adaptive_changed >= 5);  // order sensitivity holds in general
}

TEST_CASE("aggregation with a zero output map averages the views") {
  Rng rng(36);
  const int m = 4;
  Var v1 = random_param({m}, 1.0, rng);
  Var v2 = random_param({m}, 1.0, rng);
  AggregationGateParams gate;
  gate.r2 = 3;
  gate.w2 = random_param({3, m}, 1.0, rng);
  gate.w3 = make_const({m, 3}, std::vector<double>(m * 3, 0.0));
  Var v = aggregate_views(v1, v2, gate);
  for (int j = 0; j < m; ++j) {
    CHECK(std::abs(v->value[j] - 0.5 * (v1->value[j] + v2->value[j])) < 1e-12);
  }
}

TEST_CASE("aggregating identical views returns the view for any gate") {
  Rng rng(37);
  const int m = 5;
  Var v1 = random_param({m}, 1.0, rng);
  AggregationGateParams gate;
  gate.r2 = 4;
  gate.w2 = random_param({4, m}, 2.0, rng);
  gate.w3 = random_param({m, 4}, 2.0, rng);
  Var v = aggregate_views(v1, v1, gate);
  for (int j = 0; j < m; ++j) CHECK(v->value[j] == doctest::Approx(v1->value[j]).epsilon(1e-12));
}

TEST_CASE("aggregation matches an independent elementwise oracle") {
  Rng rng(38);
  const int m = 4, r2 = 3;
  Var v1 = random_param({m}, 1.0, rng);
  Var v2 = random_param({m}, 1.0, rng);
  AggregationGateParams gate;
  gate.r2 = r2;
  gate.w2 = random_param({r2, m}, 1.0, rng);
  gate.w3 = random_param({m, r2}, 1.0, rng);
  Var beta_node;
  Var v = aggregate_views(v1, v2, gate, &beta_node);

  std::vector<double> u(m);
  for (int j = 0; j < m; ++j) u[j] = v1->value[j] + v2->value[j];
  std::vector<double> hidden(r2, 0.0);
  for (int r = 0; r < r2; ++r) {
    for (int j = 0; j < m; ++j) hidden[r] += gate.w2->value[r * m + j] * u[j];
    hidden[r] = std::max(0.0, hidden[r]);
  }
  for (int j = 0; j < m; ++j) {
    double dot = 0.0;
    for (int r = 0; r < r2; ++r) dot += gate.w3->value[j * r2 + r] * hidden[r];
    const double beta = 1.0 / (1.0 + std::exp(-dot));
    const double expected = beta * v1->value[j] + (1.0 - beta) * v2->value[j];
    CHECK(v->value[j] == doctest::Approx(expected).epsilon(1e-10));
    CHECK(beta_node->value[j] == doctest::Approx(beta).epsilon(1e-10));
  }
}

TEST_CASE("aggregation output lies between the views coordinatewise") {
  Rng rng(39);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 4;
    Var v1 = random_param({m}, 2.0, rng);
    Var v2 = random_param({m}, 2.0, rng);
    AggregationGateParams gate;
    gate.r2 = 3;
    gate.w2 = random_param({3, m}, 2.0, rng);
    gate.w3 = random_param({m, 3}, 2.0, rng);
    Var v = aggregate_views(v1, v2, gate);
    for (int j = 0; j < m; ++j) {
      const double lo = std::min(v1->value[j], v2->value[j]);
      const double hi = std::max(v1->value[j], v2->value[j]);
      CHECK(v->value[j] >= lo - 1e-12);
      CHECK(v->value[j] <= hi + 1e-12);
    }
  }
}
