#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "evchain/qa.hpp"

using namespace evchain;

namespace {

QaConfig tiny_config() {
  QaConfig c;
  c.embedding_dim = 3;
  c.hidden_dim = 3;
  return c;
}

std::vector<QaContentEvent> chain_of(const std::vector<std::string>& lemmas) {
  std::vector<QaContentEvent> out;
  for (std::size_t i = 0; i < lemmas.size(); ++i) out.push_back({lemmas[i], {0, static_cast<int>(i)}});
  return out;
}

// Random orderings of a small lemma pool; "before X" answers are the events
// ahead of X in the chain, "after X" the ones behind it.
std::vector<QaExample> ordering_questions(int count, std::uint64_t seed) {
  const std::vector<std::string> pool = {"arrive", "argue", "leave", "vote", "win", "lose", "sign", "meet"};
  nn::Rng rng(seed);
  std::vector<QaExample> out;
  for (int n = 0; n < count; ++n) {
    std::vector<std::string> lemmas = pool;
    rng.shuffle(lemmas);
    lemmas.resize(3 + rng.below(4));
    const std::size_t pivot = rng.below(lemmas.size());
    const bool before = rng.bernoulli(0.5);
    QaExample e;
    e.question = {"what", "happened", before ? "before" : "after", "the", lemmas[pivot]};
    e.content = chain_of(lemmas);
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
      if (before ? i < pivot : i > pivot) e.gold.insert({0, static_cast<int>(i)});
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_SUITE("qa") {

TEST_CASE("input construction") {
  const QaInput in = build_input({"what", "happened", "before", "the", "vote"}, {"a", "b", "c"});
  CHECK(in.tokens.size() == 9);
  CHECK(in.separator == 5);
  CHECK(in.tokens[5] == kSeparatorSymbol);
  CHECK(in.content_offset == 6);
  CHECK_THROWS_AS(build_input({"what"}, {}), std::invalid_argument);
  CHECK_THROWS_AS(build_input({}, {"a"}), std::invalid_argument);
}

TEST_CASE("answer thresholds") {
  const auto ex = ordering_questions(1, 1)[0];
  QaModel m = QaModel::create(tiny_config(), Vocabulary({std::string(kSeparatorSymbol)}));
  m.head_w->value.setZero();
  m.head_b->value.setZero();
  CHECK(answer(m, ex.question, ex.content).empty());
  m.head_b->value(0, 0) = 50.0;
  CHECK(answer(m, ex.question, ex.content).size() == ex.content.size());
  CHECK(answer(m, ex.question, {}).empty());
}

TEST_CASE("answer metrics") {
  const TokenRef a{0, 0}, b{0, 1}, c{0, 2};
  CHECK(answer_f1({a, b}, {a, b}) == 1.0);
  CHECK(answer_f1({a}, {b, c}) == 0.0);
  CHECK(answer_f1({a, b}, {b, c}) == doctest::Approx(0.5));
  CHECK(answer_f1({}, {}) == 1.0);
  CHECK(answer_f1({}, {a}) == 0.0);
  const QaMetrics m = qa_metrics({{a, b}, {a}}, {{a, b}, {b}}, {QaCategory::kBefore, QaCategory::kAfter});
  CHECK(m.macro_f1 == doctest::Approx(0.5));
  CHECK(m.exact_match == doctest::Approx(0.5));
  CHECK(m.category_f1[0] == 1.0);
  CHECK(m.category_count[2] == 0);
  const auto j = to_json(m);
  CHECK(j["per_category"]["Co-occurring"].is_null());
  CHECK(j["per_category"]["After"] == 0.0);
  CHECK_THROWS_AS(qa_metrics({{a}}, {}, {}), std::invalid_argument);
}

TEST_CASE("prefix categorization") {
  const PrefixTable t = PrefixTable::standard();
  CHECK(t.size() == 8);
  CHECK(t.categorize("What happened before the snow started?") == QaCategory::kBefore);
  CHECK(t.categorize("What events have begun?") == QaCategory::kOther);
  CHECK(t.categorize("What happened after the trial?") == QaCategory::kAfter);
  CHECK(t.categorize("what WILL happen after it") == QaCategory::kAfter);
  CHECK(t.categorize("What happened during the storm") == QaCategory::kCooccurring);
  CHECK(t.categorize("What happened beforehand") == QaCategory::kOther);
  CHECK(t.categorize("") == QaCategory::kOther);

  PrefixTable longer = PrefixTable::standard();
  longer.add("What happened after the vote", QaCategory::kCooccurring);
  CHECK(longer.categorize("What happened after the vote passed") == QaCategory::kCooccurring);
  CHECK(longer.categorize("What happened after the trial") == QaCategory::kAfter);
}

TEST_CASE("prefix files") {
  const auto path = std::filesystem::temp_directory_path() / "evchain_prefixes.tsv";
  {
    std::ofstream out(path);
    out << "# custom\n\nWhat began before\tBefore\nWhat ended\tAfter\n";
  }
  const PrefixTable t = PrefixTable::load(path);
  CHECK(t.size() == 2);
  CHECK(t.categorize("What ended first?") == QaCategory::kAfter);
  {
    std::ofstream out(path);
    out << "What began before\tSometime\n";
  }
  try {
    PrefixTable::load(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 1);
  }
  std::filesystem::remove(path);
}

TEST_CASE("qa loss passes grad_check") {
  const auto ex = ordering_questions(2, 3);
  for (bool match : {true, false}) {
    QaConfig c = tiny_config();
    c.match_feature = match;
    c.epochs = 0;
    QaModel m = train_qa(ex, c);
    nn::Rng rng(4);
    m.params.init_uniform(rng, 0.5);
    const auto r = nn::grad_check([&](nn::Graph& g) { return m.loss(g, ex[1]); }, m.params);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("zero epochs returns the initialization") {
  QaConfig c = tiny_config();
  c.epochs = 0;
  const QaModel m = train_qa(ordering_questions(3, 2), c);
  CHECK(m.params.equals(QaModel::create(c, m.vocab).params));
  CHECK_THROWS_AS(train_qa({}, c), std::invalid_argument);
}

TEST_CASE("learns temporal ordering questions") {
  const auto train = ordering_questions(400, 11);
  QaConfig c;
  c.epochs = 25;
  c.learning_rate = 1e-2;
  const QaModel m = train_qa(train, c);

  const std::vector<QaExample> small(train.begin(), train.begin() + 40);
  CHECK(evaluate_qa(m, small, PrefixTable::standard()).exact_match == 1.0);

  const auto content = chain_of({"arrive", "argue", "vote", "leave"});
  const AnswerSet got = answer(m, {"what", "happened", "before", "the", "vote"}, content);
  CHECK(got == AnswerSet{{0, 0}, {0, 1}});
}

TEST_CASE("example and checkpoint round trips") {
  const auto ex = ordering_questions(1, 5)[0];
  const QaExample back = qa_example_from_json(nlohmann::json::parse(to_json(ex).dump()));
  CHECK(back.question == ex.question);
  CHECK(back.gold == ex.gold);
  CHECK(back.content.size() == ex.content.size());

  QaConfig c = tiny_config();
  c.epochs = 1;
  const QaModel m = train_qa(ordering_questions(5, 5), c);
  const QaModel m2 = QaModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(m2.params.equals(m.params));
}

}
