#include <doctest.h>

#include "evchain/discourse.hpp"

using namespace evchain;

namespace {

DiscourseConfig tiny_config(bool aware = true) {
  DiscourseConfig c;
  c.embedding_dim = 3;
  c.word_hidden = 2;
  c.sentence_hidden = 2;
  c.attention_dim = 2;
  c.classifier_hidden = 3;
  c.salience_aware = aware;
  return c;
}

Document three_by_four() {
  Document d = make_document("g", {{"storm", "hit", "the", "coast"},
                                   {"critics", "blamed", "the", "mayor"},
                                   {"crews", "cleared", "the", "roads"}});
  d.events = {make_event(d, {0, 1}), make_event(d, {1, 1}), make_event(d, {2, 1}), make_event(d, {2, 3})};
  d.gold = GoldBundle{};
  d.gold->discourse = std::vector<DiscourseLabel>{DiscourseLabel::kM1, DiscourseLabel::kD3, DiscourseLabel::kM2};
  return d;
}

DiscourseModel random_model(const std::vector<Document>& docs, bool aware, std::uint64_t seed = 3) {
  Vocabulary v;
  for (const Document& d : docs) {
    for (const auto& s : d.sentences) {
      for (const Token& t : s) v.add(t.lemma);
    }
  }
  DiscourseModel m = DiscourseModel::create(tiny_config(aware), v);
  nn::Rng rng(seed);
  m.params.init_uniform(rng, 0.5);
  return m;
}

nn::Vector state(const DiscourseModel& m, const std::vector<Token>& sentence, std::size_t i) {
  nn::Graph g;
  return g.value(m.word_states(g, sentence)[i]).col(0);
}

}  // namespace

TEST_SUITE("discourse") {

TEST_CASE("sentence encoding") {
  const Document doc = three_by_four();
  const DiscourseModel m = random_model({doc}, true);
  SUBCASE("one token") {
    const Document one = make_document("o", {{"storm"}});
    CHECK(sentence_encoding(m, one.sentences[0]).isApprox(state(m, one.sentences[0], 0), 1e-14));
  }
  SUBCASE("identical states pool to themselves") {
    const Document one = make_document("o", {{"storm"}});
    const nn::Vector h = state(m, one.sentences[0], 0);
    const std::vector<nn::Vector> same(3, h);
    CHECK(nn::attend(m.word_attention, same).isApprox(h, 1e-12));
  }
  SUBCASE("two tokens by hand") {
    const Document two = make_document("t", {{"storm", "hit"}});
    const nn::Vector h0 = state(m, two.sentences[0], 0), h1 = state(m, two.sentences[0], 1);
    auto score = [&](const nn::Vector& h) {
      return (m.word_attention.v->value * (m.word_attention.w->value * h + m.word_attention.b->value).array().tanh().matrix())(0, 0);
    };
    const double e0 = std::exp(score(h0)), e1 = std::exp(score(h1));
    const nn::Vector expected = (e0 * h0 + e1 * h1) / (e0 + e1);
    CHECK(sentence_encoding(m, two.sentences[0]).isApprox(expected, 1e-12));
  }
  SUBCASE("empty sentence") {
    CHECK_THROWS_AS(sentence_encoding(m, {}), std::invalid_argument);
  }
}

TEST_CASE("salient event encoding") {
  const Document doc = three_by_four();
  const DiscourseModel m = random_model({doc}, true);
  const auto& s = doc.sentences[2];
  CHECK(salient_event_encoding(m, s, {}).isZero());
  CHECK(salient_event_encoding(m, s, {1}).isApprox(state(m, s, 1), 1e-14));
  const nn::Vector mean = (state(m, s, 1) + state(m, s, 3)) / 2.0;
  CHECK(salient_event_encoding(m, s, {1, 3}).isApprox(mean, 1e-14));
  CHECK_THROWS_AS(salient_event_encoding(m, s, {4}), std::out_of_range);
}

TEST_CASE("salient heads by sentence") {
  const Document doc = three_by_four();
  const auto heads = salient_heads_by_sentence(doc, {true, false, true, true});
  CHECK(heads == std::vector<std::vector<int>>{{1}, {}, {1, 3}});
  CHECK_THROWS_AS(salient_heads_by_sentence(doc, {true}), std::invalid_argument);
}

TEST_CASE("keep-set filtering") {
  using L = DiscourseLabel;
  CHECK(filter_by_discourse({L::kM1, L::kD3}) == std::vector<int>{0});
  CHECK(filter_by_discourse({L::kD1, L::kD1}).empty());
  CHECK(filter_by_discourse({L::kC2, L::kC2, L::kC2}) == std::vector<int>{0, 1, 2});
}

TEST_CASE("classification report") {
  using L = DiscourseLabel;
  const auto r = classification_report({L::kM1, L::kM1, L::kD1, L::kC2}, {L::kM1, L::kD1, L::kD1, L::kC2});
  CHECK(r.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class_f1[4] == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class_f1[3] == 1.0);
  CHECK(r.per_class_f1[1] == 1.0);
  CHECK(r.macro_f1 == doctest::Approx((2.0 / 3.0 * 2 + 6.0) / 8.0));
  CHECK(r.micro_f1 == doctest::Approx(0.75));
  CHECK_THROWS_AS(classification_report({L::kM1}, {}), std::invalid_argument);
}

TEST_CASE("discourse loss passes grad_check through both paths") {
  const Document doc = three_by_four();
  const auto heads = salient_heads_by_sentence(doc, {true, false, true, true});
  for (bool aware : {true, false}) {
    DiscourseModel m = random_model({doc}, aware);
    const auto r = nn::grad_check([&](nn::Graph& g) { return m.loss(g, doc, heads, *doc.gold->discourse); }, m.params);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("salience flags only matter to the aware parser") {
  const Document doc = three_by_four();
  const DiscourseModel base = random_model({doc}, false);
  const DiscourseModel aware = random_model({doc}, true);
  const std::vector<bool> none(4, false), all(4, true);
  CHECK(classify_document(base, doc, none).probabilities[2].isApprox(classify_document(base, doc, all).probabilities[2]));
  CHECK_FALSE(classify_document(aware, doc, none).probabilities[2].isApprox(classify_document(aware, doc, all).probabilities[2]));
}

TEST_CASE("training") {
  SyntheticConfig sc;
  sc.num_docs = 20;
  const auto docs = generate_synthetic(sc);
  std::vector<std::vector<bool>> flags;
  for (const Document& d : docs) flags.push_back(*d.gold->salience);

  SUBCASE("zero epochs") {
    DiscourseConfig c = tiny_config();
    c.epochs = 0;
    const DiscourseModel m = train_discourse(docs, flags, c);
    CHECK(m.params.equals(DiscourseModel::create(c, m.vocab).params));
  }
  SUBCASE("overfits twenty documents") {
    DiscourseConfig c;
    c.epochs = 500;
    std::vector<ClassificationReport> history;
    const DiscourseModel m = train_discourse(docs, flags, c, &history);
    REQUIRE(history.size() == 500);
    bool perfect = false;
    for (const ClassificationReport& r : history) perfect = perfect || r.micro_f1 == 1.0;
    CHECK(perfect);
    CHECK(evaluate_discourse(m, docs, flags).micro_f1 == 1.0);
  }
  SUBCASE("missing gold labels") {
    Document bare = docs[0];
    bare.gold->discourse.reset();
    CHECK_THROWS_AS(train_discourse({bare}, {flags[0]}, tiny_config()), std::invalid_argument);
  }
}

TEST_CASE("checkpoint round trip") {
  const Document doc = three_by_four();
  const DiscourseModel m = random_model({doc}, true);
  const DiscourseModel back = DiscourseModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(classify_document(back, doc, {true, true, false, false}).labels ==
        classify_document(m, doc, {true, true, false, false}).labels);
  CHECK_THROWS(DiscourseModel::from_json({{"kind", "qa"}}));
}

}
