#include <doctest.h>

#include <cmath>

#include "evchain/event_lm.hpp"

using namespace evchain;

namespace {

using Window = std::vector<std::string>;

MlmConfig tiny_config() {
  MlmConfig c;
  c.embedding_dim = 4;
  c.hidden_dim = 3;
  return c;
}

// a -> b -> ... -> h -> a, repeated.
std::vector<Window> cycle_windows() {
  const std::vector<std::string> letters = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::vector<std::string> chain;
  for (int i = 0; i < 40; ++i) chain.push_back(letters[static_cast<std::size_t>(i % 8)]);
  return make_windows(chain);
}

MaskedEventLM trained_cycle_model() {
  MlmConfig c;
  c.epochs = 150;
  c.learning_rate = 2e-2;
  return train_mlm(cycle_windows(), c);
}

}  // namespace

TEST_SUITE("event_lm") {

TEST_CASE("windows") {
  const std::vector<std::string> seven = {"a", "b", "c", "d", "e", "f", "g"};
  CHECK(make_windows(seven).size() == 3);
  CHECK(make_windows(seven)[2] == Window{"c", "d", "e", "f", "g"});
  CHECK(make_windows({"a", "b", "c", "d"}).empty());
  CHECK(make_windows({"a", "b", "c", "d", "e"}) == std::vector<Window>{{"a", "b", "c", "d", "e"}});
  CHECK_THROWS_AS(make_windows(seven, 1), std::invalid_argument);
}

TEST_CASE("vocabulary") {
  const Vocabulary v = event_vocabulary({{"x", "y", "x", "z", "y"}});
  CHECK(v.word(1) == kPadSymbol);
  CHECK(v.word(2) == kMaskSymbol);
  CHECK(v.size() == 6);
  CHECK(v.id("never") == 0);
}

TEST_CASE("zeroed output gives a uniform distribution") {
  MaskedEventLM m = MaskedEventLM::create(tiny_config(), event_vocabulary(cycle_windows()));
  m.output_w->value.setZero();
  m.output_b->value.setZero();
  const nn::Vector p = next_event_distribution(m, {"a", "b", "c", "d"});
  const double u = 1.0 / static_cast<double>(m.vocab.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(u).epsilon(1e-15));
  CHECK_THROWS_AS(next_event_distribution(m, {"a"}), std::invalid_argument);
}

TEST_CASE("initial loss is about ln |V|") {
  MlmConfig c = tiny_config();
  c.epochs = 0;
  const MaskedEventLM m = train_mlm(cycle_windows(), c);
  CHECK(m.params.equals(MaskedEventLM::create(c, m.vocab).params));
  double total = 0.0;
  for (const Window& w : cycle_windows()) {
    nn::Graph g;
    total += g.scalar_value(m.loss(g, w, 2));
  }
  CHECK(total / static_cast<double>(cycle_windows().size()) ==
        doctest::Approx(std::log(static_cast<double>(m.vocab.size()))).epsilon(0.05));
}

TEST_CASE("lm loss passes grad_check") {
  MaskedEventLM m = MaskedEventLM::create(tiny_config(), event_vocabulary(cycle_windows()));
  nn::Rng rng(6);
  m.params.init_uniform(rng, 0.5);
  for (int p : {0, 4}) {
    const auto r = nn::grad_check([&](nn::Graph& g) { return m.loss(g, cycle_windows()[1], p); }, m.params);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("deterministic chains are learned") {
  const MaskedEventLM m = trained_cycle_model();
  CHECK(masked_accuracy(m, cycle_windows()) == 1.0);
  Eigen::Index best = 0;
  next_event_distribution(m, {"a", "b", "c", "d"}).maxCoeff(&best);
  CHECK(m.vocab.word(static_cast<int>(best)) == "e");

  const ClozeDecision right_a = cloze_choose(m, {"a", "b", "c", "d"}, {"e"}, {"b"});
  CHECK(right_a.choice == 'A');
  CHECK(cloze_choose(m, {"a", "b", "c", "d"}, {"g"}, {"h", "e"}).choice == 'B');
}

TEST_CASE("cloze tie rules") {
  const MaskedEventLM m = MaskedEventLM::create(tiny_config(), event_vocabulary(cycle_windows()));
  const ClozeDecision empty = cloze_choose(m, {"a", "b", "c", "d"}, {}, {});
  CHECK(empty.choice == 'A');
  CHECK(empty.score_a == 0.0);
  CHECK(empty.score_b == 0.0);
  CHECK(cloze_choose(m, {"a", "b", "c", "d"}, {"f"}, {"f"}).choice == 'A');
  const EndingClassifier zero;
  ClozeStory same{{"a", "b", "c", "d"}, {"f"}, {"f"}, 'B'};
  CHECK(zero.classify(m, same).choice == 'A');
}

TEST_CASE("ending features") {
  Vocabulary v = event_vocabulary({{"x", "y", "z"}});
  nn::Vector p = nn::Vector::Zero(v.size());
  p(v.id("x")) = 0.6;
  p(v.id("y")) = 0.3;
  const nn::Vector f = ending_features(p, v, {"x", "z"}, {"y"});
  CHECK(f(0) == doctest::Approx(0.6));
  CHECK(f(1) == doctest::Approx((0.6 + 1e-7) / 2));
  CHECK(f(2) == doctest::Approx(std::log(0.6) - std::log(0.3)));
}

TEST_CASE("ending classifier") {
  const MaskedEventLM m = trained_cycle_model();
  const std::vector<std::string> letters = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::vector<ClozeStory> dev;
  for (int s = 0; s < 16; ++s) {
    ClozeStory story;
    for (int k = 0; k < 4; ++k) story.context_events.push_back(letters[static_cast<std::size_t>((s + k) % 8)]);
    const std::string right = letters[static_cast<std::size_t>((s + 4) % 8)];
    const std::string wrong = letters[static_cast<std::size_t>((s + 6) % 8)];
    story.gold = s % 2 == 0 ? 'A' : 'B';
    story.ending_a_events = {s % 2 == 0 ? right : wrong};
    story.ending_b_events = {s % 2 == 0 ? wrong : right};
    dev.push_back(story);
  }
  const EndingClassifier clf = train_ending_classifier(m, dev);
  CHECK(cloze_accuracy(m, clf, dev) == 1.0);
  CHECK(cloze_accuracy(m, dev) == 1.0);
  CHECK_THROWS_AS(train_ending_classifier(m, {}), std::invalid_argument);
  const EndingClassifier back = EndingClassifier::from_json(clf.to_json());
  CHECK(back.weights == clf.weights);
}

TEST_CASE("training is deterministic per seed") {
  MlmConfig c = tiny_config();
  c.epochs = 2;
  CHECK(train_mlm(cycle_windows(), c).params.equals(train_mlm(cycle_windows(), c).params));
  MlmConfig d = c;
  d.seed = c.seed + 1;
  CHECK_FALSE(train_mlm(cycle_windows(), c).params.equals(train_mlm(cycle_windows(), d).params));
  CHECK_THROWS_AS(train_mlm({}, c), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  MaskedEventLM m = MaskedEventLM::create(tiny_config(), event_vocabulary(cycle_windows()));
  nn::Rng rng(1);
  m.params.init_uniform(rng, 0.4);
  const MaskedEventLM back = MaskedEventLM::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(next_event_distribution(back, {"a", "b", "c", "d"}) == next_event_distribution(m, {"a", "b", "c", "d"}));
}

}
