#include <doctest.h>

#include <sstream>

#include "evchain/corpus.hpp"

using namespace evchain;

namespace {

Document three_event_doc() {
  Document d = make_document("d1", {{"police", "detained", "a", "man"}, {"officials", "said", "he", "fled"}});
  d.events = {make_event(d, {0, 1}), make_event(d, {1, 1}), make_event(d, {1, 3})};
  d.entities = {make_entity(d, {0, 0})};
  return d;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("lemmatizer") {
  CHECK(lemmatize("detained") == "detain");
  CHECK(lemmatize("said") == "say");
  CHECK(lemmatize("snow") == "snow");
  CHECK(lemmatize("Studies") == "study");
  CHECK(lemmatize("marching") == "march");
  CHECK(lemmatize("protests") == "protest");
}

TEST_CASE("reading documents") {
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK(read_documents(in).empty());
  }
  SUBCASE("one record") {
    std::ostringstream out;
    write_documents(out, {three_event_doc()});
    std::istringstream in(out.str());
    const auto docs = read_documents(in);
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].sentences.size() == 2);
    CHECK(docs[0].events.size() == 3);
    CHECK(docs[0].events[2].lemma == "flee");
  }
  SUBCASE("head past the end of its sentence") {
    std::istringstream in(
        "{\"doc_id\":\"a\",\"sentences\":[[\"x\"]],\"events\":[],\"entities\":[]}\n"
        "{\"doc_id\":\"b\",\"sentences\":[[\"x\",\"y\"]],\"events\":[{\"sent\":0,\"tok\":5,\"span_start\":5,"
        "\"span_end\":6}],\"entities\":[]}\n");
    try {
      read_documents(in);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("document json round trip keeps gold") {
  Document d = three_event_doc();
  d.gold = GoldBundle{};
  d.gold->relations = std::vector<std::pair<int, int>>{{0, 2}};
  d.gold->salience = std::vector<bool>{true, false, true};
  d.gold->discourse = std::vector<DiscourseLabel>{DiscourseLabel::kM1, DiscourseLabel::kD3};
  d.gold->abstract = std::vector<std::string>{"man", "detained"};
  d.gold->qa = std::vector<QaItem>{{{"what", "happened", "before"}, {0}}};
  const Document back = document_from_json(nlohmann::json::parse(to_json(d).dump()));
  CHECK(to_json(back) == to_json(d));
}

TEST_CASE("events in text order") {
  Document d = three_event_doc();
  std::swap(d.events[0], d.events[2]);
  CHECK(d.events_in_text_order() == std::vector<int>{2, 1, 0});
}

TEST_CASE("abstract-derived salience labels") {
  Document d = make_document("d", {{"police", "detained", "him", "and", "said", "so"}});
  d.events = {make_event(d, {0, 1}), make_event(d, {0, 4})};
  CHECK(derive_salience_labels(d, {"detain", "suspect"}) == std::vector<bool>{true, false});
  CHECK(derive_salience_labels(d, {}) == std::vector<bool>{false, false});
  CHECK(derive_salience_labels(d, lemma_set({"detained", "detained"})) ==
        derive_salience_labels(d, lemma_set({"detained"})));
}

TEST_CASE("discourse label codes") {
  CHECK(parse_discourse_label("C2") == DiscourseLabel::kC2);
  CHECK(to_string(DiscourseLabel::kD4) == "D4");
  CHECK(in_keep_set(DiscourseLabel::kM2));
  CHECK_FALSE(in_keep_set(DiscourseLabel::kD1));
  CHECK_THROWS_AS(parse_discourse_label("X9"), std::invalid_argument);
}

TEST_CASE("synthetic corpus") {
  SyntheticConfig c;
  c.num_docs = 20;

  SUBCASE("deterministic") {
    std::ostringstream a, b;
    write_documents(a, generate_synthetic(c));
    write_documents(b, generate_synthetic(c));
    CHECK(a.str() == b.str());
    c.seed = 8;
    std::ostringstream other;
    write_documents(other, generate_synthetic(c));
    CHECK(other.str() != a.str());
  }
  SUBCASE("every document validates and carries full gold") {
    for (const Document& d : generate_synthetic(c)) {
      CHECK_NOTHROW(validate(d));
      REQUIRE(d.gold.has_value());
      CHECK(d.gold->relations.has_value());
      CHECK(d.gold->salience->size() == d.events.size());
      CHECK(d.gold->discourse->size() == d.sentences.size());
      CHECK(d.gold->qa.has_value());
      CHECK_FALSE(d.entities.empty());
    }
  }
  SUBCASE("no distractors") {
    c.distractor_rate = 0.0;
    for (const Document& d : generate_synthetic(c)) {
      for (DiscourseLabel l : *d.gold->discourse) CHECK(in_keep_set(l));
      for (bool s : *d.gold->salience) CHECK(s);
    }
  }
  SUBCASE("fixed backbone length") {
    c.backbone_min = c.backbone_max = 5;
    for (const Document& d : generate_synthetic(c)) {
      const auto& s = *d.gold->salience;
      CHECK(std::count(s.begin(), s.end(), true) == 5);
    }
  }
  SUBCASE("abstract lemmas reproduce the salience flags") {
    for (const Document& d : generate_synthetic(c)) {
      CHECK(derive_salience_labels(d, lemma_set(*d.gold->abstract)) == *d.gold->salience);
    }
  }
  SUBCASE("invalid configs are rejected") {
    c.distractor_rate = 1.5;
    CHECK_THROWS_AS(generate_synthetic(c), std::invalid_argument);
  }
}

TEST_CASE("cloze stories") {
  SyntheticConfig c;
  const auto stories = generate_cloze_stories(c, 50, 1);
  REQUIRE(stories.size() == 50);
  int a = 0;
  for (const ClozeStory& s : stories) {
    CHECK(s.context_events.size() == 4);
    CHECK_FALSE(s.ending_a_events.empty());
    CHECK_FALSE(s.ending_b_events.empty());
    a += s.gold == 'A';
  }
  CHECK(a > 10);
  CHECK(a < 40);
  const auto again = generate_cloze_stories(c, 50, 1);
  CHECK(to_json(again[7]) == to_json(stories[7]));
  CHECK(to_json(generate_cloze_stories(c, 50, 2)[7]) != to_json(stories[7]));
}

}
