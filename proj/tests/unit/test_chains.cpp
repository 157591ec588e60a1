#include <doctest.h>

#include "evchain/chains.hpp"
#include "support/oracles.hpp"

using namespace evchain;

namespace {

constexpr int a = 0, b = 1, c = 2, d = 3;

std::vector<std::vector<int>> events_of(const std::vector<EventChain>& chains) {
  std::vector<std::vector<int>> out;
  for (const EventChain& ch : chains) out.push_back(ch.events);
  return out;
}

TemporalGraph diamond() {
  TemporalGraph g({a, b, c, d});
  g.add_edge(a, b);
  g.add_edge(a, c);
  g.add_edge(b, d);
  g.add_edge(c, d);
  return g;
}

}  // namespace

TEST_SUITE("chains") {

TEST_CASE("consistency repair") {
  SUBCASE("antisymmetry keeps the higher score") {
    const auto g = repair_consistency({a, b}, {{a, b, 0.9}, {b, a, 0.8}});
    CHECK(g.edges() == std::set<std::pair<int, int>>{{a, b}});
  }
  SUBCASE("cycle-closing edge is rejected") {
    const auto g = repair_consistency({a, b, c}, {{a, b, 0.9}, {b, c, 0.8}, {c, a, 0.7}});
    CHECK(g.edges() == std::set<std::pair<int, int>>{{a, b}, {b, c}});
  }
  SUBCASE("empty candidates") {
    CHECK(repair_consistency({a, b}, {}).edges().empty());
  }
  SUBCASE("ties resolve in text order") {
    const auto g = repair_consistency({a, b}, {{b, a, 0.5}, {a, b, 0.5}});
    CHECK(g.edges() == std::set<std::pair<int, int>>{{a, b}});
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(repair_consistency({a, b}, {{a, a, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(repair_consistency({a, b}, {{a, c, 1.0}}), std::invalid_argument);
  }
  SUBCASE("random candidates stay consistent and maximal") {
    nn::Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + static_cast<int>(rng.below(9));
      std::vector<int> nodes;
      for (int i = 0; i < n; ++i) nodes.push_back(i);
      std::vector<ScoredEdge> cand;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i != j && rng.bernoulli(0.35)) cand.push_back({i, j, std::round(rng.uniform() * 4) / 4});
        }
      }
      const auto g = repair_consistency(nodes, cand);
      CHECK_FALSE(oracle::has_cycle(g));
      CHECK(oracle::antisymmetric(g));
      for (const ScoredEdge& e : cand) {
        if (!g.has_edge(e.source, e.target)) CHECK(oracle::reaches(g, e.target, e.source));
      }
    }
  }
}

TEST_CASE("topological order") {
  CHECK(topological_order(diamond()) == std::vector<int>{a, b, c, d});
  CHECK(topological_order(TemporalGraph({7, 3})) == std::vector<int>{7, 3});
  TemporalGraph cyc({a, b});
  cyc.add_edge(a, b);
  cyc.add_edge(b, a);
  CHECK_THROWS_AS(topological_order(cyc), CycleError);
  CHECK_FALSE(cyc.acyclic());
}

TEST_CASE("chain extraction") {
  SUBCASE("shortcut edge does not shorten the chain") {
    TemporalGraph g({a, b, c});
    g.add_edge(a, b);
    g.add_edge(b, c);
    g.add_edge(a, c);
    CHECK(events_of(extract_chains(g)) == std::vector<std::vector<int>>{{a, b, c}});
    CHECK(events_of(extract_chains(g)) == oracle::brute_force_chains(g, ChainPolicy::kPartition));
  }
  SUBCASE("diamond") {
    const auto expected = std::vector<std::vector<int>>{{a, b, d}, {c}};
    CHECK(events_of(extract_chains(diamond())) == expected);
    CHECK(oracle::brute_force_chains(diamond(), ChainPolicy::kPartition) == expected);
  }
  SUBCASE("diamond with overlapping chains") {
    CHECK(events_of(extract_chains(diamond(), ChainPolicy::kOverlap)) ==
          std::vector<std::vector<int>>{{a, b, d}, {c, d}});
  }
  SUBCASE("singleton") {
    CHECK(events_of(extract_chains(TemporalGraph({a}))) == std::vector<std::vector<int>>{{a}});
  }
  SUBCASE("empty graph") {
    CHECK(extract_chains(TemporalGraph()).empty());
  }
  SUBCASE("random dags agree with the oracle under both policies") {
    nn::Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
      const auto g = oracle::random_dag(rng, 1 + static_cast<int>(rng.below(8)), rng.uniform(0.1, 0.6));
      CHECK(events_of(extract_chains(g)) == oracle::brute_force_chains(g, ChainPolicy::kPartition));
      CHECK(events_of(extract_chains(g, ChainPolicy::kOverlap)) ==
            oracle::brute_force_chains(g, ChainPolicy::kOverlap));
    }
  }
  SUBCASE("partition covers each node once") {
    nn::Rng rng(9);
    const auto g = oracle::random_dag(rng, 12, 0.3);
    std::vector<int> seen;
    for (const EventChain& ch : extract_chains(g)) {
      seen.insert(seen.end(), ch.events.begin(), ch.events.end());
      for (std::size_t i = 1; i < ch.events.size(); ++i) CHECK(g.has_edge(ch.events[i - 1], ch.events[i]));
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == g.nodes());
  }
}

TEST_CASE("textual chain") {
  Document doc = make_document("t", {{"x", "fell", "y", "rose"}, {"z", "ran"}});
  doc.events = {make_event(doc, {1, 1}), make_event(doc, {0, 1}), make_event(doc, {0, 3})};
  const auto chains = textual_chain(doc);
  REQUIRE(chains.size() == 1);
  CHECK(chains[0].events == std::vector<int>{1, 2, 0});
  CHECK(chains[0].order == ChainOrder::kTextual);
  doc.events.clear();
  CHECK(textual_chain(doc).empty());
}

TEST_CASE("induced subgraph") {
  TemporalGraph g({a, b, c});
  g.add_edge(a, b);
  g.add_edge(b, c);
  CHECK(induced_subgraph(g, {a, c}, true).edges() == std::set<std::pair<int, int>>{{a, c}});
  CHECK(induced_subgraph(g, {a, c}, false).edges().empty());
  CHECK(induced_subgraph(g, {a, b, c}, true).edges() == g.edges());
  CHECK(induced_subgraph(g, {}, true).nodes().empty());
}

TEST_CASE("gold graph and names") {
  Document doc = make_document("t", {{"x", "fell", "y", "rose", "z", "ran"}});
  doc.events = {make_event(doc, {0, 1}), make_event(doc, {0, 3}), make_event(doc, {0, 5})};
  doc.gold = GoldBundle{};
  doc.gold->relations = std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 0}};
  const TemporalGraph g = gold_graph(doc);
  CHECK(g.acyclic());
  CHECK(g.edges().size() == 2);
  CHECK(parse_chain_order("textual") == ChainOrder::kTextual);
  CHECK(parse_chain_policy(to_string(ChainPolicy::kOverlap)) == ChainPolicy::kOverlap);
  CHECK_THROWS(parse_chain_order("sideways"));
}

}
