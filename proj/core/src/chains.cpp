#include "evchain/chains.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <string>

namespace evchain {

TemporalGraph::TemporalGraph(std::vector<int> nodes_in_text_order)
    : nodes_(std::move(nodes_in_text_order)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) rank_.emplace_back(nodes_[i], static_cast<int>(i));
  std::sort(rank_.begin(), rank_.end());
  for (std::size_t i = 1; i < rank_.size(); ++i) {
    if (rank_[i].first == rank_[i - 1].first) {
      throw std::invalid_argument("duplicate graph node " + std::to_string(rank_[i].first));
    }
  }
}

bool TemporalGraph::contains(int node) const {
  auto it = std::lower_bound(rank_.begin(), rank_.end(), std::make_pair(node, -1));
  return it != rank_.end() && it->first == node;
}

int TemporalGraph::rank(int node) const {
  auto it = std::lower_bound(rank_.begin(), rank_.end(), std::make_pair(node, -1));
  if (it == rank_.end() || it->first != node) {
    throw std::out_of_range("node " + std::to_string(node) + " is not in the graph");
  }
  return it->second;
}

void TemporalGraph::add_edge(int source, int target) {
  if (source == target) throw std::invalid_argument("self-loop on node " + std::to_string(source));
  if (!contains(source) || !contains(target)) {
    throw std::invalid_argument("edge endpoint is not a graph node");
  }
  edges_.emplace(source, target);
}

std::vector<int> TemporalGraph::successors(int node) const {
  std::vector<int> out;
  for (auto it = edges_.lower_bound({node, INT32_MIN}); it != edges_.end() && it->first == node; ++it) {
    out.push_back(it->second);
  }
  return out;
}

bool TemporalGraph::reachable(int source, int target) const {
  std::vector<int> stack = {source};
  std::set<int> seen = {source};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v == target) return true;
    for (int u : successors(v)) {
      if (seen.insert(u).second) stack.push_back(u);
    }
  }
  return false;
}

bool TemporalGraph::acyclic() const {
  try {
    topological_order(*this);
    return true;
  } catch (const CycleError&) {
    return false;
  }
}

TemporalGraph repair_consistency(const std::vector<int>& nodes_in_text_order,
                                 std::vector<ScoredEdge> candidates) {
  TemporalGraph graph(nodes_in_text_order);
  for (const ScoredEdge& e : candidates) {
    if (e.source == e.target) {
      throw std::invalid_argument("self-loop candidate on node " + std::to_string(e.source));
    }
    if (!graph.contains(e.source) || !graph.contains(e.target)) {
      throw std::invalid_argument("candidate edge references an unknown node");
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](const ScoredEdge& a, const ScoredEdge& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto ka = std::make_pair(graph.rank(a.source), graph.rank(a.target));
    const auto kb = std::make_pair(graph.rank(b.source), graph.rank(b.target));
    return ka < kb;
  });
  for (const ScoredEdge& e : candidates) {
    if (!graph.reachable(e.target, e.source)) graph.add_edge(e.source, e.target);
  }
  return graph;
}

std::vector<int> topological_order(const TemporalGraph& graph) {
  const std::vector<int>& nodes = graph.nodes();
  std::vector<int> indegree(nodes.size(), 0);
  for (const auto& [s, t] : graph.edges()) ++indegree[static_cast<std::size_t>(graph.rank(t))];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    if (indegree[r] == 0) ready.push(static_cast<int>(r));
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const int r = ready.top();
    ready.pop();
    order.push_back(nodes[static_cast<std::size_t>(r)]);
    for (int u : graph.successors(nodes[static_cast<std::size_t>(r)])) {
      const int ru = graph.rank(u);
      if (--indegree[static_cast<std::size_t>(ru)] == 0) ready.push(ru);
    }
  }
  if (order.size() != nodes.size()) throw CycleError("temporal graph contains a cycle");
  return order;
}

std::string_view to_string(ChainOrder order) {
  return order == ChainOrder::kTemporal ? "temporal" : "textual";
}

ChainOrder parse_chain_order(std::string_view s) {
  if (s == "temporal") return ChainOrder::kTemporal;
  if (s == "textual") return ChainOrder::kTextual;
  throw std::invalid_argument("unknown chain order '" + std::string(s) + "'");
}

std::string_view to_string(ChainPolicy policy) {
  return policy == ChainPolicy::kPartition ? "partition" : "overlap";
}

ChainPolicy parse_chain_policy(std::string_view s) {
  if (s == "partition") return ChainPolicy::kPartition;
  if (s == "overlap") return ChainPolicy::kOverlap;
  throw std::invalid_argument("unknown chain policy '" + std::string(s) + "'");
}

namespace {

// Longest path from `start` over nodes with allowed[rank] set. Lengths come
// from a reverse-topological DP; ties pick the earliest successor in text.
std::vector<int> longest_path(const TemporalGraph& graph, const std::vector<int>& topo,
                              const std::vector<bool>& allowed, int start) {
  const std::size_t n = graph.nodes().size();
  std::vector<int> length(n, 0);
  std::vector<int> next(n, -1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const auto r = static_cast<std::size_t>(graph.rank(*it));
    if (!allowed[r]) continue;
    length[r] = 1;
    for (int u : graph.successors(*it)) {
      const auto ru = static_cast<std::size_t>(graph.rank(u));
      if (!allowed[ru]) continue;
      const int candidate = length[ru] + 1;
      if (candidate > length[r] ||
          (candidate == length[r] && next[r] >= 0 && static_cast<int>(ru) < next[r])) {
        length[r] = candidate;
        next[r] = static_cast<int>(ru);
      }
    }
  }
  std::vector<int> path;
  for (int r = graph.rank(start); r >= 0; r = next[static_cast<std::size_t>(r)]) {
    path.push_back(graph.nodes()[static_cast<std::size_t>(r)]);
  }
  return path;
}

}  // namespace

std::vector<EventChain> extract_chains(const TemporalGraph& graph, ChainPolicy policy) {
  const std::vector<int> topo = topological_order(graph);
  const std::size_t n = graph.nodes().size();
  std::vector<EventChain> chains;
  std::vector<bool> covered(n, false);

  if (policy == ChainPolicy::kOverlap) {
    const std::vector<bool> everything(n, true);
    for (int v : topo) {
      if (covered[static_cast<std::size_t>(graph.rank(v))]) continue;
      EventChain chain{longest_path(graph, topo, everything, v), ChainOrder::kTemporal};
      for (int u : chain.events) covered[static_cast<std::size_t>(graph.rank(u))] = true;
      chains.push_back(std::move(chain));
    }
    return chains;
  }

  std::vector<bool> unvisited(n, true);
  std::size_t remaining = n;
  while (remaining > 0) {
    // A node is a source when no unvisited node points at it.
    std::vector<bool> has_incoming(n, false);
    for (const auto& [s, t] : graph.edges()) {
      if (unvisited[static_cast<std::size_t>(graph.rank(s))]) {
        has_incoming[static_cast<std::size_t>(graph.rank(t))] = true;
      }
    }
    int start = -1;
    for (int v : topo) {
      const auto r = static_cast<std::size_t>(graph.rank(v));
      if (unvisited[r] && !has_incoming[r]) {
        start = v;
        break;
      }
    }
    EventChain chain{longest_path(graph, topo, unvisited, start), ChainOrder::kTemporal};
    for (int u : chain.events) {
      unvisited[static_cast<std::size_t>(graph.rank(u))] = false;
      --remaining;
    }
    chains.push_back(std::move(chain));
  }
  return chains;
}

std::vector<EventChain> textual_chain(const Document& doc) {
  if (doc.events.empty()) return {};
  return {EventChain{doc.events_in_text_order(), ChainOrder::kTextual}};
}

TemporalGraph induced_subgraph(const TemporalGraph& graph, const std::vector<int>& keep,
                               bool shortcuts) {
  std::set<int> kept(keep.begin(), keep.end());
  std::vector<int> nodes;
  for (int v : graph.nodes()) {
    if (kept.count(v)) nodes.push_back(v);
  }
  TemporalGraph sub(nodes);
  for (int v : nodes) {
    std::vector<int> stack = graph.successors(v);
    std::set<int> seen(stack.begin(), stack.end());
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (kept.count(u)) {
        sub.add_edge(v, u);
        continue;
      }
      if (!shortcuts) continue;
      for (int w : graph.successors(u)) {
        if (seen.insert(w).second) stack.push_back(w);
      }
    }
  }
  return sub;
}

TemporalGraph gold_graph(const Document& doc) {
  std::vector<ScoredEdge> candidates;
  if (doc.gold && doc.gold->relations) {
    for (const auto& [s, t] : *doc.gold->relations) candidates.push_back({s, t, 1.0});
  }
  return repair_consistency(doc.events_in_text_order(), std::move(candidates));
}

}  // namespace evchain
