// Temporal relation graphs under BEFORE, greedy consistency repair,
// topological ordering, and linear chain extraction.

#ifndef EVCHAIN_CHAINS_HPP_
#define EVCHAIN_CHAINS_HPP_

#include <set>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "evchain/corpus.hpp"

namespace evchain {

class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoredEdge {
  int source = 0;
  int target = 0;
  double score = 0.0;
};

// Nodes are event indices listed in text order; that order is the tie-break
// everywhere below. Edges point from the earlier event to the later one.
class TemporalGraph {
 public:
  TemporalGraph() = default;
  // Throws std::invalid_argument on duplicate nodes.
  explicit TemporalGraph(std::vector<int> nodes_in_text_order);

  const std::vector<int>& nodes() const { return nodes_; }
  const std::set<std::pair<int, int>>& edges() const { return edges_; }
  bool contains(int node) const;
  bool has_edge(int source, int target) const { return edges_.count({source, target}) > 0; }
  // Position of `node` in text order. Throws std::out_of_range.
  int rank(int node) const;

  // Adds an edge without any consistency check. Both ends must be nodes and
  // distinct.
  void add_edge(int source, int target);
  // True if target is reachable from source (a node reaches itself).
  bool reachable(int source, int target) const;
  std::vector<int> successors(int node) const;
  bool acyclic() const;

 private:
  std::vector<int> nodes_;
  std::vector<std::pair<int, int>> rank_;  // sorted (node, rank)
  std::set<std::pair<int, int>> edges_;
};

// Greedy by descending score, ties by (source, target) text order; an edge is
// accepted unless it would close a cycle of any length. Throws
// std::invalid_argument on self-loops or unknown nodes.
TemporalGraph repair_consistency(const std::vector<int>& nodes_in_text_order,
                                 std::vector<ScoredEdge> candidates);

// Kahn's algorithm; ready nodes leave in text order. Throws CycleError.
std::vector<int> topological_order(const TemporalGraph& graph);

enum class ChainOrder { kTemporal, kTextual };
std::string_view to_string(ChainOrder order);
ChainOrder parse_chain_order(std::string_view s);

struct EventChain {
  std::vector<int> events;
  ChainOrder order = ChainOrder::kTemporal;
};

// kPartition consumes nodes so chains partition the graph. kOverlap starts a
// chain at every node not yet covered and lets walks reuse covered nodes.
enum class ChainPolicy { kPartition, kOverlap };
std::string_view to_string(ChainPolicy policy);
ChainPolicy parse_chain_policy(std::string_view s);

// Repeatedly takes the earliest unvisited source in topological order and
// emits the longest path from it over unvisited nodes, preferring the
// earliest successor in text order among equally long continuations.
std::vector<EventChain> extract_chains(const TemporalGraph& graph,
                                       ChainPolicy policy = ChainPolicy::kPartition);

// All events in document position order; empty when the document has none.
std::vector<EventChain> textual_chain(const Document& doc);

// Subgraph on `keep`. With shortcuts, a kept node also links to every kept
// node reachable through removed nodes only.
TemporalGraph induced_subgraph(const TemporalGraph& graph, const std::vector<int>& keep,
                               bool shortcuts);

// Graph over a document's events (text order) holding its gold relations.
TemporalGraph gold_graph(const Document& doc);

}  // namespace evchain

#endif  // EVCHAIN_CHAINS_HPP_
