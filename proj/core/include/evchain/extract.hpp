// Joint event and BEFORE-relation extractor: a document-level bi-LSTM with a
// per-token event head and a pairwise relation head, decoded under the
// event-relation and acyclicity constraints.

#ifndef EVCHAIN_EXTRACT_HPP_
#define EVCHAIN_EXTRACT_HPP_

#include <filesystem>
#include <vector>

#include "evchain/chains.hpp"
#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"
#include "evchain/vocab.hpp"

namespace evchain {

struct ExtractorConfig {
  std::uint64_t seed = 13;
  int embedding_dim = 32;
  int hidden_dim = 32;
  int relation_hidden = 32;
  int epochs = 20;
  double learning_rate = 5e-3;
  double init_scale = 0.08;

  nlohmann::json to_json() const;
  static ExtractorConfig from_json(const nlohmann::json& j);
};

struct ExtractorModel {
  ExtractorConfig config;
  Vocabulary vocab;
  nn::ParameterSet params;
  nn::Parameter* embeddings = nullptr;
  nn::RecurrentEncoder encoder;
  nn::Parameter* event_w = nullptr;
  nn::Parameter* event_b = nullptr;
  nn::FeedForward relation;

  // Randomly initialized from config.seed.
  static ExtractorModel create(const ExtractorConfig& config, Vocabulary vocab);

  // Token-level plus pair-level BCE on one gold document.
  nn::Expr loss(nn::Graph& g, const Document& doc) const;

  nlohmann::json to_json() const;
  static ExtractorModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ExtractorModel load(const std::filesystem::path& path);
};

struct ScoredRelation {
  int source = 0;
  int target = 0;
  double probability = 0.0;
};

// Event probability for every token, indexed [sentence][token].
std::vector<std::vector<double>> score_events(const ExtractorModel& model, const Document& doc);

// One entry per pair (i, j) of candidates with i before j in the text; the
// indices refer to positions in `candidates`.
std::vector<ScoredRelation> score_relations(const ExtractorModel& model, const Document& doc,
                                            const std::vector<TokenRef>& candidates);

// Graph over predicted events. Node k is events[k]; events are in text order.
struct ExtractedGraph {
  std::vector<TokenRef> events;
  TemporalGraph graph;
};

// Keeps tokens with probability > 0.5 and relations with probability > 0.5
// between kept tokens, then repairs. `relations` index into `tokens`.
ExtractedGraph decode_scored(const std::vector<TokenRef>& tokens,
                             const std::vector<double>& event_probabilities,
                             const std::vector<ScoredRelation>& relations);

// Throws std::invalid_argument on a document without sentences.
ExtractedGraph decode(const ExtractorModel& model, const Document& doc);

// Throws std::invalid_argument on an empty set or missing gold relations.
ExtractorModel train_extractor(const std::vector<Document>& docs, const ExtractorConfig& config);

// Lower-cased lemma vocabulary over every token of the documents.
Vocabulary token_vocabulary(const std::vector<Document>& docs);

// The document with its events replaced by the decoded ones (span = head).
// Gold relations, salience flags and QA answers are re-indexed by head token;
// entries whose heads were not predicted are dropped.
Document with_predicted_events(const Document& doc, const ExtractedGraph& graph);

nlohmann::json graph_to_json(const Document& doc, const ExtractedGraph& graph);
// Returns doc_id and the graph; lemmas are ignored on reading.
std::pair<std::string, ExtractedGraph> graph_from_json(const nlohmann::json& j, std::size_t line = 0);

}  // namespace evchain

#endif  // EVCHAIN_EXTRACT_HPP_
