#include "evchain/extract.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

json ExtractorConfig::to_json() const {
  return {{"seed", seed},           {"embedding_dim", embedding_dim},
          {"hidden_dim", hidden_dim}, {"relation_hidden", relation_hidden},
          {"epochs", epochs},       {"learning_rate", learning_rate},
          {"init_scale", init_scale}};
}

ExtractorConfig ExtractorConfig::from_json(const json& j) {
  ExtractorConfig c;
  c.seed = j.value("seed", c.seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.relation_hidden = j.value("relation_hidden", c.relation_hidden);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

ExtractorModel ExtractorModel::create(const ExtractorConfig& config, Vocabulary vocab) {
  ExtractorModel m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.embeddings = &m.params.add("embeddings", config.embedding_dim, m.vocab.size());
  m.encoder = nn::RecurrentEncoder::create(m.params, "encoder", config.embedding_dim, config.hidden_dim);
  m.event_w = &m.params.add("event.w", 1, m.encoder.output_dim());
  m.event_b = &m.params.add("event.b", 1, 1);
  m.relation = nn::FeedForward::create(m.params, "relation", 2 * m.encoder.output_dim(),
                                       config.relation_hidden, 1);
  nn::Rng rng(config.seed);
  m.params.init_uniform(rng, config.init_scale);
  m.encoder.set_forget_bias(1.0);
  return m;
}

namespace {

struct Encoded {
  std::vector<nn::Expr> states;
  std::map<TokenRef, std::size_t> position;
};

Encoded encode_document(nn::Graph& g, const ExtractorModel& m, const Document& doc) {
  if (doc.sentences.empty()) throw std::invalid_argument("document has no sentences");
  Encoded out;
  std::vector<nn::Expr> inputs;
  for (const auto& sentence : doc.sentences) {
    for (const Token& t : sentence) {
      out.position[{t.sentence_index, t.token_index}] = inputs.size();
      inputs.push_back(g.lookup(*m.embeddings, m.vocab.id(t.lemma)));
    }
  }
  out.states = m.encoder.encode(g, inputs);
  return out;
}

nn::Expr event_logit(nn::Graph& g, const ExtractorModel& m, nn::Expr state) {
  return g.affine(g.param(*m.event_w), state, g.param(*m.event_b));
}

nn::Expr relation_logit(nn::Graph& g, const ExtractorModel& m, nn::Expr a, nn::Expr b) {
  const nn::Expr pair[2] = {a, b};
  return m.relation.apply(g, g.concat(pair));
}

std::vector<TokenRef> sorted_heads(const Document& doc, std::vector<int>* order = nullptr) {
  std::vector<int> idx = doc.events_in_text_order();
  std::vector<TokenRef> heads;
  for (int i : idx) heads.push_back(doc.events[static_cast<std::size_t>(i)].head);
  if (order != nullptr) *order = std::move(idx);
  return heads;
}

}  // namespace

nn::Expr ExtractorModel::loss(nn::Graph& g, const Document& doc) const {
  if (!doc.gold || !doc.gold->relations) {
    throw std::invalid_argument("document " + doc.doc_id + " has no gold relations");
  }
  const Encoded enc = encode_document(g, *this, doc);
  std::set<TokenRef> event_heads;
  for (const EventMention& e : doc.events) event_heads.insert(e.head);

  std::vector<nn::Expr> token_losses;
  for (const auto& [ref, pos] : enc.position) {
    token_losses.push_back(g.sigmoid_bce(event_logit(g, *this, enc.states[pos]),
                                         event_heads.count(ref) ? 1.0 : 0.0));
  }
  nn::Expr total = g.mean(token_losses);

  std::set<std::pair<int, int>> gold(doc.gold->relations->begin(), doc.gold->relations->end());
  std::vector<int> order;
  const std::vector<TokenRef> heads = sorted_heads(doc, &order);
  std::vector<nn::Expr> pair_losses;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    for (std::size_t j = i + 1; j < heads.size(); ++j) {
      const double y = gold.count({order[i], order[j]}) ? 1.0 : 0.0;
      pair_losses.push_back(g.sigmoid_bce(
          relation_logit(g, *this, enc.states[enc.position.at(heads[i])],
                         enc.states[enc.position.at(heads[j])]),
          y));
    }
  }
  if (!pair_losses.empty()) {
    const nn::Expr parts[2] = {total, g.mean(pair_losses)};
    total = g.sum(parts);
  }
  return total;
}

json ExtractorModel::to_json() const {
  return {{"kind", "extractor"},
          {"config", config.to_json()},
          {"vocab", vocab.to_json()},
          {"params", params.to_json()}};
}

ExtractorModel ExtractorModel::from_json(const json& j) {
  if (j.value("kind", "") != "extractor") throw std::invalid_argument("not an extractor checkpoint");
  ExtractorModel m = create(ExtractorConfig::from_json(j.at("config")), Vocabulary::from_json(j.at("vocab")));
  m.params.load_json(j.at("params"));
  return m;
}

void ExtractorModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

ExtractorModel ExtractorModel::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

std::vector<std::vector<double>> score_events(const ExtractorModel& model, const Document& doc) {
  nn::Graph g;
  const Encoded enc = encode_document(g, model, doc);
  std::vector<std::vector<double>> out;
  for (const auto& sentence : doc.sentences) {
    std::vector<double> probs;
    for (const Token& t : sentence) {
      const nn::Expr s = enc.states[enc.position.at({t.sentence_index, t.token_index})];
      probs.push_back(nn::sigmoid(g.scalar_value(event_logit(g, model, s))));
    }
    out.push_back(std::move(probs));
  }
  return out;
}

std::vector<ScoredRelation> score_relations(const ExtractorModel& model, const Document& doc,
                                            const std::vector<TokenRef>& candidates) {
  if (candidates.empty()) return {};
  nn::Graph g;
  const Encoded enc = encode_document(g, model, doc);
  std::vector<int> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)]; });
  std::vector<ScoredRelation> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const TokenRef a = candidates[static_cast<std::size_t>(order[i])];
      const TokenRef b = candidates[static_cast<std::size_t>(order[j])];
      auto pa = enc.position.find(a), pb = enc.position.find(b);
      if (pa == enc.position.end() || pb == enc.position.end()) {
        throw std::out_of_range("relation candidate outside document " + doc.doc_id);
      }
      const double logit = g.scalar_value(relation_logit(g, model, enc.states[pa->second], enc.states[pb->second]));
      out.push_back({order[i], order[j], nn::sigmoid(logit)});
    }
  }
  return out;
}

ExtractedGraph decode_scored(const std::vector<TokenRef>& tokens,
                             const std::vector<double>& event_probabilities,
                             const std::vector<ScoredRelation>& relations) {
  if (tokens.size() != event_probabilities.size()) {
    throw std::invalid_argument("decode: one probability per token required");
  }
  std::vector<int> kept;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (event_probabilities[i] > 0.5) kept.push_back(static_cast<int>(i));
  }
  std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) {
    return tokens[static_cast<std::size_t>(a)] < tokens[static_cast<std::size_t>(b)];
  });
  std::map<int, int> node_of;
  ExtractedGraph out;
  std::vector<int> nodes;
  for (int k : kept) {
    node_of[k] = static_cast<int>(out.events.size());
    nodes.push_back(static_cast<int>(out.events.size()));
    out.events.push_back(tokens[static_cast<std::size_t>(k)]);
  }
  std::vector<ScoredEdge> candidates;
  for (const ScoredRelation& r : relations) {
    if (r.probability <= 0.5) continue;
    auto s = node_of.find(r.source), t = node_of.find(r.target);
    if (s == node_of.end() || t == node_of.end()) continue;
    candidates.push_back({s->second, t->second, r.probability});
  }
  out.graph = repair_consistency(nodes, std::move(candidates));
  return out;
}

ExtractedGraph decode(const ExtractorModel& model, const Document& doc) {
  const auto probs = score_events(model, doc);
  std::vector<TokenRef> tokens;
  std::vector<double> flat;
  std::vector<TokenRef> predicted;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    for (std::size_t t = 0; t < probs[s].size(); ++t) {
      const TokenRef ref{static_cast<int>(s), static_cast<int>(t)};
      tokens.push_back(ref);
      flat.push_back(probs[s][t]);
      if (probs[s][t] > 0.5) predicted.push_back(ref);
    }
  }
  // Relations are scored among predicted events, then mapped to token indices.
  std::map<TokenRef, int> token_index;
  for (std::size_t i = 0; i < tokens.size(); ++i) token_index[tokens[i]] = static_cast<int>(i);
  std::vector<ScoredRelation> relations = score_relations(model, doc, predicted);
  for (ScoredRelation& r : relations) {
    r.source = token_index.at(predicted[static_cast<std::size_t>(r.source)]);
    r.target = token_index.at(predicted[static_cast<std::size_t>(r.target)]);
  }
  return decode_scored(tokens, flat, relations);
}

Vocabulary token_vocabulary(const std::vector<Document>& docs) {
  Vocabulary v;
  for (const Document& d : docs) {
    for (const auto& sentence : d.sentences) {
      for (const Token& t : sentence) v.add(t.lemma);
    }
  }
  return v;
}

ExtractorModel train_extractor(const std::vector<Document>& docs, const ExtractorConfig& config) {
  if (docs.empty()) throw std::invalid_argument("train_extractor: empty training set");
  for (const Document& d : docs) {
    if (!d.gold || !d.gold->relations) {
      throw std::invalid_argument("train_extractor: document " + d.doc_id + " lacks gold relations");
    }
  }
  ExtractorModel model = ExtractorModel::create(config, token_vocabulary(docs));
  nn::Adam adam(model.params, {.learning_rate = config.learning_rate});
  nn::Rng rng = nn::Rng(config.seed).fork(1);
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      nn::Graph g;
      const nn::Expr loss = model.loss(g, docs[i]);
      total += g.scalar_value(loss);
      g.backward(loss);
      adam.step();
    }
    spdlog::debug("extractor epoch {} loss {:.6f}", epoch + 1, total / static_cast<double>(docs.size()));
  }
  return model;
}

Document with_predicted_events(const Document& doc, const ExtractedGraph& graph) {
  Document out = doc;
  out.events.clear();
  std::map<TokenRef, int> predicted;
  for (const TokenRef& r : graph.events) {
    predicted[r] = static_cast<int>(out.events.size());
    out.events.push_back(make_event(doc, r));
  }
  if (!doc.gold) return out;
  auto remap = [&](int gold_index) -> int {
    auto it = predicted.find(doc.events.at(static_cast<std::size_t>(gold_index)).head);
    return it == predicted.end() ? -1 : it->second;
  };
  GoldBundle& gold = *out.gold;
  if (doc.gold->relations) {
    std::vector<std::pair<int, int>> rel;
    for (const auto& [s, t] : *doc.gold->relations) {
      const int a = remap(s), b = remap(t);
      if (a >= 0 && b >= 0) rel.emplace_back(a, b);
    }
    gold.relations = std::move(rel);
  }
  if (doc.gold->salience) {
    std::vector<bool> flags(out.events.size(), false);
    for (std::size_t i = 0; i < doc.gold->salience->size(); ++i) {
      const int k = remap(static_cast<int>(i));
      if (k >= 0) flags[static_cast<std::size_t>(k)] = (*doc.gold->salience)[i];
    }
    gold.salience = std::move(flags);
  }
  if (doc.gold->qa) {
    for (QaItem& item : *gold.qa) {
      std::vector<int> answers;
      for (int a : item.answer_event_indices) {
        const int k = remap(a);
        if (k >= 0) answers.push_back(k);
      }
      std::sort(answers.begin(), answers.end());
      item.answer_event_indices = std::move(answers);
    }
  }
  return out;
}

json graph_to_json(const Document& doc, const ExtractedGraph& graph) {
  json events = json::array();
  for (const TokenRef& r : graph.events) {
    events.push_back({{"sent", r.sentence}, {"tok", r.token}, {"lemma", doc.token(r).lemma}});
  }
  json edges = json::array();
  for (const auto& [s, t] : graph.graph.edges()) edges.push_back({s, t});
  return {{"doc_id", doc.doc_id}, {"events", events}, {"edges", edges}};
}

std::pair<std::string, ExtractedGraph> graph_from_json(const json& j, std::size_t line) {
  try {
    ExtractedGraph out;
    std::vector<int> nodes;
    for (const json& e : j.at("events")) {
      nodes.push_back(static_cast<int>(out.events.size()));
      out.events.push_back({e.at("sent").get<int>(), e.at("tok").get<int>()});
    }
    if (!std::is_sorted(out.events.begin(), out.events.end())) {
      throw FormatError("graph events must be listed in text order", line);
    }
    out.graph = TemporalGraph(nodes);
    for (const json& e : j.at("edges")) out.graph.add_edge(e.at(0).get<int>(), e.at(1).get<int>());
    if (!out.graph.acyclic()) throw FormatError("graph contains a cycle", line);
    return {j.at("doc_id").get<std::string>(), std::move(out)};
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed graph record: ") + e.what(), line);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), line);
  }
}

}  // namespace evchain
