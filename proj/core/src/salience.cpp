#include "evchain/salience.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

KernelBank KernelBank::standard() {
  KernelBank bank;
  bank.means.push_back(1.0);
  bank.widths.push_back(1e-3);
  for (int k = 0; k < 10; ++k) {
    bank.means.push_back(0.9 - 0.2 * k);
    bank.widths.push_back(0.1);
  }
  return bank;
}

void KernelBank::validate() const {
  if (means.size() != widths.size() || means.empty()) {
    throw std::invalid_argument("kernel bank needs one width per mean");
  }
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k] < -1.0 - 1e-12 || means[k] > 1.0 + 1e-12) {
      throw std::invalid_argument("kernel mean outside [-1, 1]");
    }
    if (!(widths[k] > 0.0)) throw std::invalid_argument("kernel width must be positive");
    if (k > 0 && !(means[k] < means[k - 1])) {
      throw std::invalid_argument("kernel means must strictly decrease");
    }
  }
}

namespace {

constexpr double kNormFloor = 1e-12;

double cosine(const nn::Vector& a, const nn::Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) {
    spdlog::warn("zero-norm embedding in cosine; norm clamped to {}", kNormFloor);
  }
  return a.dot(b) / (std::max(na, kNormFloor) * std::max(nb, kNormFloor));
}

// Lemma counts and first-mention sentence over the document's events.
struct LemmaStats {
  std::map<std::string, int> count;
  std::map<std::string, int> first_sentence;
};

LemmaStats lemma_stats(const Document& doc) {
  LemmaStats s;
  for (int i : doc.events_in_text_order()) {
    const EventMention& e = doc.events[static_cast<std::size_t>(i)];
    ++s.count[e.lemma];
    s.first_sentence.emplace(e.lemma, e.head.sentence);
  }
  return s;
}

std::pair<double, double> frequency_and_location(const Document& doc, const LemmaStats& stats,
                                                 const std::string& lemma) {
  const double frequency = std::log(1.0 + stats.count.at(lemma));
  const double location = static_cast<double>(stats.first_sentence.at(lemma)) /
                          static_cast<double>(doc.sentences.size());
  return {frequency, location};
}

}  // namespace

nn::Vector kernel_features(const nn::Vector& target, const std::vector<nn::Vector>& neighbors,
                           const KernelBank& bank) {
  nn::Vector phi = nn::Vector::Zero(static_cast<Eigen::Index>(bank.size()));
  for (const nn::Vector& n : neighbors) {
    const double c = cosine(target, n);
    for (std::size_t k = 0; k < bank.size(); ++k) {
      const double d = c - bank.means[k];
      phi(static_cast<Eigen::Index>(k)) += std::exp(-d * d / (2.0 * bank.widths[k] * bank.widths[k]));
    }
  }
  return phi;
}

json SalienceConfig::to_json() const {
  return {{"seed", seed},         {"embedding_dim", embedding_dim}, {"epochs", epochs},
          {"learning_rate", learning_rate}, {"init_scale", init_scale},
          {"split_mean_cosine", split_mean_cosine}};
}

SalienceConfig SalienceConfig::from_json(const json& j) {
  SalienceConfig c;
  c.seed = j.value("seed", c.seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.split_mean_cosine = j.value("split_mean_cosine", c.split_mean_cosine);
  return c;
}

nn::Vector base_features(const Document& doc, int event,
                         const std::vector<nn::Vector>& event_embeddings,
                         const std::vector<nn::Vector>& entity_embeddings, bool split) {
  const LemmaStats stats = lemma_stats(doc);
  const auto [frequency, location] =
      frequency_and_location(doc, stats, doc.events.at(static_cast<std::size_t>(event)).lemma);
  const nn::Vector& target = event_embeddings.at(static_cast<std::size_t>(event));
  double event_sum = 0.0, entity_sum = 0.0;
  for (std::size_t j = 0; j < event_embeddings.size(); ++j) {
    if (static_cast<int>(j) != event) event_sum += cosine(target, event_embeddings[j]);
  }
  for (const nn::Vector& e : entity_embeddings) entity_sum += cosine(target, e);
  const auto n_events = static_cast<double>(event_embeddings.size() - 1);
  const auto n_entities = static_cast<double>(entity_embeddings.size());
  nn::Vector f(split ? 4 : 3);
  f(0) = frequency;
  f(1) = location;
  if (split) {
    f(2) = n_events > 0 ? event_sum / n_events : 0.0;
    f(3) = n_entities > 0 ? entity_sum / n_entities : 0.0;
  } else {
    const double n = n_events + n_entities;
    f(2) = n > 0 ? (event_sum + entity_sum) / n : 0.0;
  }
  return f;
}

SalienceModel SalienceModel::create(const SalienceConfig& config, KernelBank bank, Vocabulary vocab) {
  bank.validate();
  SalienceModel m;
  m.config = config;
  m.bank = std::move(bank);
  m.vocab = std::move(vocab);
  m.embeddings = &m.params.add("embeddings", config.embedding_dim, m.vocab.size());
  m.weight = &m.params.add("weight", 1, m.feature_count());
  m.bias = &m.params.add("bias", 1, 1);
  nn::Rng rng(config.seed);
  m.params.init_uniform(rng, config.init_scale);
  return m;
}

int SalienceModel::feature_count() const {
  return 2 * static_cast<int>(bank.size()) + (config.split_mean_cosine ? 4 : 3);
}

nn::Vector SalienceModel::embedding(const std::string& lemma) const {
  return embeddings->value.col(vocab.id(lemma));
}

std::vector<nn::Expr> SalienceModel::logits(nn::Graph& g, const Document& doc) const {
  if (doc.events.empty()) return {};
  const LemmaStats stats = lemma_stats(doc);
  std::vector<nn::Expr> events, entities;
  for (const EventMention& e : doc.events) events.push_back(g.lookup(*embeddings, vocab.id(e.lemma)));
  for (const EntityMention& e : doc.entities) entities.push_back(g.lookup(*embeddings, vocab.id(e.lemma)));
  const nn::Expr w = g.param(*weight);
  const nn::Expr b = g.param(*bias);
  std::vector<nn::Expr> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::vector<nn::Expr> others;
    for (std::size_t j = 0; j < events.size(); ++j) {
      if (j != i) others.push_back(events[j]);
    }
    const nn::Expr event_cos = g.cosines(events[i], others);
    const nn::Expr entity_cos = g.cosines(events[i], entities);
    const auto [frequency, location] = frequency_and_location(doc, stats, doc.events[i].lemma);
    std::vector<nn::Expr> parts = {g.gaussian_kernels(event_cos, bank.means, bank.widths),
                                   g.gaussian_kernels(entity_cos, bank.means, bank.widths),
                                   g.input(nn::Matrix::Constant(1, 1, frequency)),
                                   g.input(nn::Matrix::Constant(1, 1, location))};
    auto mean_of = [&](nn::Expr column, std::size_t n) {
      return n == 0 ? g.scalar(0.0) : g.scale(g.sum_elements(column), 1.0 / static_cast<double>(n));
    };
    if (config.split_mean_cosine) {
      parts.push_back(mean_of(event_cos, others.size()));
      parts.push_back(mean_of(entity_cos, entities.size()));
    } else {
      const nn::Expr both[2] = {event_cos, entity_cos};
      parts.push_back(mean_of(g.concat(both), others.size() + entities.size()));
    }
    out.push_back(g.affine(w, g.concat(parts), b));
  }
  return out;
}

nn::Expr SalienceModel::loss(nn::Graph& g, const Document& doc, const std::vector<bool>& labels) const {
  if (labels.size() != doc.events.size()) {
    throw std::invalid_argument("salience labels must cover every event of " + doc.doc_id);
  }
  std::vector<nn::Expr> terms;
  const std::vector<nn::Expr> z = logits(g, doc);
  for (std::size_t i = 0; i < z.size(); ++i) terms.push_back(g.sigmoid_bce(z[i], labels[i] ? 1.0 : 0.0));
  if (terms.empty()) return g.scalar(0.0);
  return g.mean(terms);
}

json SalienceModel::to_json() const {
  return {{"kind", "salience"},
          {"config", config.to_json()},
          {"kernels", {{"means", bank.means}, {"widths", bank.widths}}},
          {"vocab", vocab.to_json()},
          {"params", params.to_json()}};
}

SalienceModel SalienceModel::from_json(const json& j) {
  if (j.value("kind", "") != "salience") throw std::invalid_argument("not a salience checkpoint");
  KernelBank bank;
  bank.means = j.at("kernels").at("means").get<std::vector<double>>();
  bank.widths = j.at("kernels").at("widths").get<std::vector<double>>();
  SalienceModel m = create(SalienceConfig::from_json(j.at("config")), std::move(bank),
                           Vocabulary::from_json(j.at("vocab")));
  m.params.load_json(j.at("params"));
  return m;
}

void SalienceModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

SalienceModel SalienceModel::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

nn::Vector salience_features(const SalienceModel& model, const Document& doc, int event) {
  std::vector<nn::Vector> events, entities, others;
  for (const EventMention& e : doc.events) events.push_back(model.embedding(e.lemma));
  for (const EntityMention& e : doc.entities) entities.push_back(model.embedding(e.lemma));
  const nn::Vector& target = events.at(static_cast<std::size_t>(event));
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (static_cast<int>(j) != event) others.push_back(events[j]);
  }
  const auto K = static_cast<Eigen::Index>(model.bank.size());
  const nn::Vector base = base_features(doc, event, events, entities, model.config.split_mean_cosine);
  nn::Vector f(2 * K + base.size());
  f << kernel_features(target, others, model.bank), kernel_features(target, entities, model.bank), base;
  return f;
}

double salience_score(const SalienceModel& model, const Document& doc, int event) {
  const nn::Vector f = salience_features(model, doc, event);
  if (f.size() != model.weight->value.cols()) {
    throw std::invalid_argument("salience feature dimension mismatch");
  }
  return nn::sigmoid((model.weight->value * f)(0, 0) + model.bias->value(0, 0));
}

std::vector<double> score_document(const SalienceModel& model, const Document& doc) {
  nn::Graph g;
  std::vector<double> scores;
  for (nn::Expr z : model.logits(g, doc)) scores.push_back(nn::sigmoid(g.scalar_value(z)));
  return scores;
}

Vocabulary mention_vocabulary(const std::vector<Document>& docs) {
  Vocabulary v;
  for (const Document& d : docs) {
    for (const EventMention& e : d.events) v.add(e.lemma);
    for (const EntityMention& e : d.entities) v.add(e.lemma);
  }
  return v;
}

SalienceModel train_salience(const std::vector<Document>& docs,
                             const std::vector<std::vector<bool>>& labels,
                             const SalienceConfig& config, KernelBank bank) {
  if (docs.size() != labels.size()) {
    throw std::invalid_argument("train_salience: one label list per document required");
  }
  std::size_t positives = 0, negatives = 0;
  for (const auto& l : labels) {
    for (bool b : l) ++(b ? positives : negatives);
  }
  if (positives == 0 || negatives == 0) {
    spdlog::warn("salience training data has {} positive and {} negative events", positives, negatives);
  }
  SalienceModel model = SalienceModel::create(config, std::move(bank), mention_vocabulary(docs));
  nn::Adam adam(model.params, {.learning_rate = config.learning_rate});
  nn::Rng rng = nn::Rng(config.seed).fork(1);
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      if (docs[i].events.empty()) continue;
      nn::Graph g;
      const nn::Expr loss = model.loss(g, docs[i], labels[i]);
      total += g.scalar_value(loss);
      g.backward(loss);
      adam.step();
    }
    spdlog::debug("salience epoch {} loss {:.6f}", epoch + 1, total / static_cast<double>(docs.size()));
  }
  return model;
}

std::vector<int> filter_salient(const std::vector<int>& events, const std::vector<double>& scores,
                                double threshold) {
  if (events.size() != scores.size()) {
    throw std::invalid_argument("filter_salient: one score per event required");
  }
  std::vector<int> kept;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (scores[i] > threshold) kept.push_back(events[i]);
  }
  return kept;
}

}  // namespace evchain
