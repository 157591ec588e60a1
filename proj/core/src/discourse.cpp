#include "evchain/discourse.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

json DiscourseConfig::to_json() const {
  return {{"seed", seed},
          {"embedding_dim", embedding_dim},
          {"word_hidden", word_hidden},
          {"sentence_hidden", sentence_hidden},
          {"attention_dim", attention_dim},
          {"classifier_hidden", classifier_hidden},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"init_scale", init_scale},
          {"salience_aware", salience_aware}};
}

DiscourseConfig DiscourseConfig::from_json(const json& j) {
  DiscourseConfig c;
  c.seed = j.value("seed", c.seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.word_hidden = j.value("word_hidden", c.word_hidden);
  c.sentence_hidden = j.value("sentence_hidden", c.sentence_hidden);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.classifier_hidden = j.value("classifier_hidden", c.classifier_hidden);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.salience_aware = j.value("salience_aware", c.salience_aware);
  return c;
}

DiscourseModel DiscourseModel::create(const DiscourseConfig& config, Vocabulary vocab) {
  DiscourseModel m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.embeddings = &m.params.add("embeddings", config.embedding_dim, m.vocab.size());
  m.word_encoder = nn::RecurrentEncoder::create(m.params, "word", config.embedding_dim, config.word_hidden);
  const int word_out = m.word_encoder.output_dim();
  m.word_attention = nn::AttentionPool::create(m.params, "word_attention", word_out, config.attention_dim);
  m.sentence_encoder =
      nn::RecurrentEncoder::create(m.params, "sentence", 2 * word_out, config.sentence_hidden);
  const int sent_out = m.sentence_encoder.output_dim();
  m.document_attention =
      nn::AttentionPool::create(m.params, "document_attention", sent_out, config.attention_dim);
  m.classifier = nn::FeedForward::create(m.params, "classifier", 3 * sent_out, config.classifier_hidden,
                                         kDiscourseLabelCount);
  nn::Rng rng(config.seed);
  m.params.init_uniform(rng, config.init_scale);
  m.word_encoder.set_forget_bias(1.0);
  m.sentence_encoder.set_forget_bias(1.0);
  return m;
}

std::vector<nn::Expr> DiscourseModel::word_states(nn::Graph& g, const std::vector<Token>& sentence) const {
  if (sentence.empty()) throw std::invalid_argument("empty sentence");
  std::vector<nn::Expr> inputs;
  for (const Token& t : sentence) inputs.push_back(g.lookup(*embeddings, vocab.id(t.lemma)));
  return word_encoder.encode(g, inputs);
}

nn::Expr DiscourseModel::salient_mean(nn::Graph& g, const std::vector<nn::Expr>& states,
                                      const std::vector<int>& positions) const {
  if (positions.empty()) return g.input(nn::Matrix::Zero(word_encoder.output_dim(), 1));
  std::vector<nn::Expr> picked;
  for (int p : positions) {
    if (p < 0 || p >= static_cast<int>(states.size())) {
      throw std::out_of_range("salient position " + std::to_string(p) + " outside sentence");
    }
    picked.push_back(states[static_cast<std::size_t>(p)]);
  }
  return g.mean(picked);
}

std::vector<nn::Expr> DiscourseModel::logits(nn::Graph& g, const Document& doc,
                                             const std::vector<std::vector<int>>& salient_heads) const {
  if (doc.sentences.empty()) throw std::invalid_argument("document " + doc.doc_id + " has no sentences");
  if (salient_heads.size() != doc.sentences.size()) {
    throw std::invalid_argument("salient heads must be given per sentence");
  }
  const std::vector<int> none;
  std::vector<nn::Expr> sentence_inputs;
  for (std::size_t t = 0; t < doc.sentences.size(); ++t) {
    const std::vector<nn::Expr> states = word_states(g, doc.sentences[t]);
    const nn::Expr s = word_attention.pool(g, states);
    const nn::Expr e = salient_mean(g, states, config.salience_aware ? salient_heads[t] : none);
    const nn::Expr parts[2] = {s, e};
    sentence_inputs.push_back(g.concat(parts));
  }
  const std::vector<nn::Expr> h = sentence_encoder.encode(g, sentence_inputs);
  const nn::Expr d = document_attention.pool(g, h);
  std::vector<nn::Expr> out;
  for (const nn::Expr ht : h) {
    const nn::Expr parts[3] = {ht, g.cmul(ht, d), g.sub(ht, d)};
    out.push_back(classifier.apply(g, g.concat(parts)));
  }
  return out;
}

nn::Expr DiscourseModel::loss(nn::Graph& g, const Document& doc,
                              const std::vector<std::vector<int>>& salient_heads,
                              const std::vector<DiscourseLabel>& labels) const {
  const std::vector<nn::Expr> z = logits(g, doc, salient_heads);
  if (labels.size() != z.size()) {
    throw std::invalid_argument("discourse labels must cover every sentence of " + doc.doc_id);
  }
  std::vector<nn::Expr> terms;
  for (std::size_t t = 0; t < z.size(); ++t) {
    terms.push_back(g.softmax_cross_entropy(z[t], static_cast<Eigen::Index>(labels[t])));
  }
  return g.mean(terms);
}

json DiscourseModel::to_json() const {
  return {{"kind", "discourse"},
          {"config", config.to_json()},
          {"vocab", vocab.to_json()},
          {"params", params.to_json()}};
}

DiscourseModel DiscourseModel::from_json(const json& j) {
  if (j.value("kind", "") != "discourse") throw std::invalid_argument("not a discourse checkpoint");
  DiscourseModel m = create(DiscourseConfig::from_json(j.at("config")), Vocabulary::from_json(j.at("vocab")));
  m.params.load_json(j.at("params"));
  return m;
}

void DiscourseModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

DiscourseModel DiscourseModel::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

nn::Vector sentence_encoding(const DiscourseModel& model, const std::vector<Token>& sentence) {
  nn::Graph g;
  const std::vector<nn::Expr> states = model.word_states(g, sentence);
  return g.value(model.word_attention.pool(g, states)).col(0);
}

nn::Vector salient_event_encoding(const DiscourseModel& model, const std::vector<Token>& sentence,
                                  const std::vector<int>& salient_positions) {
  nn::Graph g;
  const std::vector<nn::Expr> states = model.word_states(g, sentence);
  return g.value(model.salient_mean(g, states, salient_positions)).col(0);
}

std::vector<std::vector<int>> salient_heads_by_sentence(const Document& doc,
                                                        const std::vector<bool>& event_flags) {
  if (event_flags.size() != doc.events.size()) {
    throw std::invalid_argument("salience flags must cover every event of " + doc.doc_id);
  }
  std::vector<std::vector<int>> heads(doc.sentences.size());
  for (std::size_t i = 0; i < doc.events.size(); ++i) {
    if (!event_flags[i]) continue;
    const TokenRef h = doc.events[i].head;
    heads.at(static_cast<std::size_t>(h.sentence)).push_back(h.token);
  }
  for (auto& h : heads) std::sort(h.begin(), h.end());
  return heads;
}

DiscourseOutput classify_document(const DiscourseModel& model, const Document& doc,
                                  const std::vector<bool>& event_flags) {
  nn::Graph g;
  DiscourseOutput out;
  for (nn::Expr z : model.logits(g, doc, salient_heads_by_sentence(doc, event_flags))) {
    nn::Vector p = nn::softmax(g.value(z).col(0));
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    out.labels.push_back(static_cast<DiscourseLabel>(best));
    out.probabilities.push_back(std::move(p));
  }
  return out;
}

std::vector<int> filter_by_discourse(const std::vector<DiscourseLabel>& labels) {
  std::vector<int> kept;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (in_keep_set(labels[i])) kept.push_back(static_cast<int>(i));
  }
  return kept;
}

ClassificationReport classification_report(const std::vector<DiscourseLabel>& gold,
                                           const std::vector<DiscourseLabel>& predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("classification_report: length mismatch");
  }
  std::array<std::size_t, kDiscourseLabelCount> tp{}, fp{}, fn{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = static_cast<std::size_t>(gold[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (g == p) {
      ++tp[g];
      ++correct;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  ClassificationReport r;
  r.count = gold.size();
  double sum = 0.0;
  for (std::size_t c = 0; c < kDiscourseLabelCount; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    r.per_class_f1[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    sum += r.per_class_f1[c];
  }
  r.macro_f1 = sum / kDiscourseLabelCount;
  r.micro_f1 = gold.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  return r;
}

json to_json(const ClassificationReport& r) {
  json per_class = json::object();
  for (int c = 0; c < kDiscourseLabelCount; ++c) {
    per_class[std::string(to_string(static_cast<DiscourseLabel>(c)))] = r.per_class_f1[static_cast<std::size_t>(c)];
  }
  return {{"macro_f1", r.macro_f1}, {"micro_f1", r.micro_f1}, {"count", r.count}, {"per_class_f1", per_class}};
}

namespace {

const std::vector<DiscourseLabel>& gold_labels(const Document& doc) {
  if (!doc.gold || !doc.gold->discourse) {
    throw std::invalid_argument("document " + doc.doc_id + " has no gold discourse labels");
  }
  return *doc.gold->discourse;
}

}  // namespace

DiscourseModel train_discourse(const std::vector<Document>& docs,
                               const std::vector<std::vector<bool>>& event_flags,
                               const DiscourseConfig& config,
                               std::vector<ClassificationReport>* history) {
  if (docs.empty()) throw std::invalid_argument("train_discourse: empty training set");
  if (event_flags.size() != docs.size()) {
    throw std::invalid_argument("train_discourse: one flag list per document required");
  }
  std::vector<std::vector<std::vector<int>>> heads;
  Vocabulary vocab;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    gold_labels(docs[d]);
    heads.push_back(salient_heads_by_sentence(docs[d], event_flags[d]));
    for (const auto& sentence : docs[d].sentences) {
      for (const Token& t : sentence) vocab.add(t.lemma);
    }
  }
  DiscourseModel model = DiscourseModel::create(config, std::move(vocab));
  nn::Adam adam(model.params, {.learning_rate = config.learning_rate});
  nn::Rng rng = nn::Rng(config.seed).fork(1);
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    std::vector<DiscourseLabel> gold, predicted;
    double total = 0.0;
    for (std::size_t i : order) {
      nn::Graph g;
      const std::vector<DiscourseLabel>& labels = gold_labels(docs[i]);
      const std::vector<nn::Expr> z = model.logits(g, docs[i], heads[i]);
      if (z.size() != labels.size()) {
        throw std::invalid_argument("discourse labels must cover every sentence of " + docs[i].doc_id);
      }
      std::vector<nn::Expr> terms;
      for (std::size_t t = 0; t < z.size(); ++t) {
        terms.push_back(g.softmax_cross_entropy(z[t], static_cast<Eigen::Index>(labels[t])));
        Eigen::Index best = 0;
        g.value(z[t]).col(0).maxCoeff(&best);
        gold.push_back(labels[t]);
        predicted.push_back(static_cast<DiscourseLabel>(best));
      }
      const nn::Expr loss = g.mean(terms);
      total += g.scalar_value(loss);
      g.backward(loss);
      adam.step();
    }
    const ClassificationReport report = classification_report(gold, predicted);
    spdlog::debug("discourse epoch {} loss {:.6f} macro F1 {:.4f} micro F1 {:.4f}", epoch + 1,
                  total / static_cast<double>(docs.size()), report.macro_f1, report.micro_f1);
    if (history != nullptr) history->push_back(report);
  }
  return model;
}

ClassificationReport evaluate_discourse(const DiscourseModel& model, const std::vector<Document>& docs,
                                        const std::vector<std::vector<bool>>& event_flags) {
  if (event_flags.size() != docs.size()) {
    throw std::invalid_argument("evaluate_discourse: one flag list per document required");
  }
  std::vector<DiscourseLabel> gold, predicted;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& labels = gold_labels(docs[d]);
    const DiscourseOutput out = classify_document(model, docs[d], event_flags[d]);
    gold.insert(gold.end(), labels.begin(), labels.end());
    predicted.insert(predicted.end(), out.labels.begin(), out.labels.end());
  }
  return classification_report(gold, predicted);
}

}  // namespace evchain
