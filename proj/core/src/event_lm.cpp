#include "evchain/event_lm.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

Vocabulary event_vocabulary(const std::vector<std::vector<std::string>>& windows) {
  Vocabulary v({std::string(kPadSymbol), std::string(kMaskSymbol)});
  for (const auto& w : windows) {
    for (const std::string& lemma : w) v.add(lemma);
  }
  return v;
}

std::vector<std::vector<std::string>> make_windows(const std::vector<std::string>& chain, int length) {
  if (length < 2) throw std::invalid_argument("window length must be at least 2");
  std::vector<std::vector<std::string>> out;
  const auto L = static_cast<std::size_t>(length);
  for (std::size_t i = 0; i + L <= chain.size(); ++i) {
    out.emplace_back(chain.begin() + static_cast<long>(i), chain.begin() + static_cast<long>(i + L));
  }
  return out;
}

json MlmConfig::to_json() const {
  return {{"seed", seed},           {"window", window},         {"embedding_dim", embedding_dim},
          {"hidden_dim", hidden_dim}, {"epochs", epochs},       {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"init_scale", init_scale}};
}

MlmConfig MlmConfig::from_json(const json& j) {
  MlmConfig c;
  c.seed = j.value("seed", c.seed);
  c.window = j.value("window", c.window);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

MaskedEventLM MaskedEventLM::create(const MlmConfig& config, Vocabulary vocab) {
  if (config.window < 2) throw std::invalid_argument("window length must be at least 2");
  MaskedEventLM m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.embeddings = &m.params.add("embeddings", config.embedding_dim, m.vocab.size());
  m.encoder = nn::RecurrentEncoder::create(m.params, "encoder", config.embedding_dim, config.hidden_dim);
  m.output_w = &m.params.add("output.w", m.vocab.size(), m.encoder.output_dim());
  m.output_b = &m.params.add("output.b", m.vocab.size(), 1);
  nn::Rng rng(config.seed);
  m.params.init_uniform(rng, config.init_scale);
  m.encoder.set_forget_bias(1.0);
  return m;
}

nn::Expr MaskedEventLM::masked_logits(nn::Graph& g, const std::vector<std::string>& window,
                                      int position) const {
  if (static_cast<int>(window.size()) != config.window) {
    throw std::invalid_argument("window must hold " + std::to_string(config.window) + " events");
  }
  if (position < 0 || position >= config.window) throw std::out_of_range("masked position out of range");
  const int mask = vocab.id(kMaskSymbol);
  std::vector<nn::Expr> inputs;
  for (int i = 0; i < config.window; ++i) {
    const int id = i == position ? mask : vocab.id(window[static_cast<std::size_t>(i)]);
    inputs.push_back(g.lookup(*embeddings, id));
  }
  const std::vector<nn::Expr> states = encoder.encode(g, inputs);
  return g.affine(g.param(*output_w), states[static_cast<std::size_t>(position)], g.param(*output_b));
}

nn::Expr MaskedEventLM::loss(nn::Graph& g, const std::vector<std::string>& window, int position) const {
  return g.softmax_cross_entropy(masked_logits(g, window, position),
                                 vocab.id(window.at(static_cast<std::size_t>(position))));
}

json MaskedEventLM::to_json() const {
  return {{"kind", "event_lm"},
          {"config", config.to_json()},
          {"vocab", vocab.to_json()},
          {"params", params.to_json()}};
}

MaskedEventLM MaskedEventLM::from_json(const json& j) {
  if (j.value("kind", "") != "event_lm") throw std::invalid_argument("not an event LM checkpoint");
  MaskedEventLM m = create(MlmConfig::from_json(j.at("config")), Vocabulary::from_json(j.at("vocab")));
  m.params.load_json(j.at("params"));
  return m;
}

void MaskedEventLM::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

MaskedEventLM MaskedEventLM::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

MaskedEventLM train_mlm(const std::vector<std::vector<std::string>>& windows, const MlmConfig& config) {
  if (windows.empty()) throw std::invalid_argument("train_mlm: empty window set");
  MaskedEventLM model = MaskedEventLM::create(config, event_vocabulary(windows));
  nn::Adam adam(model.params, {.learning_rate = config.learning_rate});
  nn::Rng rng = nn::Rng(config.seed).fork(1);
  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(std::max(1, config.batch_size));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      nn::Graph g;
      std::vector<nn::Expr> terms;
      for (std::size_t k = start; k < end; ++k) {
        const int position = static_cast<int>(rng.below(static_cast<std::size_t>(config.window)));
        terms.push_back(model.loss(g, windows[order[k]], position));
      }
      const nn::Expr loss = g.mean(terms);
      total += g.scalar_value(loss) * static_cast<double>(end - start);
      g.backward(loss);
      adam.step();
    }
    spdlog::debug("event LM epoch {} loss {:.6f}", epoch + 1, total / static_cast<double>(windows.size()));
  }
  return model;
}

nn::Vector next_event_distribution(const MaskedEventLM& model, const std::vector<std::string>& context) {
  if (static_cast<int>(context.size()) != model.config.window - 1) {
    throw std::invalid_argument("context must hold " + std::to_string(model.config.window - 1) + " events");
  }
  std::vector<std::string> window = context;
  window.emplace_back(kMaskSymbol);
  nn::Graph g;
  return nn::softmax(g.value(model.masked_logits(g, window, model.config.window - 1)).col(0));
}

double masked_accuracy(const MaskedEventLM& model, const std::vector<std::vector<std::string>>& windows) {
  std::size_t correct = 0, total = 0;
  for (const auto& w : windows) {
    for (int p = 0; p < model.config.window; ++p) {
      nn::Graph g;
      Eigen::Index best = 0;
      g.value(model.masked_logits(g, w, p)).col(0).maxCoeff(&best);
      correct += static_cast<int>(best) == model.vocab.id(w[static_cast<std::size_t>(p)]) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

double max_probability(const nn::Vector& distribution, const Vocabulary& vocab,
                       const std::vector<std::string>& ending) {
  double best = 0.0;
  for (const std::string& e : ending) best = std::max(best, distribution(vocab.id(e)));
  return best;
}

}  // namespace

ClozeDecision cloze_choose(const MaskedEventLM& model, const std::vector<std::string>& context,
                           const std::vector<std::string>& ending_a, const std::vector<std::string>& ending_b) {
  const nn::Vector p = next_event_distribution(model, context);
  ClozeDecision d;
  d.score_a = max_probability(p, model.vocab, ending_a);
  d.score_b = max_probability(p, model.vocab, ending_b);
  d.choice = d.score_b > d.score_a ? 'B' : 'A';
  return d;
}

nn::Vector ending_features(const nn::Vector& distribution, const Vocabulary& vocab,
                           const std::vector<std::string>& ending, const std::vector<std::string>& other) {
  const double best = max_probability(distribution, vocab, ending);
  const double other_best = max_probability(distribution, vocab, other);
  double mean = 0.0;
  for (const std::string& e : ending) mean += distribution(vocab.id(e));
  if (!ending.empty()) mean /= static_cast<double>(ending.size());
  nn::Vector f(3);
  f << best, mean,
      std::log(std::max(best, nn::kProbabilityFloor)) - std::log(std::max(other_best, nn::kProbabilityFloor));
  return f;
}

double EndingClassifier::probability(const nn::Vector& features) const {
  return nn::sigmoid(weights.dot(features) + bias);
}

ClozeDecision EndingClassifier::classify(const MaskedEventLM& model, const ClozeStory& story) const {
  const nn::Vector p = next_event_distribution(model, story.context_events);
  ClozeDecision d;
  d.score_a = probability(ending_features(p, model.vocab, story.ending_a_events, story.ending_b_events));
  d.score_b = probability(ending_features(p, model.vocab, story.ending_b_events, story.ending_a_events));
  d.choice = d.score_b > d.score_a ? 'B' : 'A';
  return d;
}

json EndingClassifier::to_json() const {
  return {{"weights", std::vector<double>(weights.data(), weights.data() + weights.size())}, {"bias", bias}};
}

EndingClassifier EndingClassifier::from_json(const json& j) {
  EndingClassifier c;
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != 3) throw std::invalid_argument("ending classifier needs 3 weights");
  c.weights = Eigen::Map<const nn::Vector>(w.data(), 3);
  c.bias = j.at("bias").get<double>();
  return c;
}

EndingClassifier train_ending_classifier(const MaskedEventLM& model, const std::vector<ClozeStory>& dev,
                                         const EndingClassifierConfig& config) {
  if (dev.empty()) throw std::invalid_argument("train_ending_classifier: empty dev set");
  std::vector<nn::Vector> features;
  std::vector<double> targets;
  for (const ClozeStory& s : dev) {
    const nn::Vector p = next_event_distribution(model, s.context_events);
    const auto& right = s.gold == 'A' ? s.ending_a_events : s.ending_b_events;
    const auto& wrong = s.gold == 'A' ? s.ending_b_events : s.ending_a_events;
    features.push_back(ending_features(p, model.vocab, right, wrong));
    targets.push_back(1.0);
    features.push_back(ending_features(p, model.vocab, wrong, right));
    targets.push_back(0.0);
  }
  nn::ParameterSet params;
  nn::Parameter& w = params.add("weights", 1, 3);
  nn::Parameter& b = params.add("bias", 1, 1);
  nn::Adam adam(params, {.learning_rate = config.learning_rate});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Graph g;
    const nn::Expr we = g.param(w), be = g.param(b);
    std::vector<nn::Expr> terms;
    for (std::size_t i = 0; i < features.size(); ++i) {
      terms.push_back(g.sigmoid_bce(g.affine(we, g.input(features[i]), be), targets[i]));
    }
    g.backward(g.mean(terms));
    adam.step();
  }
  EndingClassifier c;
  c.weights = w.value.row(0).transpose();
  c.bias = b.value(0, 0);
  return c;
}

double cloze_accuracy(const MaskedEventLM& model, const std::vector<ClozeStory>& stories) {
  if (stories.empty()) return 0.0;
  std::size_t correct = 0;
  for (const ClozeStory& s : stories) {
    correct += cloze_choose(model, s.context_events, s.ending_a_events, s.ending_b_events).choice == s.gold;
  }
  return static_cast<double>(correct) / static_cast<double>(stories.size());
}

double cloze_accuracy(const MaskedEventLM& model, const EndingClassifier& classifier,
                      const std::vector<ClozeStory>& stories) {
  if (stories.empty()) return 0.0;
  std::size_t correct = 0;
  for (const ClozeStory& s : stories) correct += classifier.classify(model, s).choice == s.gold;
  return static_cast<double>(correct) / static_cast<double>(stories.size());
}

}  // namespace evchain
