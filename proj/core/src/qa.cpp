#include "evchain/qa.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

std::string_view to_string(QaCategory c) {
  switch (c) {
    case QaCategory::kBefore: return "Before";
    case QaCategory::kAfter: return "After";
    case QaCategory::kCooccurring: return "Co-occurring";
    case QaCategory::kOther: return "Other";
  }
  return "Other";
}

QaCategory parse_qa_category(std::string_view s) {
  for (int c = 0; c < kQaCategoryCount; ++c) {
    if (to_string(static_cast<QaCategory>(c)) == s) return static_cast<QaCategory>(c);
  }
  throw std::invalid_argument("unknown question category '" + std::string(s) + "'");
}

std::vector<std::string> tokenize_question(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    std::size_t b = 0, e = word.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(word[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(word[e - 1]))) --e;
    if (e > b) out.push_back(lowercase(word.substr(b, e - b)));
  }
  return out;
}

PrefixTable PrefixTable::standard() {
  PrefixTable t;
  t.add("What happened before", QaCategory::kBefore);
  t.add("What event happened before", QaCategory::kBefore);
  t.add("What events happened before", QaCategory::kBefore);
  t.add("What happened after", QaCategory::kAfter);
  t.add("What event happened after", QaCategory::kAfter);
  t.add("What will happen after", QaCategory::kAfter);
  t.add("What happened while", QaCategory::kCooccurring);
  t.add("What happened during", QaCategory::kCooccurring);
  return t;
}

PrefixTable PrefixTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  PrefixTable t;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("expected prefix<TAB>category", number);
    try {
      t.add(line.substr(0, tab), parse_qa_category(line.substr(tab + 1)));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what(), number);
    }
  }
  return t;
}

void PrefixTable::add(const std::string& prefix, QaCategory category) {
  std::vector<std::string> words = tokenize_question(prefix);
  if (words.empty()) throw std::invalid_argument("empty question prefix");
  entries_.emplace_back(std::move(words), category);
}

QaCategory PrefixTable::categorize(const std::vector<std::string>& question) const {
  std::vector<std::string> q;
  for (const std::string& w : question) q.push_back(lowercase(w));
  std::size_t best = 0;
  QaCategory category = QaCategory::kOther;
  for (const auto& [words, c] : entries_) {
    if (words.size() <= best || words.size() > q.size()) continue;
    if (std::equal(words.begin(), words.end(), q.begin())) {
      best = words.size();
      category = c;
    }
  }
  return category;
}

QaCategory PrefixTable::categorize(std::string_view question) const {
  return categorize(tokenize_question(question));
}

json to_json(const QaExample& e) {
  json content = json::array();
  for (const QaContentEvent& c : e.content) {
    content.push_back({{"lemma", c.lemma}, {"sent", c.head.sentence}, {"tok", c.head.token}});
  }
  json answers = json::array();
  for (const TokenRef& r : e.gold) answers.push_back({r.sentence, r.token});
  return {{"question", e.question}, {"content", content}, {"answers", answers}};
}

QaExample qa_example_from_json(const json& j, std::size_t line) {
  try {
    QaExample e;
    e.question = j.at("question").get<std::vector<std::string>>();
    for (const json& c : j.at("content")) {
      e.content.push_back({c.at("lemma").get<std::string>(), {c.at("sent").get<int>(), c.at("tok").get<int>()}});
    }
    for (const json& a : j.at("answers")) e.gold.insert({a.at(0).get<int>(), a.at(1).get<int>()});
    return e;
  } catch (const json::exception& err) {
    throw FormatError(std::string("malformed QA record: ") + err.what(), line);
  }
}

QaInput build_input(const std::vector<std::string>& question, const std::vector<std::string>& content) {
  if (question.empty()) throw std::invalid_argument("build_input: empty question");
  if (content.empty()) throw std::invalid_argument("build_input: empty content");
  QaInput in;
  in.tokens = question;
  in.separator = in.tokens.size();
  in.tokens.emplace_back(kSeparatorSymbol);
  in.content_offset = in.tokens.size();
  in.tokens.insert(in.tokens.end(), content.begin(), content.end());
  return in;
}

json QaConfig::to_json() const {
  return {{"seed", seed},         {"embedding_dim", embedding_dim}, {"hidden_dim", hidden_dim},
          {"epochs", epochs},     {"learning_rate", learning_rate}, {"init_scale", init_scale},
          {"match_feature", match_feature}};
}

QaConfig QaConfig::from_json(const json& j) {
  QaConfig c;
  c.seed = j.value("seed", c.seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.match_feature = j.value("match_feature", c.match_feature);
  return c;
}

QaModel QaModel::create(const QaConfig& config, Vocabulary vocab) {
  QaModel m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.embeddings = &m.params.add("embeddings", config.embedding_dim, m.vocab.size());
  m.encoder = nn::RecurrentEncoder::create(m.params, "encoder",
                                           config.embedding_dim + (config.match_feature ? 1 : 0),
                                           config.hidden_dim);
  m.head_w = &m.params.add("head.w", 1, m.encoder.output_dim());
  m.head_b = &m.params.add("head.b", 1, 1);
  nn::Rng rng(config.seed);
  m.params.init_uniform(rng, config.init_scale);
  m.encoder.set_forget_bias(1.0);
  return m;
}

std::vector<nn::Expr> QaModel::content_logits(nn::Graph& g, const QaInput& input) const {
  std::set<std::string> question_side(input.tokens.begin(), input.tokens.begin() + static_cast<long>(input.separator));
  std::set<std::string> content_side(input.tokens.begin() + static_cast<long>(input.content_offset), input.tokens.end());
  std::vector<nn::Expr> inputs;
  for (std::size_t i = 0; i < input.tokens.size(); ++i) {
    nn::Expr x = g.lookup(*embeddings, vocab.id(input.tokens[i]));
    if (config.match_feature) {
      const auto& other = i < input.separator ? content_side : question_side;
      const bool match = i != input.separator && other.count(input.tokens[i]) > 0;
      const nn::Expr parts[2] = {x, g.scalar(match ? 1.0 : 0.0)};
      x = g.concat(parts);
    }
    inputs.push_back(x);
  }
  const std::vector<nn::Expr> states = encoder.encode(g, inputs);
  const nn::Expr w = g.param(*head_w), b = g.param(*head_b);
  std::vector<nn::Expr> out;
  for (std::size_t i = input.content_offset; i < states.size(); ++i) out.push_back(g.affine(w, states[i], b));
  return out;
}

std::vector<std::string> question_lemmas(const std::vector<std::string>& question) {
  std::vector<std::string> out;
  for (const std::string& w : question) out.push_back(lemmatize(lowercase(w)));
  return out;
}

namespace {

std::vector<std::string> content_lemmas(const std::vector<QaContentEvent>& content) {
  std::vector<std::string> out;
  for (const QaContentEvent& c : content) out.push_back(c.lemma);
  return out;
}

}  // namespace

nn::Expr QaModel::loss(nn::Graph& g, const QaExample& example) const {
  const QaInput input = build_input(question_lemmas(example.question), content_lemmas(example.content));
  const std::vector<nn::Expr> z = content_logits(g, input);
  std::vector<nn::Expr> terms;
  for (std::size_t k = 0; k < z.size(); ++k) {
    terms.push_back(g.sigmoid_bce(z[k], example.gold.count(example.content[k].head) ? 1.0 : 0.0));
  }
  return g.mean(terms);
}

json QaModel::to_json() const {
  return {{"kind", "qa"}, {"config", config.to_json()}, {"vocab", vocab.to_json()}, {"params", params.to_json()}};
}

QaModel QaModel::from_json(const json& j) {
  if (j.value("kind", "") != "qa") throw std::invalid_argument("not a QA checkpoint");
  QaModel m = create(QaConfig::from_json(j.at("config")), Vocabulary::from_json(j.at("vocab")));
  m.params.load_json(j.at("params"));
  return m;
}

void QaModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

QaModel QaModel::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

QaModel train_qa(const std::vector<QaExample>& examples, const QaConfig& config) {
  if (examples.empty()) throw std::invalid_argument("train_qa: empty training set");
  Vocabulary vocab({std::string(kSeparatorSymbol)});
  for (const QaExample& e : examples) {
    for (const std::string& w : question_lemmas(e.question)) vocab.add(w);
    for (const QaContentEvent& c : e.content) vocab.add(c.lemma);
  }
  QaModel model = QaModel::create(config, std::move(vocab));
  nn::Adam adam(model.params, {.learning_rate = config.learning_rate});
  nn::Rng rng = nn::Rng(config.seed).fork(1);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].content.empty()) order.push_back(i);
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      nn::Graph g;
      const nn::Expr loss = model.loss(g, examples[i]);
      total += g.scalar_value(loss);
      g.backward(loss);
      adam.step();
    }
    spdlog::debug("qa epoch {} loss {:.6f}", epoch + 1, order.empty() ? 0.0 : total / static_cast<double>(order.size()));
  }
  return model;
}

AnswerSet answer(const QaModel& model, const std::vector<std::string>& question,
                 const std::vector<QaContentEvent>& content) {
  if (content.empty()) return {};
  nn::Graph g;
  const QaInput input = build_input(question_lemmas(question), content_lemmas(content));
  const std::vector<nn::Expr> z = model.content_logits(g, input);
  AnswerSet out;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (nn::sigmoid(g.scalar_value(z[k])) > 0.5) out.insert(content[k].head);
  }
  return out;
}

double answer_f1(const AnswerSet& predicted, const AnswerSet& gold) {
  if (predicted.empty() && gold.empty()) return 1.0;
  if (predicted.empty() || gold.empty()) return 0.0;
  std::size_t overlap = 0;
  for (const TokenRef& r : predicted) overlap += gold.count(r);
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(predicted.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

QaMetrics qa_metrics(const std::vector<AnswerSet>& predictions, const std::vector<AnswerSet>& golds,
                     const std::vector<QaCategory>& categories) {
  if (predictions.size() != golds.size() || categories.size() != golds.size()) {
    throw std::invalid_argument("qa_metrics: one prediction, gold set and category per question required");
  }
  QaMetrics m;
  m.count = golds.size();
  double f1_sum = 0.0, em_sum = 0.0;
  std::array<double, kQaCategoryCount> sums{};
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const double f1 = answer_f1(predictions[i], golds[i]);
    f1_sum += f1;
    em_sum += predictions[i] == golds[i] ? 1.0 : 0.0;
    const auto c = static_cast<std::size_t>(categories[i]);
    sums[c] += f1;
    ++m.category_count[c];
  }
  if (m.count > 0) {
    m.macro_f1 = f1_sum / static_cast<double>(m.count);
    m.exact_match = em_sum / static_cast<double>(m.count);
  }
  for (std::size_t c = 0; c < kQaCategoryCount; ++c) {
    m.category_f1[c] = m.category_count[c] > 0 ? sums[c] / static_cast<double>(m.category_count[c]) : 0.0;
  }
  return m;
}

json to_json(const QaMetrics& m) {
  json per = json::object();
  json counts = json::object();
  for (int c = 0; c < kQaCategoryCount; ++c) {
    const std::string name(to_string(static_cast<QaCategory>(c)));
    const auto k = static_cast<std::size_t>(c);
    per[name] = m.category_count[k] > 0 ? json(m.category_f1[k]) : json(nullptr);
    counts[name] = m.category_count[k];
  }
  return {{"macro_f1", m.macro_f1}, {"em", m.exact_match}, {"count", m.count},
          {"per_category", per}, {"per_category_count", counts}};
}

QaMetrics evaluate_qa(const QaModel& model, const std::vector<QaExample>& examples, const PrefixTable& table) {
  std::vector<AnswerSet> predictions, golds;
  std::vector<QaCategory> categories;
  for (const QaExample& e : examples) {
    predictions.push_back(answer(model, e.question, e.content));
    golds.push_back(e.gold);
    categories.push_back(table.categorize(e.question));
  }
  return qa_metrics(predictions, golds, categories);
}

}  // namespace evchain
