#include "evchain/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace evchain {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kFilterModeCount> kModeNames = {
    "all", "salient", "discourse", "salience_aware_discourse", "salient_plus_discourse"};

constexpr std::array<std::string_view, kFilterModeCount> kRowLabels = {
    "All events", "Salient events", "Discourse-filtered events",
    "Salience-aware discourse-filtered events", "Salient + salience-aware discourse-filtered"};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

template <typename F>
auto at_stage(const std::string& stage, const std::string& doc_id, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, doc_id, e.what());
  }
}

double mean_of(const std::vector<SeedResult>& seeds, double SeedResult::*field) {
  if (seeds.empty()) return 0.0;
  double s = 0.0;
  for (const SeedResult& r : seeds) s += r.*field;
  return s / static_cast<double>(seeds.size());
}

}  // namespace

std::string_view to_string(FilterMode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

std::string_view row_label(FilterMode mode) { return kRowLabels[static_cast<std::size_t>(mode)]; }

FilterMode parse_filter_mode(std::string_view s) {
  for (int m = 0; m < kFilterModeCount; ++m) {
    if (kModeNames[static_cast<std::size_t>(m)] == s) return static_cast<FilterMode>(m);
  }
  throw std::invalid_argument("unknown filter mode '" + std::string(s) + "'");
}

std::vector<int> filter_events(const Document& doc, FilterMode mode, const FilterInputs& in) {
  const std::vector<int> all = doc.events_in_text_order();
  auto need = [&](const void* p, const char* what) {
    if (p == nullptr) {
      throw std::invalid_argument(std::string("filter mode ") + std::string(to_string(mode)) + " needs " + what);
    }
  };
  auto salient = [&] {
    need(in.salience_scores, "salience scores");
    if (in.salience_scores->size() != doc.events.size()) {
      throw std::invalid_argument("salience scores must cover every event");
    }
    std::vector<double> ordered;
    for (int i : all) ordered.push_back((*in.salience_scores)[static_cast<std::size_t>(i)]);
    return filter_salient(all, ordered, in.threshold);
  };
  auto in_kept_sentences = [&](const std::vector<DiscourseLabel>* labels, const std::vector<int>& events) {
    need(labels, "discourse labels");
    if (labels->size() != doc.sentences.size()) {
      throw std::invalid_argument("discourse labels must cover every sentence");
    }
    std::vector<int> out;
    for (int i : events) {
      if (in_keep_set((*labels)[static_cast<std::size_t>(doc.events[static_cast<std::size_t>(i)].head.sentence)])) {
        out.push_back(i);
      }
    }
    return out;
  };
  switch (mode) {
    case FilterMode::kAll: return all;
    case FilterMode::kSalient: return salient();
    case FilterMode::kDiscourse:
      return in_kept_sentences(in.discourse_uses_aware_parser ? in.aware_labels : in.base_labels, all);
    case FilterMode::kSalienceAwareDiscourse: return in_kept_sentences(in.aware_labels, all);
    case FilterMode::kSalientPlusDiscourse: return in_kept_sentences(in.aware_labels, salient());
  }
  return all;
}

json PipelineConfig::to_json() const {
  json modes_json = json::array();
  for (FilterMode m : modes) modes_json.push_back(std::string(to_string(m)));
  json orders_json = json::array();
  for (ChainOrder o : orders) orders_json.push_back(std::string(evchain::to_string(o)));
  return {{"seed", seed},
          {"seeds", seeds},
          {"synthetic", evchain::to_json(synthetic)},
          {"corpus_path", corpus_path},
          {"dev_stories_path", dev_stories_path},
          {"test_stories_path", test_stories_path},
          {"dev_stories", dev_stories},
          {"test_stories", test_stories},
          {"modes", modes_json},
          {"orders", orders_json},
          {"chain_policy", std::string(evchain::to_string(chain_policy))},
          {"filter_shortcuts", filter_shortcuts},
          {"discourse_parser", discourse_parser},
          {"salience_flags", salience_flags},
          {"gold_events", gold_events},
          {"extractor_train_docs", extractor_train_docs},
          {"discourse_train_docs", discourse_train_docs},
          {"qa_train_docs", qa_train_docs},
          {"qa_test_docs", qa_test_docs},
          {"run_qa", run_qa},
          {"run_cloze", run_cloze},
          {"extractor", extractor.to_json()},
          {"salience", salience.to_json()},
          {"discourse", discourse.to_json()},
          {"lm", lm.to_json()},
          {"ending", {{"epochs", ending.epochs}, {"learning_rate", ending.learning_rate}}},
          {"qa", qa.to_json()},
          {"output_dir", output_dir},
          {"cache", cache}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "seed", "seeds", "synthetic", "corpus_path", "dev_stories_path", "test_stories_path",
      "dev_stories", "test_stories", "modes", "orders", "chain_policy", "filter_shortcuts",
      "discourse_parser", "salience_flags", "gold_events", "extractor_train_docs",
      "discourse_train_docs", "qa_train_docs", "qa_test_docs", "run_qa", "run_cloze", "extractor",
      "salience", "discourse", "lm", "ending", "qa", "output_dir", "cache"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown pipeline config key '" + key + "'");
  }
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("synthetic")) c.synthetic = synthetic_config_from_json(j.at("synthetic"));
  c.corpus_path = j.value("corpus_path", c.corpus_path);
  c.dev_stories_path = j.value("dev_stories_path", c.dev_stories_path);
  c.test_stories_path = j.value("test_stories_path", c.test_stories_path);
  c.dev_stories = j.value("dev_stories", c.dev_stories);
  c.test_stories = j.value("test_stories", c.test_stories);
  if (j.contains("modes")) {
    c.modes.clear();
    for (const json& m : j.at("modes")) c.modes.push_back(parse_filter_mode(m.get<std::string>()));
  }
  if (j.contains("orders")) {
    c.orders.clear();
    for (const json& o : j.at("orders")) c.orders.push_back(parse_chain_order(o.get<std::string>()));
  }
  if (j.contains("chain_policy")) c.chain_policy = parse_chain_policy(j.at("chain_policy").get<std::string>());
  c.filter_shortcuts = j.value("filter_shortcuts", c.filter_shortcuts);
  c.discourse_parser = j.value("discourse_parser", c.discourse_parser);
  c.salience_flags = j.value("salience_flags", c.salience_flags);
  c.gold_events = j.value("gold_events", c.gold_events);
  c.extractor_train_docs = j.value("extractor_train_docs", c.extractor_train_docs);
  c.discourse_train_docs = j.value("discourse_train_docs", c.discourse_train_docs);
  c.qa_train_docs = j.value("qa_train_docs", c.qa_train_docs);
  c.qa_test_docs = j.value("qa_test_docs", c.qa_test_docs);
  c.run_qa = j.value("run_qa", c.run_qa);
  c.run_cloze = j.value("run_cloze", c.run_cloze);
  if (j.contains("extractor")) c.extractor = ExtractorConfig::from_json(j.at("extractor"));
  if (j.contains("salience")) c.salience = SalienceConfig::from_json(j.at("salience"));
  if (j.contains("discourse")) c.discourse = DiscourseConfig::from_json(j.at("discourse"));
  if (j.contains("lm")) c.lm = MlmConfig::from_json(j.at("lm"));
  if (j.contains("ending")) {
    c.ending.epochs = j.at("ending").value("epochs", c.ending.epochs);
    c.ending.learning_rate = j.at("ending").value("learning_rate", c.ending.learning_rate);
  }
  if (j.contains("qa")) c.qa = QaConfig::from_json(j.at("qa"));
  c.output_dir = j.value("output_dir", c.output_dir);
  c.cache = j.value("cache", c.cache);

  if (c.discourse_parser != "base" && c.discourse_parser != "salience_aware") {
    throw std::invalid_argument("discourse_parser must be \"base\" or \"salience_aware\"");
  }
  if (c.salience_flags != "predicted" && c.salience_flags != "gold") {
    throw std::invalid_argument("salience_flags must be \"predicted\" or \"gold\"");
  }
  if (c.seeds.empty()) throw std::invalid_argument("at least one seed is required");
  return c;
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j.erase("cache");
  return hex(fnv1a(j.dump()));
}

double CellResult::mean_cloze_unsupervised() const { return mean_of(seeds, &SeedResult::cloze_unsupervised); }
double CellResult::mean_cloze_supervised() const { return mean_of(seeds, &SeedResult::cloze_supervised); }

double CellResult::mean_qa_macro_f1() const {
  if (seeds.empty()) return 0.0;
  double s = 0.0;
  for (const SeedResult& r : seeds) s += r.qa.macro_f1;
  return s / static_cast<double>(seeds.size());
}

double CellResult::mean_qa_em() const {
  if (seeds.empty()) return 0.0;
  double s = 0.0;
  for (const SeedResult& r : seeds) s += r.qa.exact_match;
  return s / static_cast<double>(seeds.size());
}

const CellResult& MetricsReport::cell(FilterMode mode, ChainOrder order) const {
  for (const CellResult& c : cells) {
    if (c.mode == mode && c.order == order) return c;
  }
  throw std::out_of_range("report has no cell " + std::string(to_string(mode)) + "/" +
                          std::string(to_string(order)));
}

json MetricsReport::to_json() const {
  json cells_json = json::array();
  for (const CellResult& c : cells) {
    json per_seed = json::array();
    std::array<double, kQaCategoryCount> category_sum{};
    std::array<std::size_t, kQaCategoryCount> category_n{};
    for (const SeedResult& s : c.seeds) {
      per_seed.push_back({{"seed", s.seed},
                          {"cloze_unsupervised", s.cloze_unsupervised},
                          {"cloze_supervised", s.cloze_supervised},
                          {"qa", evchain::to_json(s.qa)}});
      for (std::size_t k = 0; k < kQaCategoryCount; ++k) {
        if (s.qa.category_count[k] > 0) {
          category_sum[k] += s.qa.category_f1[k];
          ++category_n[k];
        }
      }
    }
    json per_category = json::object();
    for (std::size_t k = 0; k < kQaCategoryCount; ++k) {
      per_category[std::string(to_string(static_cast<QaCategory>(k)))] =
          category_n[k] > 0 ? json(category_sum[k] / static_cast<double>(category_n[k])) : json(nullptr);
    }
    cells_json.push_back({{"mode", std::string(to_string(c.mode))},
                          {"order", std::string(evchain::to_string(c.order))},
                          {"events", c.event_count},
                          {"chains", c.chain_count},
                          {"windows", c.window_count},
                          {"cloze_unsupervised", c.mean_cloze_unsupervised()},
                          {"cloze_supervised", c.mean_cloze_supervised()},
                          {"qa_macro_f1", c.mean_qa_macro_f1()},
                          {"qa_em", c.mean_qa_em()},
                          {"qa_per_category_f1", per_category},
                          {"per_seed", per_seed}});
  }
  return {{"config_hash", config_hash},
          {"seeds", seeds},
          {"upstream",
           {{"salience_accuracy", salience_accuracy},
            {"discourse_base", evchain::to_json(discourse_base)},
            {"discourse_salience_aware", evchain::to_json(discourse_aware)}}},
          {"cells", cells_json}};
}

std::string MetricsReport::table() const {
  std::vector<ChainOrder> orders;
  std::vector<FilterMode> modes;
  for (const CellResult& c : cells) {
    if (std::find(orders.begin(), orders.end(), c.order) == orders.end()) orders.push_back(c.order);
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
  }
  std::string out = fmt::format("config {}  seeds", config_hash);
  for (std::uint64_t s : seeds) out += fmt::format(" {}", s);
  out += "\n\n";
  std::string header = fmt::format("{:<46}", "Filter");
  for (ChainOrder o : orders) {
    const std::string tag(to_string(o));
    header += fmt::format(" | {:>9} {:>9} {:>9} {:>9}", tag.substr(0, 4) + " unsup", tag.substr(0, 4) + " sup",
                          "QA F1", "QA EM");
  }
  out += header + "\n" + std::string(header.size(), '-') + "\n";
  for (FilterMode m : modes) {
    std::string row = fmt::format("{:<46}", row_label(m));
    for (ChainOrder o : orders) {
      const CellResult& c = cell(m, o);
      row += fmt::format(" | {:>9.1f} {:>9.1f} {:>9.1f} {:>9.1f}", 100 * c.mean_cloze_unsupervised(),
                         100 * c.mean_cloze_supervised(), 100 * c.mean_qa_macro_f1(), 100 * c.mean_qa_em());
    }
    out += row + "\n";
  }
  out += fmt::format("\nsalience accuracy {:.1f}; discourse macro F1 base {:.1f}, salience-aware {:.1f}\n",
                     100 * salience_accuracy, 100 * discourse_base.macro_f1, 100 * discourse_aware.macro_f1);
  return out;
}

namespace {

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return hex(fnv1a(os.str()));
}

struct Corpus {
  std::vector<Document> gold;
  std::vector<ClozeStory> dev;
  std::vector<ClozeStory> test;
  std::string fingerprint;
};

Corpus load_corpus(const PipelineConfig& c) {
  Corpus corpus;
  if (!c.corpus_path.empty()) {
    corpus.gold = load_documents(c.corpus_path);
    corpus.fingerprint = file_fingerprint(c.corpus_path);
  } else {
    corpus.gold = generate_synthetic(c.synthetic);
    corpus.fingerprint = hex(fnv1a(evchain::to_json(c.synthetic).dump()));
  }
  if (c.run_cloze) {
    corpus.dev = c.dev_stories_path.empty() ? generate_cloze_stories(c.synthetic, c.dev_stories, 1)
                                            : load_stories(c.dev_stories_path);
    corpus.test = c.test_stories_path.empty() ? generate_cloze_stories(c.synthetic, c.test_stories, 2)
                                              : load_stories(c.test_stories_path);
  }
  return corpus;
}

template <typename Model, typename Train>
Model cached_model(const PipelineConfig& c, const std::string& stage, const json& key, Train&& train) {
  const std::filesystem::path dir = std::filesystem::path(c.output_dir) / "cache";
  const std::filesystem::path path = dir / (stage + "-" + hex(fnv1a(key.dump())) + ".json");
  if (c.cache && std::filesystem::exists(path)) {
    spdlog::info("{}: loading cached model {}", stage, path.string());
    return Model::load(path);
  }
  Model m = train();
  if (c.cache) {
    std::filesystem::create_directories(dir);
    m.save(path);
  }
  return m;
}

std::vector<std::size_t> prefix_range(std::size_t n, int count) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0, count))); ++i) {
    out.push_back(i);
  }
  return out;
}

struct Upstream {
  std::vector<Document> docs;  // events as predicted
  std::vector<TemporalGraph> graphs;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<DiscourseLabel>> base_labels;
  std::vector<std::vector<DiscourseLabel>> aware_labels;
  double salience_accuracy = 0.0;
  ClassificationReport discourse_base;
  ClassificationReport discourse_aware;
};

std::vector<bool> salience_targets(const Document& doc) {
  if (doc.gold && doc.gold->abstract) return derive_salience_labels(doc, lemma_set(*doc.gold->abstract));
  if (doc.gold && doc.gold->salience) return *doc.gold->salience;
  throw std::invalid_argument("document has neither an abstract nor gold salience flags");
}

Upstream run_upstream(const PipelineConfig& c, const Corpus& corpus) {
  Upstream up;
  const std::size_t n = corpus.gold.size();
  json key = {{"corpus", corpus.fingerprint}, {"seed", c.seed}};

  if (c.gold_events) {
    for (const Document& d : corpus.gold) {
      up.docs.push_back(d);
      up.graphs.push_back(at_stage("extract", d.doc_id, [&] { return gold_graph(d); }));
    }
  } else {
    std::vector<Document> train;
    for (std::size_t i : prefix_range(n, c.extractor_train_docs)) train.push_back(corpus.gold[i]);
    key["extractor"] = c.extractor.to_json();
    key["extractor_train_docs"] = c.extractor_train_docs;
    spdlog::info("extract: training on {} documents", train.size());
    const ExtractorModel extractor = at_stage("extract", "", [&] {
      return cached_model<ExtractorModel>(c, "extractor", key, [&] { return train_extractor(train, c.extractor); });
    });
    for (const Document& d : corpus.gold) {
      at_stage("extract", d.doc_id, [&] {
        ExtractedGraph g = decode(extractor, d);
        up.docs.push_back(with_predicted_events(d, g));
        up.graphs.push_back(std::move(g.graph));
        return 0;
      });
    }
  }

  std::vector<std::vector<bool>> targets;
  for (const Document& d : up.docs) {
    targets.push_back(at_stage("salience", d.doc_id, [&] { return salience_targets(d); }));
  }
  key["salience"] = c.salience.to_json();
  spdlog::info("salience: training on {} documents", up.docs.size());
  const SalienceModel salience = at_stage("salience", "", [&] {
    return cached_model<SalienceModel>(c, "salience", key, [&] { return train_salience(up.docs, targets, c.salience); });
  });
  std::size_t agree = 0, total = 0;
  for (std::size_t d = 0; d < n; ++d) {
    up.scores.push_back(at_stage("salience", up.docs[d].doc_id, [&] { return score_document(salience, up.docs[d]); }));
    for (std::size_t i = 0; i < targets[d].size(); ++i) {
      agree += (up.scores[d][i] > 0.5) == targets[d][i];
      ++total;
    }
  }
  up.salience_accuracy = total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);

  std::vector<std::vector<bool>> flags;
  for (std::size_t d = 0; d < n; ++d) {
    if (c.salience_flags == "gold") {
      const Document& doc = up.docs[d];
      if (!doc.gold || !doc.gold->salience) {
        throw PipelineError("discourse", doc.doc_id, "gold salience flags requested but absent");
      }
      flags.push_back(*doc.gold->salience);
    } else {
      std::vector<bool> f;
      for (double s : up.scores[d]) f.push_back(s > 0.5);
      flags.push_back(std::move(f));
    }
  }
  std::vector<Document> train;
  std::vector<std::vector<bool>> train_flags;
  for (std::size_t i : prefix_range(n, c.discourse_train_docs)) {
    train.push_back(up.docs[i]);
    train_flags.push_back(flags[i]);
  }
  key["discourse"] = c.discourse.to_json();
  key["discourse_train_docs"] = c.discourse_train_docs;
  key["salience_flags"] = c.salience_flags;
  DiscourseConfig base_config = c.discourse;
  base_config.salience_aware = false;
  DiscourseConfig aware_config = c.discourse;
  aware_config.salience_aware = true;
  spdlog::info("discourse: training base and salience-aware parsers on {} documents", train.size());
  const DiscourseModel base = at_stage("discourse", "", [&] {
    return cached_model<DiscourseModel>(c, "discourse-base", key,
                                        [&] { return train_discourse(train, train_flags, base_config); });
  });
  const DiscourseModel aware = at_stage("discourse", "", [&] {
    return cached_model<DiscourseModel>(c, "discourse-aware", key,
                                        [&] { return train_discourse(train, train_flags, aware_config); });
  });
  std::vector<DiscourseLabel> gold_held, base_held, aware_held;
  for (std::size_t d = 0; d < n; ++d) {
    const Document& doc = up.docs[d];
    at_stage("discourse", doc.doc_id, [&] {
      up.base_labels.push_back(classify_document(base, doc, flags[d]).labels);
      up.aware_labels.push_back(classify_document(aware, doc, flags[d]).labels);
      return 0;
    });
    const bool held_out = d >= train.size() || train.size() == n;
    if (held_out && doc.gold && doc.gold->discourse) {
      gold_held.insert(gold_held.end(), doc.gold->discourse->begin(), doc.gold->discourse->end());
      base_held.insert(base_held.end(), up.base_labels[d].begin(), up.base_labels[d].end());
      aware_held.insert(aware_held.end(), up.aware_labels[d].begin(), up.aware_labels[d].end());
    }
  }
  up.discourse_base = classification_report(gold_held, base_held);
  up.discourse_aware = classification_report(gold_held, aware_held);
  return up;
}

std::vector<EventChain> chains_for(const PipelineConfig& c, const Document& doc, const TemporalGraph& graph,
                                   const std::vector<int>& kept, ChainOrder order) {
  if (kept.empty()) return {};
  if (order == ChainOrder::kTextual) return {EventChain{kept, ChainOrder::kTextual}};
  (void)doc;
  return extract_chains(induced_subgraph(graph, kept, c.filter_shortcuts), c.chain_policy);
}

std::vector<QaExample> qa_examples(const Corpus& corpus, const Upstream& up,
                                   const std::vector<std::vector<EventChain>>& chains,
                                   const std::vector<std::size_t>& doc_indices) {
  std::vector<QaExample> out;
  for (std::size_t d : doc_indices) {
    const Document& gold_doc = corpus.gold[d];
    if (!gold_doc.gold || !gold_doc.gold->qa) continue;
    std::vector<QaContentEvent> content;
    for (const EventChain& chain : chains[d]) {
      for (int e : chain.events) {
        const EventMention& m = up.docs[d].events[static_cast<std::size_t>(e)];
        content.push_back({m.lemma, m.head});
      }
    }
    for (const QaItem& item : *gold_doc.gold->qa) {
      QaExample ex;
      ex.question = item.question;
      ex.content = content;
      for (int a : item.answer_event_indices) ex.gold.insert(gold_doc.events.at(static_cast<std::size_t>(a)).head);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace

MetricsReport run_pipeline(const PipelineConfig& config) {
  const Corpus corpus = at_stage("load", "", [&] { return load_corpus(config); });
  if (corpus.gold.empty()) throw PipelineError("load", "", "corpus is empty");
  const Upstream up = run_upstream(config, corpus);
  const std::size_t n = corpus.gold.size();

  MetricsReport report;
  report.config_hash = config.hash();
  report.seeds = config.seeds;
  report.salience_accuracy = up.salience_accuracy;
  report.discourse_base = up.discourse_base;
  report.discourse_aware = up.discourse_aware;

  std::vector<std::size_t> qa_train = prefix_range(n, config.qa_train_docs);
  std::vector<std::size_t> qa_test;
  for (std::size_t i = qa_train.size(); i < std::min(n, qa_train.size() + static_cast<std::size_t>(std::max(0, config.qa_test_docs))); ++i) {
    qa_test.push_back(i);
  }
  const PrefixTable prefixes = PrefixTable::standard();

  for (FilterMode mode : config.modes) {
    for (ChainOrder order : config.orders) {
      const std::string stage = fmt::format("cell {}/{}", to_string(mode), to_string(order));
      CellResult cell;
      cell.mode = mode;
      cell.order = order;
      std::vector<std::vector<EventChain>> chains(n);
      std::vector<std::vector<std::string>> windows;
      for (std::size_t d = 0; d < n; ++d) {
        const Document& doc = up.docs[d];
        at_stage(stage, doc.doc_id, [&] {
          FilterInputs in;
          in.salience_scores = &up.scores[d];
          in.base_labels = &up.base_labels[d];
          in.aware_labels = &up.aware_labels[d];
          in.discourse_uses_aware_parser = config.discourse_parser == "salience_aware";
          const std::vector<int> kept = filter_events(doc, mode, in);
          cell.event_count += kept.size();
          chains[d] = chains_for(config, doc, up.graphs[d], kept, order);
          for (const EventChain& chain : chains[d]) {
            std::vector<std::string> lemmas;
            for (int e : chain.events) lemmas.push_back(doc.events[static_cast<std::size_t>(e)].lemma);
            for (auto& w : make_windows(lemmas, config.lm.window)) windows.push_back(std::move(w));
          }
          cell.chain_count += chains[d].size();
          return 0;
        });
      }
      cell.window_count = windows.size();
      const std::vector<QaExample> train_examples = qa_examples(corpus, up, chains, qa_train);
      const std::vector<QaExample> test_examples = qa_examples(corpus, up, chains, qa_test);
      spdlog::info("{}: {} events, {} chains, {} windows", stage, cell.event_count, cell.chain_count, windows.size());

      for (std::uint64_t seed : config.seeds) {
        SeedResult r;
        r.seed = seed;
        if (config.run_cloze) {
          at_stage(stage + " lm", "", [&] {
            MlmConfig lm = config.lm;
            lm.seed = seed;
            const MaskedEventLM model = train_mlm(windows, lm);
            r.cloze_unsupervised = cloze_accuracy(model, corpus.test);
            const EndingClassifier classifier = train_ending_classifier(model, corpus.dev, config.ending);
            r.cloze_supervised = cloze_accuracy(model, classifier, corpus.test);
            return 0;
          });
        }
        if (config.run_qa && !train_examples.empty() && !test_examples.empty()) {
          at_stage(stage + " qa", "", [&] {
            QaConfig qa = config.qa;
            qa.seed = seed;
            const QaModel model = train_qa(train_examples, qa);
            r.qa = evaluate_qa(model, test_examples, prefixes);
            return 0;
          });
        }
        spdlog::info("{} seed {}: cloze {:.3f}/{:.3f} qa F1 {:.3f} EM {:.3f}", stage, seed, r.cloze_unsupervised,
                     r.cloze_supervised, r.qa.macro_f1, r.qa.exact_match);
        cell.seeds.push_back(std::move(r));
      }
      report.cells.push_back(std::move(cell));
    }
  }

  at_stage("report", "", [&] {
    std::filesystem::create_directories(config.output_dir);
    write_json_file(std::filesystem::path(config.output_dir) / "report.json", report.to_json());
    write_file_atomic(std::filesystem::path(config.output_dir) / "report.txt", report.table());
    return 0;
  });
  return report;
}

}  // namespace evchain
