// Command-line front end: one subcommand per stage plus the full pipeline.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "evchain/chains.hpp"
#include "evchain/corpus.hpp"
#include "evchain/discourse.hpp"
#include "evchain/event_lm.hpp"
#include "evchain/extract.hpp"
#include "evchain/pipeline.hpp"
#include "evchain/qa.hpp"
#include "evchain/salience.hpp"

namespace {

using nlohmann::json;
using namespace evchain;

std::map<std::string, json> records_by_doc(const std::string& path) {
  std::map<std::string, json> out;
  for (json& r : read_json_lines(path)) {
    std::string id = r.at("doc_id").get<std::string>();
    out.emplace(std::move(id), std::move(r));
  }
  return out;
}

const json& record_for(const std::map<std::string, json>& records, const std::string& doc_id,
                       const std::string& what) {
  auto it = records.find(doc_id);
  if (it == records.end()) throw std::runtime_error(what + " has no record for document " + doc_id);
  return it->second;
}

std::vector<bool> flags_from_scores(const json& record, const Document& doc) {
  std::vector<bool> flags;
  for (const json& s : record.at("scores")) flags.push_back(s.get<double>() > 0.5);
  if (flags.size() != doc.events.size()) {
    throw std::runtime_error("score count does not match events of " + doc.doc_id);
  }
  return flags;
}

std::vector<bool> gold_flags(const Document& doc) {
  if (doc.gold && doc.gold->salience) return *doc.gold->salience;
  if (doc.gold && doc.gold->abstract) return derive_salience_labels(doc, lemma_set(*doc.gold->abstract));
  throw std::runtime_error("document " + doc.doc_id + " has neither salience flags nor an abstract");
}

json chain_record(const std::string& doc_id, ChainOrder order, const json& events,
                  const std::vector<EventChain>& chains) {
  json out = json::array();
  for (const EventChain& c : chains) {
    json chain = json::array();
    for (int e : c.events) chain.push_back(events.at(static_cast<std::size_t>(e)));
    out.push_back(chain);
  }
  return {{"doc_id", doc_id}, {"order", std::string(to_string(order))}, {"chains", out}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event chains with salience and discourse filtering"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  // synth
  SyntheticConfig synth;
  std::string synth_out, synth_dev, synth_test;
  int dev_count = 300, test_count = 500;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic news corpus");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--docs", synth.num_docs);
  synth_cmd->add_option("--distractor-rate", synth.distractor_rate);
  synth_cmd->add_option("--cue-rate", synth.cue_rate);
  synth_cmd->add_option("--cooccur-rate", synth.cooccur_rate);
  synth_cmd->add_option("--inversion-rate", synth.inversion_rate);
  synth_cmd->add_option("--report-rate", synth.report_rate);
  synth_cmd->add_option("--ending-noise", synth.ending_noise);
  synth_cmd->add_option("--vocab", synth.vocab_size);
  synth_cmd->add_option("--topics", synth.topics);
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--dev-stories", synth_dev, "Also write cloze dev stories here");
  synth_cmd->add_option("--test-stories", synth_test, "Also write cloze test stories here");
  synth_cmd->add_option("--dev-count", dev_count);
  synth_cmd->add_option("--test-count", test_count);

  // extract-train / extract-graph
  ExtractorConfig extractor;
  std::string corpus_path, model_path, in_path, out_path;
  auto* extract_train = app.add_subcommand("extract-train", "Train the event and relation extractor");
  extract_train->add_option("--corpus", corpus_path)->required();
  extract_train->add_option("--out", model_path)->required();
  extract_train->add_option("--epochs", extractor.epochs);
  extract_train->add_option("--seed", extractor.seed);
  auto* extract_graph = app.add_subcommand("extract-graph", "Decode temporal graphs");
  extract_graph->add_option("--model", model_path)->required();
  extract_graph->add_option("--in", in_path)->required();
  extract_graph->add_option("--out", out_path)->required();

  // chains
  std::string order_name = "temporal", policy_name = "partition";
  auto* chains_cmd = app.add_subcommand("chains", "Extract event chains from graphs");
  chains_cmd->add_option("--graphs", in_path)->required();
  chains_cmd->add_option("--order", order_name)->check(CLI::IsMember({"temporal", "textual"}));
  chains_cmd->add_option("--policy", policy_name)->check(CLI::IsMember({"partition", "overlap"}));
  chains_cmd->add_option("--out", out_path)->required();

  // salience
  SalienceConfig salience;
  auto* salience_cmd = app.add_subcommand("salience", "Event salience");
  salience_cmd->require_subcommand(1);
  auto* salience_train = salience_cmd->add_subcommand("train", "Train the salience scorer");
  salience_train->add_option("--corpus", corpus_path)->required();
  salience_train->add_option("--out", model_path)->required();
  salience_train->add_option("--epochs", salience.epochs);
  salience_train->add_option("--seed", salience.seed);
  auto* salience_score = salience_cmd->add_subcommand("score", "Score events");
  salience_score->add_option("--model", model_path)->required();
  salience_score->add_option("--in", in_path)->required();
  salience_score->add_option("--out", out_path)->required();

  // discourse
  DiscourseConfig discourse;
  std::string aware = "on", scores_path;
  auto* discourse_cmd = app.add_subcommand("discourse", "News discourse parsing");
  discourse_cmd->require_subcommand(1);
  auto* discourse_train = discourse_cmd->add_subcommand("train", "Train a discourse parser");
  discourse_train->add_option("--corpus", corpus_path)->required();
  discourse_train->add_option("--salience-aware", aware)->check(CLI::IsMember({"on", "off"}));
  discourse_train->add_option("--scores", scores_path, "Salience scores; gold flags otherwise");
  discourse_train->add_option("--out", model_path)->required();
  discourse_train->add_option("--epochs", discourse.epochs);
  discourse_train->add_option("--seed", discourse.seed);
  auto* discourse_label = discourse_cmd->add_subcommand("label", "Label sentences");
  discourse_label->add_option("--model", model_path)->required();
  discourse_label->add_option("--in", in_path)->required();
  discourse_label->add_option("--scores", scores_path)->required();
  discourse_label->add_option("--out", out_path)->required();

  // lm / cloze
  MlmConfig lm;
  std::string stories_path, dev_path;
  auto* lm_cmd = app.add_subcommand("lm", "Masked event language model");
  lm_cmd->require_subcommand(1);
  auto* lm_train = lm_cmd->add_subcommand("train", "Train on chain windows");
  lm_train->add_option("--chains", in_path)->required();
  lm_train->add_option("--out", model_path)->required();
  lm_train->add_option("--window", lm.window);
  lm_train->add_option("--epochs", lm.epochs);
  lm_train->add_option("--seed", lm.seed);
  auto* cloze_cmd = app.add_subcommand("cloze", "Narrative cloze");
  cloze_cmd->require_subcommand(1);
  auto* cloze_eval = cloze_cmd->add_subcommand("eval", "Evaluate on cloze stories");
  cloze_eval->add_option("--model", model_path)->required();
  cloze_eval->add_option("--stories", stories_path)->required();
  cloze_eval->add_option("--dev", dev_path, "Dev stories for the ending classifier");
  cloze_eval->add_option("--out", out_path)->required();

  // qa
  QaConfig qa;
  std::string prefixes_path, chains_path;
  auto* qa_cmd = app.add_subcommand("qa", "Temporal ordering QA");
  qa_cmd->require_subcommand(1);
  auto* qa_data = qa_cmd->add_subcommand("data", "Build QA examples from documents and chains");
  qa_data->add_option("--corpus", corpus_path)->required();
  qa_data->add_option("--chains", chains_path)->required();
  qa_data->add_option("--out", out_path)->required();
  auto* qa_train = qa_cmd->add_subcommand("train", "Train the answer tagger");
  qa_train->add_option("--data", in_path)->required();
  qa_train->add_option("--out", model_path)->required();
  qa_train->add_option("--epochs", qa.epochs);
  qa_train->add_option("--seed", qa.seed);
  auto* qa_eval = qa_cmd->add_subcommand("eval", "Evaluate the answer tagger");
  qa_eval->add_option("--model", model_path)->required();
  qa_eval->add_option("--data", in_path)->required();
  qa_eval->add_option("--prefixes", prefixes_path, "prefix<TAB>category file; built-in table otherwise");
  qa_eval->add_option("--out", out_path)->required();

  // pipeline
  std::string config_path;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "End-to-end sweep");
  pipeline_cmd->require_subcommand(1);
  auto* pipeline_run = pipeline_cmd->add_subcommand("run", "Run every filter mode and chain order");
  pipeline_run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose || pipeline_run->parsed() ? spdlog::level::info : spdlog::level::warn);

  try {
    if (synth_cmd->parsed()) {
      save_documents(synth_out, generate_synthetic(synth));
      if (!synth_dev.empty()) save_stories(synth_dev, generate_cloze_stories(synth, dev_count, 1));
      if (!synth_test.empty()) save_stories(synth_test, generate_cloze_stories(synth, test_count, 2));
    } else if (extract_train->parsed()) {
      train_extractor(load_documents(corpus_path), extractor).save(model_path);
    } else if (extract_graph->parsed()) {
      const ExtractorModel model = ExtractorModel::load(model_path);
      std::vector<json> out;
      for (const Document& doc : load_documents(in_path)) out.push_back(graph_to_json(doc, decode(model, doc)));
      write_json_lines(out_path, out);
    } else if (chains_cmd->parsed()) {
      const ChainOrder order = parse_chain_order(order_name);
      const ChainPolicy policy = parse_chain_policy(policy_name);
      std::vector<json> out;
      std::size_t line = 0;
      for (const json& record : read_json_lines(in_path)) {
        auto [doc_id, g] = graph_from_json(record, ++line);
        std::vector<EventChain> chains;
        if (order == ChainOrder::kTextual) {
          if (!g.graph.nodes().empty()) chains.push_back({g.graph.nodes(), ChainOrder::kTextual});
        } else {
          chains = extract_chains(g.graph, policy);
        }
        out.push_back(chain_record(doc_id, order, record.at("events"), chains));
      }
      write_json_lines(out_path, out);
    } else if (salience_train->parsed()) {
      const std::vector<Document> docs = load_documents(corpus_path);
      std::vector<std::vector<bool>> labels;
      for (const Document& d : docs) labels.push_back(gold_flags(d));
      train_salience(docs, labels, salience).save(model_path);
    } else if (salience_score->parsed()) {
      const SalienceModel model = SalienceModel::load(model_path);
      std::vector<json> out;
      for (const Document& d : load_documents(in_path)) {
        out.push_back({{"doc_id", d.doc_id}, {"scores", score_document(model, d)}});
      }
      write_json_lines(out_path, out);
    } else if (discourse_train->parsed()) {
      discourse.salience_aware = aware == "on";
      const std::vector<Document> docs = load_documents(corpus_path);
      std::optional<std::map<std::string, json>> scores;
      if (!scores_path.empty()) scores = records_by_doc(scores_path);
      std::vector<std::vector<bool>> flags;
      for (const Document& d : docs) {
        flags.push_back(scores ? flags_from_scores(record_for(*scores, d.doc_id, "score file"), d) : gold_flags(d));
      }
      train_discourse(docs, flags, discourse).save(model_path);
    } else if (discourse_label->parsed()) {
      const DiscourseModel model = DiscourseModel::load(model_path);
      const auto scores = records_by_doc(scores_path);
      std::vector<json> out;
      for (const Document& d : load_documents(in_path)) {
        const DiscourseOutput result =
            classify_document(model, d, flags_from_scores(record_for(scores, d.doc_id, "score file"), d));
        json labels = json::array();
        for (DiscourseLabel l : result.labels) labels.push_back(std::string(to_string(l)));
        out.push_back({{"doc_id", d.doc_id}, {"labels", labels}});
      }
      write_json_lines(out_path, out);
    } else if (lm_train->parsed()) {
      std::vector<std::vector<std::string>> windows;
      for (const json& record : read_json_lines(in_path)) {
        for (const json& chain : record.at("chains")) {
          std::vector<std::string> lemmas;
          for (const json& e : chain) lemmas.push_back(e.at("lemma").get<std::string>());
          for (auto& w : make_windows(lemmas, lm.window)) windows.push_back(std::move(w));
        }
      }
      train_mlm(windows, lm).save(model_path);
    } else if (cloze_eval->parsed()) {
      const MaskedEventLM model = MaskedEventLM::load(model_path);
      const std::vector<ClozeStory> stories = load_stories(stories_path);
      json report = {{"stories", stories.size()}, {"unsupervised_accuracy", cloze_accuracy(model, stories)}};
      if (!dev_path.empty()) {
        const EndingClassifier classifier = train_ending_classifier(model, load_stories(dev_path));
        report["supervised_accuracy"] = cloze_accuracy(model, classifier, stories);
        report["classifier"] = classifier.to_json();
      }
      write_json_file(out_path, report);
    } else if (qa_data->parsed()) {
      const auto chains = records_by_doc(chains_path);
      std::vector<json> out;
      for (const Document& d : load_documents(corpus_path)) {
        if (!d.gold || !d.gold->qa) continue;
        std::vector<QaContentEvent> content;
        for (const json& chain : record_for(chains, d.doc_id, "chain file").at("chains")) {
          for (const json& e : chain) {
            content.push_back({e.at("lemma").get<std::string>(), {e.at("sent").get<int>(), e.at("tok").get<int>()}});
          }
        }
        for (const QaItem& item : *d.gold->qa) {
          QaExample ex{item.question, content, {}};
          for (int a : item.answer_event_indices) ex.gold.insert(d.events.at(static_cast<std::size_t>(a)).head);
          out.push_back(to_json(ex));
        }
      }
      write_json_lines(out_path, out);
    } else if (qa_train->parsed() || qa_eval->parsed()) {
      std::vector<QaExample> examples;
      std::size_t line = 0;
      for (const json& r : read_json_lines(in_path)) examples.push_back(qa_example_from_json(r, ++line));
      if (qa_train->parsed()) {
        train_qa(examples, qa).save(model_path);
      } else {
        const PrefixTable table = prefixes_path.empty() ? PrefixTable::standard() : PrefixTable::load(prefixes_path);
        write_json_file(out_path, to_json(evaluate_qa(QaModel::load(model_path), examples, table)));
      }
    } else if (pipeline_run->parsed()) {
      const PipelineConfig config = PipelineConfig::from_json(read_json_file(config_path));
      const MetricsReport report = run_pipeline(config);
      std::cout << report.table();
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}
