// End-to-end experiment: extract events and relations, score salience, label
// discourse roles, filter events under five modes, build textual or temporal
// chains, then train event LMs and QA models per seed and report cloze
// accuracy and QA F1/EM for every (mode, order) cell.

#ifndef EVCHAIN_PIPELINE_HPP_
#define EVCHAIN_PIPELINE_HPP_

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evchain/chains.hpp"
#include "evchain/corpus.hpp"
#include "evchain/discourse.hpp"
#include "evchain/event_lm.hpp"
#include "evchain/extract.hpp"
#include "evchain/qa.hpp"
#include "evchain/salience.hpp"

namespace evchain {

enum class FilterMode { kAll, kSalient, kDiscourse, kSalienceAwareDiscourse, kSalientPlusDiscourse };
inline constexpr int kFilterModeCount = 5;
std::string_view to_string(FilterMode mode);
FilterMode parse_filter_mode(std::string_view s);
// Row label used in the text table.
std::string_view row_label(FilterMode mode);

// Per-document artifacts a filter mode may need. Null pointers mean absent.
struct FilterInputs {
  const std::vector<double>* salience_scores = nullptr;
  const std::vector<DiscourseLabel>* base_labels = nullptr;
  const std::vector<DiscourseLabel>* aware_labels = nullptr;
  // Which labels back the plain discourse mode.
  bool discourse_uses_aware_parser = false;
  double threshold = 0.5;
};

// Event indices surviving `mode`, in document order. Throws
// std::invalid_argument when an artifact the mode needs is missing.
std::vector<int> filter_events(const Document& doc, FilterMode mode, const FilterInputs& inputs);

class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& stage, const std::string& doc_id, const std::string& what)
      : std::runtime_error("stage " + stage + (doc_id.empty() ? "" : ", document " + doc_id) + ": " + what),
        stage_(stage), doc_id_(doc_id) {}
  const std::string& stage() const { return stage_; }
  const std::string& doc_id() const { return doc_id_; }

 private:
  std::string stage_;
  std::string doc_id_;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  // Seeds for the per-cell event LM and QA runs.
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  // Either a generated corpus or files. File paths win when set.
  SyntheticConfig synthetic;
  std::string corpus_path;
  std::string dev_stories_path;
  std::string test_stories_path;
  int dev_stories = 300;
  int test_stories = 500;

  std::vector<FilterMode> modes = {FilterMode::kAll, FilterMode::kSalient, FilterMode::kDiscourse,
                                   FilterMode::kSalienceAwareDiscourse, FilterMode::kSalientPlusDiscourse};
  std::vector<ChainOrder> orders = {ChainOrder::kTextual, ChainOrder::kTemporal};
  ChainPolicy chain_policy = ChainPolicy::kPartition;
  bool filter_shortcuts = true;
  // "base" or "salience_aware": the parser behind the plain discourse mode.
  std::string discourse_parser = "base";
  // "predicted" (salience score > 0.5) or "gold" flags for the aware parser.
  std::string salience_flags = "predicted";
  // Skip the extractor and use annotated events and relations.
  bool gold_events = false;

  // Upstream training subsets, taken from the front of the corpus.
  int extractor_train_docs = 200;
  int discourse_train_docs = 600;
  // QA examples: the first qa_train_docs documents train, the next
  // qa_test_docs evaluate.
  int qa_train_docs = 300;
  int qa_test_docs = 200;
  bool run_qa = true;
  bool run_cloze = true;

  ExtractorConfig extractor;
  SalienceConfig salience;
  DiscourseConfig discourse;
  MlmConfig lm;
  EndingClassifierConfig ending;
  QaConfig qa;

  std::string output_dir = "pipeline_out";
  // Cache upstream models under output_dir/cache keyed by config hash.
  bool cache = true;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  // FNV-1a over the canonical JSON without output_dir and cache, hex.
  std::string hash() const;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double cloze_unsupervised = 0.0;
  double cloze_supervised = 0.0;
  QaMetrics qa;
};

struct CellResult {
  FilterMode mode = FilterMode::kAll;
  ChainOrder order = ChainOrder::kTextual;
  std::size_t chain_count = 0;
  std::size_t window_count = 0;
  std::size_t event_count = 0;
  std::vector<SeedResult> seeds;

  double mean_cloze_unsupervised() const;
  double mean_cloze_supervised() const;
  double mean_qa_macro_f1() const;
  double mean_qa_em() const;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  // Upstream diagnostics on the training corpus.
  double salience_accuracy = 0.0;
  ClassificationReport discourse_base;
  ClassificationReport discourse_aware;
  std::vector<CellResult> cells;

  const CellResult& cell(FilterMode mode, ChainOrder order) const;
  nlohmann::json to_json() const;
  // Rows are filter modes; columns are order x metric.
  std::string table() const;
};

// Runs every requested cell and writes report.json and report.txt into
// output_dir atomically. Failures raise PipelineError.
MetricsReport run_pipeline(const PipelineConfig& config);

}  // namespace evchain

#endif  // EVCHAIN_PIPELINE_HPP_
