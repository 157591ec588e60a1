#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evchain/pipeline.hpp"

using namespace evchain;

namespace {

bool subset(const std::vector<int>& a, const std::vector<int>& b) {
  return std::all_of(a.begin(), a.end(), [&](int x) { return std::find(b.begin(), b.end(), x) != b.end(); });
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

PipelineConfig tiny_run(const std::filesystem::path& out) {
  PipelineConfig c;
  c.synthetic.num_docs = 40;
  c.seeds = {1, 2};
  c.dev_stories = 30;
  c.test_stories = 30;
  c.extractor_train_docs = 10;
  c.discourse_train_docs = 20;
  c.qa_train_docs = 20;
  c.qa_test_docs = 10;
  c.extractor.epochs = 10;
  c.salience.epochs = 2;
  c.discourse.epochs = 2;
  c.discourse.embedding_dim = 8;
  c.lm.epochs = 1;
  c.lm.embedding_dim = c.lm.hidden_dim = 8;
  c.qa.epochs = 1;
  c.qa.embedding_dim = c.qa.hidden_dim = 8;
  c.ending.epochs = 20;
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("filter modes") {
  SyntheticConfig sc;
  sc.num_docs = 30;
  nn::Rng rng(17);
  for (const Document& doc : generate_synthetic(sc)) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < doc.events.size(); ++i) scores.push_back(rng.uniform());
    std::vector<DiscourseLabel> base, aware;
    for (std::size_t t = 0; t < doc.sentences.size(); ++t) {
      base.push_back(static_cast<DiscourseLabel>(rng.below(8)));
      aware.push_back(static_cast<DiscourseLabel>(rng.below(8)));
    }
    FilterInputs in{&scores, &base, &aware};
    const auto all = filter_events(doc, FilterMode::kAll, in);
    const auto salient = filter_events(doc, FilterMode::kSalient, in);
    const auto disc = filter_events(doc, FilterMode::kDiscourse, in);
    const auto sad = filter_events(doc, FilterMode::kSalienceAwareDiscourse, in);
    const auto spd = filter_events(doc, FilterMode::kSalientPlusDiscourse, in);
    CHECK(all == doc.events_in_text_order());
    CHECK(subset(salient, all));
    CHECK(subset(disc, all));
    CHECK(subset(sad, all));
    CHECK(subset(spd, sad));
    CHECK(subset(spd, salient));
    for (const auto* kept : {&salient, &disc, &sad, &spd}) {
      std::vector<int> positions;
      for (int e : *kept) positions.push_back(static_cast<int>(std::find(all.begin(), all.end(), e) - all.begin()));
      CHECK(std::is_sorted(positions.begin(), positions.end()));
    }
    for (int e : disc) CHECK(in_keep_set(base[static_cast<std::size_t>(doc.events[static_cast<std::size_t>(e)].head.sentence)]));
    in.discourse_uses_aware_parser = true;
    CHECK(filter_events(doc, FilterMode::kDiscourse, in) == sad);
  }
  const Document doc = generate_synthetic(sc)[0];
  CHECK_THROWS_AS(filter_events(doc, FilterMode::kSalient, FilterInputs{}), std::invalid_argument);
  CHECK_NOTHROW(filter_events(doc, FilterMode::kAll, FilterInputs{}));
}

TEST_CASE("mode names") {
  for (int m = 0; m < kFilterModeCount; ++m) {
    const auto mode = static_cast<FilterMode>(m);
    CHECK(parse_filter_mode(to_string(mode)) == mode);
    CHECK_FALSE(row_label(mode).empty());
  }
  CHECK_THROWS_AS(parse_filter_mode("none"), std::invalid_argument);
}

TEST_CASE("config json") {
  PipelineConfig c;
  c.seeds = {4, 5};
  c.modes = {FilterMode::kSalient};
  c.chain_policy = ChainPolicy::kOverlap;
  c.lm.window = 4;
  const PipelineConfig back = PipelineConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());

  PipelineConfig moved = c;
  moved.output_dir = "elsewhere";
  moved.cache = false;
  CHECK(moved.hash() == c.hash());
  moved.seeds = {4};
  CHECK(moved.hash() != c.hash());

  CHECK_THROWS_AS(PipelineConfig::from_json({{"sedes", {1}}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"discourse_parser", "fancy"}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"seeds", nlohmann::json::array()}}), std::invalid_argument);
}

TEST_CASE("end to end run is reproducible") {
  const auto root = std::filesystem::temp_directory_path() / "evchain_pipeline_test";
  std::filesystem::remove_all(root);
  PipelineConfig c = tiny_run(root / "a");
  const MetricsReport first = run_pipeline(c);
  CHECK(first.cells.size() == static_cast<std::size_t>(kFilterModeCount) * 2);
  CHECK(std::filesystem::exists(root / "a" / "report.json"));
  CHECK(std::filesystem::exists(root / "a" / "report.txt"));
  const auto& cell = first.cell(FilterMode::kAll, ChainOrder::kTemporal);
  CHECK(cell.seeds.size() == 2);
  CHECK(cell.mean_cloze_unsupervised() >= 0.0);
  CHECK(cell.mean_cloze_unsupervised() <= 1.0);
  CHECK(first.table().find("Salience-aware discourse-filtered events") != std::string::npos);

  // Cached upstream models and a fresh run must write the same bytes.
  const MetricsReport cached = run_pipeline(c);
  c.cache = false;
  c.output_dir = (root / "b").string();
  run_pipeline(c);
  CHECK(slurp(root / "a" / "report.json") == slurp(root / "b" / "report.json"));
  CHECK(slurp(root / "a" / "report.txt") == slurp(root / "b" / "report.txt"));
  CHECK(cached.to_json() == first.to_json());
  std::filesystem::remove_all(root);
}

TEST_CASE("failures name their stage") {
  PipelineConfig c = tiny_run(std::filesystem::temp_directory_path() / "evchain_pipeline_fail");
  c.corpus_path = "/nonexistent/corpus.jsonl";
  try {
    run_pipeline(c);
    FAIL("expected a pipeline error");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "load");
  }
}

}
