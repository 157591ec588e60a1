// Temporal-ordering question answering over event chains: the question and
// the chain are joined around a separator, a bi-LSTM reads the joined
// sequence, and a per-token head marks answer events on the chain side.

#ifndef EVCHAIN_QA_HPP_
#define EVCHAIN_QA_HPP_

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"
#include "evchain/vocab.hpp"

namespace evchain {

inline constexpr std::string_view kSeparatorSymbol = "<sep>";

enum class QaCategory { kBefore, kAfter, kCooccurring, kOther };
inline constexpr int kQaCategoryCount = 4;
std::string_view to_string(QaCategory c);
QaCategory parse_qa_category(std::string_view s);

// Ordered (prefix, category) pairs; the longest matching prefix wins.
class PrefixTable {
 public:
  static PrefixTable standard();
  // One "prefix<TAB>category" per line; blank lines and '#' comments skipped.
  static PrefixTable load(const std::filesystem::path& path);

  void add(const std::string& prefix, QaCategory category);
  // Case-insensitive, whole-word match against the question's tokens.
  QaCategory categorize(const std::vector<std::string>& question) const;
  QaCategory categorize(std::string_view question) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::vector<std::string>, QaCategory>> entries_;
};

// Lower-cased whitespace tokens with surrounding punctuation stripped.
std::vector<std::string> tokenize_question(std::string_view text);

struct QaContentEvent {
  std::string lemma;
  TokenRef head;
};

using AnswerSet = std::set<TokenRef>;

struct QaExample {
  std::vector<std::string> question;
  std::vector<QaContentEvent> content;
  AnswerSet gold;
};

nlohmann::json to_json(const QaExample& e);
QaExample qa_example_from_json(const nlohmann::json& j, std::size_t line = 0);

struct QaInput {
  std::vector<std::string> tokens;
  std::size_t separator = 0;
  // tokens[content_offset + k] is content event k.
  std::size_t content_offset = 0;
};

// [question..., SEP, content...] over lemmas. Throws std::invalid_argument
// when either side is empty.
QaInput build_input(const std::vector<std::string>& question, const std::vector<std::string>& content);

struct QaConfig {
  std::uint64_t seed = 29;
  int embedding_dim = 24;
  int hidden_dim = 24;
  int epochs = 8;
  double learning_rate = 5e-3;
  double init_scale = 0.08;
  // Extra input flag: the token's lemma also occurs on the other side.
  bool match_feature = true;

  nlohmann::json to_json() const;
  static QaConfig from_json(const nlohmann::json& j);
};

struct QaModel {
  QaConfig config;
  Vocabulary vocab;
  nn::ParameterSet params;
  nn::Parameter* embeddings = nullptr;
  nn::RecurrentEncoder encoder;
  nn::Parameter* head_w = nullptr;
  nn::Parameter* head_b = nullptr;

  static QaModel create(const QaConfig& config, Vocabulary vocab);

  // Answer logits for the content tokens only.
  std::vector<nn::Expr> content_logits(nn::Graph& g, const QaInput& input) const;
  // Mean BCE over content tokens.
  nn::Expr loss(nn::Graph& g, const QaExample& example) const;

  nlohmann::json to_json() const;
  static QaModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static QaModel load(const std::filesystem::path& path);
};

// Lemmatized question tokens as fed to the model.
std::vector<std::string> question_lemmas(const std::vector<std::string>& question);

QaModel train_qa(const std::vector<QaExample>& examples, const QaConfig& config);

// Content events with probability > 0.5. An empty content yields nothing.
AnswerSet answer(const QaModel& model, const std::vector<std::string>& question,
                 const std::vector<QaContentEvent>& content);

// Empty against empty scores 1.
double answer_f1(const AnswerSet& predicted, const AnswerSet& gold);

struct QaMetrics {
  double macro_f1 = 0.0;
  double exact_match = 0.0;
  std::size_t count = 0;
  std::array<double, kQaCategoryCount> category_f1{};
  std::array<std::size_t, kQaCategoryCount> category_count{};
};

// Throws std::invalid_argument on length mismatch.
QaMetrics qa_metrics(const std::vector<AnswerSet>& predictions, const std::vector<AnswerSet>& golds,
                     const std::vector<QaCategory>& categories);
nlohmann::json to_json(const QaMetrics& m);

QaMetrics evaluate_qa(const QaModel& model, const std::vector<QaExample>& examples, const PrefixTable& table);

}  // namespace evchain

#endif  // EVCHAIN_QA_HPP_
