// Salience-aware news discourse parser. A word-level bi-LSTM with attention
// gives S_t per sentence, E_t averages the word states at salient event heads,
// a sentence-level bi-LSTM over [S_t; E_t] gives H_t, attention over H gives
// D, and a two-layer classifier reads [H_t; H_t * D; H_t - D].

#ifndef EVCHAIN_DISCOURSE_HPP_
#define EVCHAIN_DISCOURSE_HPP_

#include <array>
#include <filesystem>
#include <vector>

#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"
#include "evchain/vocab.hpp"

namespace evchain {

struct DiscourseConfig {
  std::uint64_t seed = 19;
  int embedding_dim = 24;
  int word_hidden = 16;
  int sentence_hidden = 16;
  int attention_dim = 16;
  int classifier_hidden = 32;
  int epochs = 10;
  double learning_rate = 5e-3;
  double init_scale = 0.08;
  // Off gives the base parser: E_t is zero for every sentence.
  bool salience_aware = true;

  nlohmann::json to_json() const;
  static DiscourseConfig from_json(const nlohmann::json& j);
};

struct DiscourseModel {
  DiscourseConfig config;
  Vocabulary vocab;
  nn::ParameterSet params;
  nn::Parameter* embeddings = nullptr;
  nn::RecurrentEncoder word_encoder;
  nn::AttentionPool word_attention;
  nn::RecurrentEncoder sentence_encoder;
  nn::AttentionPool document_attention;
  nn::FeedForward classifier;

  static DiscourseModel create(const DiscourseConfig& config, Vocabulary vocab);

  // Word states of one sentence.
  std::vector<nn::Expr> word_states(nn::Graph& g, const std::vector<Token>& sentence) const;
  // Mean of states at `positions`, or zeros when empty. Throws
  // std::out_of_range on a bad position.
  nn::Expr salient_mean(nn::Graph& g, const std::vector<nn::Expr>& states,
                        const std::vector<int>& positions) const;
  // Per-sentence logits (8 x 1). `salient_heads[t]` lists token positions of
  // salient events in sentence t.
  std::vector<nn::Expr> logits(nn::Graph& g, const Document& doc,
                               const std::vector<std::vector<int>>& salient_heads) const;
  nn::Expr loss(nn::Graph& g, const Document& doc, const std::vector<std::vector<int>>& salient_heads,
                const std::vector<DiscourseLabel>& labels) const;

  nlohmann::json to_json() const;
  static DiscourseModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static DiscourseModel load(const std::filesystem::path& path);
};

// S_t for a sentence. Throws std::invalid_argument when empty.
nn::Vector sentence_encoding(const DiscourseModel& model, const std::vector<Token>& sentence);
// E_t for a sentence given salient head positions.
nn::Vector salient_event_encoding(const DiscourseModel& model, const std::vector<Token>& sentence,
                                  const std::vector<int>& salient_positions);

// Salient head positions per sentence from per-event flags.
std::vector<std::vector<int>> salient_heads_by_sentence(const Document& doc,
                                                        const std::vector<bool>& event_flags);

struct DiscourseOutput {
  std::vector<DiscourseLabel> labels;
  std::vector<nn::Vector> probabilities;
};

// Throws std::invalid_argument on an empty document.
DiscourseOutput classify_document(const DiscourseModel& model, const Document& doc,
                                  const std::vector<bool>& event_flags);

// Sentence indices labeled M1, M2, C1 or C2, in order.
std::vector<int> filter_by_discourse(const std::vector<DiscourseLabel>& labels);

struct ClassificationReport {
  std::array<double, kDiscourseLabelCount> per_class_f1{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::size_t count = 0;
};

// A class absent from both gold and prediction scores F1 = 1.
ClassificationReport classification_report(const std::vector<DiscourseLabel>& gold,
                                           const std::vector<DiscourseLabel>& predicted);
nlohmann::json to_json(const ClassificationReport& r);

// event_flags[d] flags salient events of docs[d]; every document needs gold
// discourse labels. `history`, when given, receives the training-set report
// of each epoch.
DiscourseModel train_discourse(const std::vector<Document>& docs,
                               const std::vector<std::vector<bool>>& event_flags,
                               const DiscourseConfig& config,
                               std::vector<ClassificationReport>* history = nullptr);

// Labels every document and scores against gold discourse labels.
ClassificationReport evaluate_discourse(const DiscourseModel& model, const std::vector<Document>& docs,
                                        const std::vector<std::vector<bool>>& event_flags);

}  // namespace evchain

#endif  // EVCHAIN_DISCOURSE_HPP_
