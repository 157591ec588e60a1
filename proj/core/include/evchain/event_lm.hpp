// Masked event language model over fixed-length chain windows, the
// next-event cloze rule, and a logistic ending classifier on top.

#ifndef EVCHAIN_EVENT_LM_HPP_
#define EVCHAIN_EVENT_LM_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"
#include "evchain/vocab.hpp"

namespace evchain {

inline constexpr std::string_view kPadSymbol = "<pad>";
inline constexpr std::string_view kMaskSymbol = "<mask>";

// Unknown, pad and mask symbols followed by lemmas in first-seen order.
Vocabulary event_vocabulary(const std::vector<std::vector<std::string>>& windows);

// Stride-1 windows of length L; shorter chains give none. Throws
// std::invalid_argument when L < 2.
std::vector<std::vector<std::string>> make_windows(const std::vector<std::string>& chain, int length = 5);

struct MlmConfig {
  std::uint64_t seed = 23;
  int window = 5;
  int embedding_dim = 32;
  int hidden_dim = 32;
  int epochs = 6;
  int batch_size = 8;
  double learning_rate = 5e-3;
  double init_scale = 0.08;

  nlohmann::json to_json() const;
  static MlmConfig from_json(const nlohmann::json& j);
};

struct MaskedEventLM {
  MlmConfig config;
  Vocabulary vocab;
  nn::ParameterSet params;
  nn::Parameter* embeddings = nullptr;
  nn::RecurrentEncoder encoder;
  nn::Parameter* output_w = nullptr;  // |V| x 2H
  nn::Parameter* output_b = nullptr;

  static MaskedEventLM create(const MlmConfig& config, Vocabulary vocab);

  // Logits at `position` after replacing it with the mask symbol.
  nn::Expr masked_logits(nn::Graph& g, const std::vector<std::string>& window, int position) const;
  nn::Expr loss(nn::Graph& g, const std::vector<std::string>& window, int position) const;

  nlohmann::json to_json() const;
  static MaskedEventLM from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static MaskedEventLM load(const std::filesystem::path& path);
};

// One uniformly chosen masked position per window per epoch. Throws
// std::invalid_argument on an empty window set.
MaskedEventLM train_mlm(const std::vector<std::vector<std::string>>& windows, const MlmConfig& config);

// Distribution at the mask in [context..., MASK]; context must hold
// window - 1 lemmas.
nn::Vector next_event_distribution(const MaskedEventLM& model, const std::vector<std::string>& context);

// Fraction of windows whose masked position is recovered by argmax, masking
// each position in turn.
double masked_accuracy(const MaskedEventLM& model, const std::vector<std::vector<std::string>>& windows);

struct ClozeDecision {
  char choice = 'A';
  double score_a = 0.0;
  double score_b = 0.0;
};

// Ending score is the highest next-event probability among its events
// (0 for an ending without events); ties go to A.
ClozeDecision cloze_choose(const MaskedEventLM& model, const std::vector<std::string>& context,
                           const std::vector<std::string>& ending_a, const std::vector<std::string>& ending_b);

// (max probability, mean probability, log max - log max of the other ending)
// with probabilities floored at 1e-7.
nn::Vector ending_features(const nn::Vector& distribution, const Vocabulary& vocab,
                           const std::vector<std::string>& ending, const std::vector<std::string>& other);

struct EndingClassifier {
  nn::Vector weights = nn::Vector::Zero(3);
  double bias = 0.0;

  double probability(const nn::Vector& features) const;
  // Higher probability wins; ties go to A.
  ClozeDecision classify(const MaskedEventLM& model, const ClozeStory& story) const;

  nlohmann::json to_json() const;
  static EndingClassifier from_json(const nlohmann::json& j);
};

struct EndingClassifierConfig {
  int epochs = 300;
  double learning_rate = 5e-2;
};

// Correct endings are positives, wrong ones negatives. Throws
// std::invalid_argument on an empty dev set.
EndingClassifier train_ending_classifier(const MaskedEventLM& model, const std::vector<ClozeStory>& dev,
                                         const EndingClassifierConfig& config = {});

double cloze_accuracy(const MaskedEventLM& model, const std::vector<ClozeStory>& stories);
double cloze_accuracy(const MaskedEventLM& model, const EndingClassifier& classifier,
                      const std::vector<ClozeStory>& stories);

}  // namespace evchain

#endif  // EVCHAIN_EVENT_LM_HPP_
