// Kernel-based centrality estimation: Gaussian-kernel soft counts of cosine
// similarities between an event and the other events and entities of its
// document, plus frequency, location and mean-similarity features, fed to a
// logistic scorer.

#ifndef EVCHAIN_SALIENCE_HPP_
#define EVCHAIN_SALIENCE_HPP_

#include <filesystem>
#include <vector>

#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"
#include "evchain/vocab.hpp"

namespace evchain {

struct KernelBank {
  std::vector<double> means;
  std::vector<double> widths;

  // Exact-match kernel (1.0, 1e-3) followed by 0.9, 0.7, ..., -0.9 at 0.1.
  static KernelBank standard();
  std::size_t size() const { return means.size(); }
  // Throws std::invalid_argument unless means strictly decrease within
  // [-1, 1] and widths are positive.
  void validate() const;
};

// phi_k = sum_j exp(-(cos(target, n_j) - mu_k)^2 / (2 sigma_k^2)). Zero-norm
// vectors are clamped to norm 1e-12 with a warning.
nn::Vector kernel_features(const nn::Vector& target, const std::vector<nn::Vector>& neighbors,
                           const KernelBank& bank);

struct SalienceConfig {
  std::uint64_t seed = 17;
  int embedding_dim = 16;
  int epochs = 8;
  double learning_rate = 1e-2;
  double init_scale = 0.08;
  // Two mean-cosine features (events, entities) instead of one pooled one.
  bool split_mean_cosine = false;

  nlohmann::json to_json() const;
  static SalienceConfig from_json(const nlohmann::json& j);
};

// (ln(1 + lemma count among events), sentence of the lemma's first event
// mention / sentence count, mean cosine to all other event and entity
// embeddings or 0 without any). With `split`, the last entry becomes two:
// mean cosine to other events, then to entities.
nn::Vector base_features(const Document& doc, int event,
                         const std::vector<nn::Vector>& event_embeddings,
                         const std::vector<nn::Vector>& entity_embeddings, bool split = false);

struct SalienceModel {
  SalienceConfig config;
  KernelBank bank;
  Vocabulary vocab;
  nn::ParameterSet params;
  nn::Parameter* embeddings = nullptr;
  nn::Parameter* weight = nullptr;  // 1 x feature_count()
  nn::Parameter* bias = nullptr;

  static SalienceModel create(const SalienceConfig& config, KernelBank bank, Vocabulary vocab);
  int feature_count() const;
  nn::Vector embedding(const std::string& lemma) const;

  // Logit for every event of the document.
  std::vector<nn::Expr> logits(nn::Graph& g, const Document& doc) const;
  // Mean BCE over the document's events.
  nn::Expr loss(nn::Graph& g, const Document& doc, const std::vector<bool>& labels) const;

  nlohmann::json to_json() const;
  static SalienceModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SalienceModel load(const std::filesystem::path& path);
};

// Full feature vector for one event under the model's embeddings.
nn::Vector salience_features(const SalienceModel& model, const Document& doc, int event);
double salience_score(const SalienceModel& model, const Document& doc, int event);
std::vector<double> score_document(const SalienceModel& model, const Document& doc);

// labels[d][i] flags event i of docs[d]. Warns when one class is missing.
SalienceModel train_salience(const std::vector<Document>& docs,
                             const std::vector<std::vector<bool>>& labels,
                             const SalienceConfig& config, KernelBank bank = KernelBank::standard());

// Events whose score is strictly above the threshold, input order kept.
// scores[i] belongs to events[i].
std::vector<int> filter_salient(const std::vector<int>& events, const std::vector<double>& scores,
                                double threshold = 0.5);

// Lemma vocabulary over event and entity mentions.
Vocabulary mention_vocabulary(const std::vector<Document>& docs);

}  // namespace evchain

#endif  // EVCHAIN_SALIENCE_HPP_
