// Documents, mentions and the line-delimited document format; lemmatization,
// abstract-based salience labels, and the seeded synthetic news corpus.

#ifndef EVCHAIN_CORPUS_HPP_
#define EVCHAIN_CORPUS_HPP_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evchain {

struct TokenRef {
  int sentence = 0;
  int token = 0;
  auto operator<=>(const TokenRef&) const = default;
};

struct Token {
  std::string surface;
  std::string lemma;
  int sentence_index = 0;
  int token_index = 0;
};

struct EventMention {
  TokenRef head;
  std::string lemma;
  // Token range [span_start, span_end) within the head's sentence.
  int span_start = 0;
  int span_end = 0;
};

struct EntityMention {
  TokenRef head;
  std::string lemma;
};

// News discourse content types. The first four form the keep-set.
enum class DiscourseLabel { kM1, kM2, kC1, kC2, kD1, kD2, kD3, kD4 };

inline constexpr int kDiscourseLabelCount = 8;

std::string_view to_string(DiscourseLabel label);
// Throws std::invalid_argument for anything outside the eight codes.
DiscourseLabel parse_discourse_label(std::string_view code);
bool in_keep_set(DiscourseLabel label);

struct QaItem {
  std::vector<std::string> question;
  std::vector<int> answer_event_indices;
};

struct GoldBundle {
  std::optional<std::vector<std::pair<int, int>>> relations;
  std::optional<std::vector<bool>> salience;
  std::optional<std::vector<DiscourseLabel>> discourse;
  std::optional<std::vector<std::string>> abstract;
  std::optional<std::vector<QaItem>> qa;
};

struct Document {
  std::string doc_id;
  std::vector<std::vector<Token>> sentences;
  std::vector<EventMention> events;
  std::vector<EntityMention> entities;
  std::optional<GoldBundle> gold;

  const Token& token(TokenRef ref) const {
    return sentences.at(static_cast<std::size_t>(ref.sentence))
        .at(static_cast<std::size_t>(ref.token));
  }
  std::size_t token_count() const;
  // Event indices sorted by head position.
  std::vector<int> events_in_text_order() const;
};

// Malformed input; carries the 1-based line number when reading files.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string lowercase(std::string_view s);

// Exception table first, then -ies, -ing, -ed, -es, -s; otherwise identity.
std::string lemmatize(std::string_view surface);

// Builds a document from tokenized sentences, filling lemmas and indices.
Document make_document(std::string doc_id,
                       const std::vector<std::vector<std::string>>& sentences);
EventMention make_event(const Document& doc, TokenRef head);
EntityMention make_entity(const Document& doc, TokenRef head);

// Checks every document invariant; throws FormatError(line) on violation.
void validate(const Document& doc, std::size_t line = 0);

nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j, std::size_t line = 0);

std::vector<Document> read_documents(std::istream& in);
std::vector<Document> load_documents(const std::filesystem::path& path);
void write_documents(std::ostream& out, const std::vector<Document>& docs);
void save_documents(const std::filesystem::path& path, const std::vector<Document>& docs);

std::set<std::string> lemma_set(const std::vector<std::string>& tokens);
// label[i] is true iff events[i].lemma is in abstract_lemmas.
std::vector<bool> derive_salience_labels(const Document& article,
                                         const std::set<std::string>& abstract_lemmas);

struct SyntheticConfig {
  std::uint64_t seed = 7;
  int num_docs = 100;
  int backbone_min = 5;
  int backbone_max = 8;
  // Chance that another distractor sentence follows each backbone sentence.
  double distractor_rate = 0.5;
  int max_distractor_run = 3;
  // Narrative event lemmas, split evenly across topics.
  int vocab_size = 96;
  int topics = 4;
  // Fraction of each lemma's topic reachable as a Markov successor.
  double sparsity = 0.25;
  int background_vocab_size = 6;
  // Distractor events drawn from the background vocabulary; the rest come
  // from another topic's narrative vocabulary.
  double background_share = 0.6;
  double cue_rate = 0.5;
  double main_entity_rate = 0.85;
  double distractor_entity_rate = 0.3;
  // Backbone sentences that also report the event with a background verb.
  double report_rate = 0.0;
  // Consecutive backbone events told as simultaneous in one sentence.
  double cooccur_rate = 0.15;
  // Adjacent backbone sentences swapped in text while keeping time order.
  double inversion_rate = 0.0;
  int questions_per_doc = 4;
  // Extra background event attached to a cloze ending.
  double ending_noise = 0.3;
  // Wrong cloze endings come from the story's own topic rather than the
  // whole narrative vocabulary.
  bool same_topic_wrong_endings = true;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

// Pure function of the config.
std::vector<Document> generate_synthetic(const SyntheticConfig& config);

struct ClozeStory {
  std::vector<std::string> context_events;
  std::vector<std::string> ending_a_events;
  std::vector<std::string> ending_b_events;
  char gold = 'A';
};

// Four-event contexts from the same Markov chains as generate_synthetic; the
// right ending continues the chain, the wrong one is a narrative lemma that is
// not a successor of the last context event. `stream` separates dev/test.
std::vector<ClozeStory> generate_cloze_stories(const SyntheticConfig& config,
                                               int count, std::uint64_t stream);

nlohmann::json to_json(const ClozeStory& s);
ClozeStory cloze_story_from_json(const nlohmann::json& j, std::size_t line = 0);
std::vector<ClozeStory> load_stories(const std::filesystem::path& path);
void save_stories(const std::filesystem::path& path, const std::vector<ClozeStory>& stories);

// Line-delimited JSON helpers shared by the file formats.
std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_json_lines(const std::filesystem::path& path,
                      const std::vector<nlohmann::json>& records);
// Single JSON value per file, used for model checkpoints and reports.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace evchain

#endif  // EVCHAIN_CORPUS_HPP_
