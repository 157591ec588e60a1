#include "evchain/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace evchain {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kDiscourseLabelCount> kLabelCodes = {
    "M1", "M2", "C1", "C2", "D1", "D2", "D3", "D4"};

const std::unordered_map<std::string_view, std::string_view>& irregular_forms() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"said", "say"},       {"says", "say"},       {"went", "go"},
      {"gone", "go"},        {"goes", "go"},        {"took", "take"},
      {"taken", "take"},     {"made", "make"},      {"making", "make"},
      {"came", "come"},      {"coming", "come"},    {"saw", "see"},
      {"seen", "see"},       {"gave", "give"},      {"given", "give"},
      {"told", "tell"},      {"found", "find"},     {"left", "leave"},
      {"felt", "feel"},      {"kept", "keep"},      {"held", "hold"},
      {"brought", "bring"},  {"began", "begin"},    {"begun", "begin"},
      {"ran", "run"},        {"wrote", "write"},    {"written", "write"},
      {"stood", "stand"},    {"heard", "hear"},     {"met", "meet"},
      {"paid", "pay"},       {"sent", "send"},      {"built", "build"},
      {"fell", "fall"},      {"fallen", "fall"},    {"led", "lead"},
      {"lost", "lose"},      {"spent", "spend"},    {"won", "win"},
      {"caught", "catch"},   {"fought", "fight"},   {"bought", "buy"},
      {"sold", "sell"},      {"thought", "think"},  {"struck", "strike"},
      {"shot", "shoot"},     {"fled", "flee"},      {"was", "be"},
      {"were", "be"},        {"is", "be"},          {"are", "be"},
      {"been", "be"},        {"had", "have"},       {"has", "have"},
      {"did", "do"},         {"does", "do"},        {"done", "do"},
      {"got", "get"},        {"became", "become"},  {"rose", "rise"},
      {"broke", "break"},    {"broken", "break"},   {"spoke", "speak"},
      {"chose", "choose"},   {"drove", "drive"},    {"knew", "know"},
  };
  return table;
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// running -> run, stopped -> stop; keeps call, pass, buzz.
std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      stem[n - 1] != 'l' && stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string_view to_string(DiscourseLabel label) {
  return kLabelCodes[static_cast<std::size_t>(label)];
}

DiscourseLabel parse_discourse_label(std::string_view code) {
  for (std::size_t i = 0; i < kLabelCodes.size(); ++i) {
    if (kLabelCodes[i] == code) return static_cast<DiscourseLabel>(i);
  }
  throw std::invalid_argument("unknown discourse label: " + std::string(code));
}

bool in_keep_set(DiscourseLabel label) {
  return label == DiscourseLabel::kM1 || label == DiscourseLabel::kM2 ||
         label == DiscourseLabel::kC1 || label == DiscourseLabel::kC2;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string lemmatize(std::string_view surface) {
  const std::string w = lowercase(surface);
  const auto& table = irregular_forms();
  if (auto it = table.find(w); it != table.end()) return std::string(it->second);
  const std::size_t n = w.size();
  if (ends_with(w, "ies") && n > 4) return w.substr(0, n - 3) + "y";
  if (ends_with(w, "ing") && n - 3 >= 3) return undouble(w.substr(0, n - 3));
  if (ends_with(w, "ed") && n - 2 >= 3) return undouble(w.substr(0, n - 2));
  if (ends_with(w, "es") && n - 2 >= 3) {
    const std::string stem = w.substr(0, n - 2);
    if (ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") ||
        ends_with(stem, "ch") || ends_with(stem, "sh")) {
      return stem;
    }
  }
  if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is") && n - 1 >= 3) {
    return w.substr(0, n - 1);
  }
  return w;
}

std::size_t Document::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::vector<int> Document::events_in_text_order() const {
  std::vector<int> order(events.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return events[static_cast<std::size_t>(a)].head <
           events[static_cast<std::size_t>(b)].head;
  });
  return order;
}

Document make_document(std::string doc_id,
                       const std::vector<std::vector<std::string>>& sentences) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    std::vector<Token> tokens;
    for (std::size_t t = 0; t < sentences[s].size(); ++t) {
      const std::string& surface = sentences[s][t];
      tokens.push_back(Token{surface, surface.empty() ? std::string() : lemmatize(surface),
                             static_cast<int>(s), static_cast<int>(t)});
    }
    doc.sentences.push_back(std::move(tokens));
  }
  return doc;
}

EventMention make_event(const Document& doc, TokenRef head) {
  return EventMention{head, doc.token(head).lemma, head.token, head.token + 1};
}

EntityMention make_entity(const Document& doc, TokenRef head) {
  return EntityMention{head, doc.token(head).lemma};
}

namespace {

bool ref_in_bounds(const Document& doc, TokenRef r) {
  return r.sentence >= 0 && r.sentence < static_cast<int>(doc.sentences.size()) &&
         r.token >= 0 &&
         r.token < static_cast<int>(doc.sentences[static_cast<std::size_t>(r.sentence)].size());
}

}  // namespace

void validate(const Document& doc, std::size_t line) {
  if (doc.sentences.empty()) throw FormatError("document has no sentences", line);
  for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
    for (std::size_t t = 0; t < doc.sentences[s].size(); ++t) {
      const Token& tok = doc.sentences[s][t];
      if (tok.surface.empty() || tok.lemma.empty()) {
        throw FormatError("empty token in sentence " + std::to_string(s), line);
      }
      if (tok.sentence_index != static_cast<int>(s) ||
          tok.token_index != static_cast<int>(t)) {
        throw FormatError("token indices out of sync", line);
      }
    }
  }
  std::set<TokenRef> heads;
  for (std::size_t i = 0; i < doc.events.size(); ++i) {
    const EventMention& e = doc.events[i];
    if (!ref_in_bounds(doc, e.head)) {
      throw FormatError("event " + std::to_string(i) + " head out of bounds", line);
    }
    const int len = static_cast<int>(doc.sentences[static_cast<std::size_t>(e.head.sentence)].size());
    if (e.span_start < 0 || e.span_end > len || e.span_start > e.head.token ||
        e.head.token >= e.span_end) {
      throw FormatError("event " + std::to_string(i) + " span does not contain its head", line);
    }
    if (!heads.insert(e.head).second) {
      throw FormatError("two events share a head token", line);
    }
  }
  heads.clear();
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    if (!ref_in_bounds(doc, doc.entities[i].head)) {
      throw FormatError("entity " + std::to_string(i) + " head out of bounds", line);
    }
    if (!heads.insert(doc.entities[i].head).second) {
      throw FormatError("two entities share a head token", line);
    }
  }
  if (!doc.gold) return;
  const GoldBundle& g = *doc.gold;
  const int n_events = static_cast<int>(doc.events.size());
  if (g.relations) {
    for (auto [a, b] : *g.relations) {
      if (a < 0 || b < 0 || a >= n_events || b >= n_events || a == b) {
        throw FormatError("gold relation references an invalid event", line);
      }
    }
  }
  if (g.salience && g.salience->size() != doc.events.size()) {
    throw FormatError("gold salience length differs from event count", line);
  }
  if (g.discourse && g.discourse->size() != doc.sentences.size()) {
    throw FormatError("gold discourse length differs from sentence count", line);
  }
  if (g.qa) {
    for (const QaItem& q : *g.qa) {
      if (q.question.empty()) throw FormatError("empty QA question", line);
      for (int idx : q.answer_event_indices) {
        if (idx < 0 || idx >= n_events) {
          throw FormatError("QA answer references an invalid event", line);
        }
      }
    }
  }
}

json to_json(const Document& doc) {
  json j;
  j["doc_id"] = doc.doc_id;
  json sentences = json::array();
  for (const auto& s : doc.sentences) {
    json toks = json::array();
    for (const Token& t : s) toks.push_back(t.surface);
    sentences.push_back(std::move(toks));
  }
  j["sentences"] = std::move(sentences);
  json events = json::array();
  for (const EventMention& e : doc.events) {
    events.push_back({{"sent", e.head.sentence},
                      {"tok", e.head.token},
                      {"span_start", e.span_start},
                      {"span_end", e.span_end}});
  }
  j["events"] = std::move(events);
  json entities = json::array();
  for (const EntityMention& e : doc.entities) {
    entities.push_back({{"sent", e.head.sentence},
                        {"tok", e.head.token},
                        {"span_start", e.head.token},
                        {"span_end", e.head.token + 1}});
  }
  j["entities"] = std::move(entities);
  if (doc.gold) {
    const GoldBundle& g = *doc.gold;
    json gold = json::object();
    if (g.relations) {
      json rel = json::array();
      for (auto [a, b] : *g.relations) rel.push_back({a, b});
      gold["relations"] = std::move(rel);
    }
    if (g.salience) {
      json sal = json::array();
      for (bool s : *g.salience) sal.push_back(s ? 1 : 0);
      gold["salience"] = std::move(sal);
    }
    if (g.discourse) {
      json dis = json::array();
      for (DiscourseLabel l : *g.discourse) dis.push_back(std::string(to_string(l)));
      gold["discourse"] = std::move(dis);
    }
    if (g.abstract) gold["abstract"] = *g.abstract;
    if (g.qa) {
      json qa = json::array();
      for (const QaItem& q : *g.qa) {
        qa.push_back({{"question", q.question},
                      {"answer_event_indices", q.answer_event_indices}});
      }
      gold["qa"] = std::move(qa);
    }
    j["gold"] = std::move(gold);
  }
  return j;
}

Document document_from_json(const json& j, std::size_t line) {
  try {
    if (!j.is_object()) throw FormatError("record is not an object", line);
    std::vector<std::vector<std::string>> sentences =
        j.at("sentences").get<std::vector<std::vector<std::string>>>();
    Document doc = make_document(j.at("doc_id").get<std::string>(), sentences);
    auto read_head = [&](const json& m, const char* what) {
      TokenRef head{m.at("sent").get<int>(), m.at("tok").get<int>()};
      if (!ref_in_bounds(doc, head)) {
        throw FormatError(std::string(what) + " head (" + std::to_string(head.sentence) +
                              ", " + std::to_string(head.token) + ") out of bounds",
                          line);
      }
      return head;
    };
    for (const json& m : j.value("events", json::array())) {
      TokenRef head = read_head(m, "event");
      EventMention e{head, doc.token(head).lemma, m.value("span_start", head.token),
                     m.value("span_end", head.token + 1)};
      doc.events.push_back(std::move(e));
    }
    for (const json& m : j.value("entities", json::array())) {
      TokenRef head = read_head(m, "entity");
      doc.entities.push_back(EntityMention{head, doc.token(head).lemma});
    }
    if (j.contains("gold") && !j["gold"].is_null()) {
      const json& gj = j["gold"];
      GoldBundle g;
      if (gj.contains("relations")) {
        std::vector<std::pair<int, int>> rel;
        for (const json& r : gj["relations"]) {
          if (!r.is_array() || r.size() != 2) throw FormatError("malformed relation", line);
          rel.emplace_back(r[0].get<int>(), r[1].get<int>());
        }
        g.relations = std::move(rel);
      }
      if (gj.contains("salience")) {
        std::vector<bool> sal;
        for (const json& s : gj["salience"]) sal.push_back(s.get<int>() != 0);
        g.salience = std::move(sal);
      }
      if (gj.contains("discourse")) {
        std::vector<DiscourseLabel> dis;
        for (const json& s : gj["discourse"]) {
          try {
            dis.push_back(parse_discourse_label(s.get<std::string>()));
          } catch (const std::invalid_argument& e) {
            throw FormatError(e.what(), line);
          }
        }
        g.discourse = std::move(dis);
      }
      if (gj.contains("abstract")) g.abstract = gj["abstract"].get<std::vector<std::string>>();
      if (gj.contains("qa")) {
        std::vector<QaItem> qa;
        for (const json& q : gj["qa"]) {
          qa.push_back(QaItem{q.at("question").get<std::vector<std::string>>(),
                              q.at("answer_event_indices").get<std::vector<int>>()});
        }
        g.qa = std::move(qa);
      }
      doc.gold = std::move(g);
    }
    validate(doc, line);
    return doc;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed document record: ") + e.what(), line);
  }
}

std::vector<Document> read_documents(std::istream& in) {
  std::vector<Document> docs;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line);
    }
    docs.push_back(document_from_json(j, line));
  }
  return docs;
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open document file " + path.string());
  return read_documents(in);
}

void write_documents(std::ostream& out, const std::vector<Document>& docs) {
  for (const Document& d : docs) out << to_json(d).dump() << '\n';
}

void save_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ostringstream os;
  write_documents(os, docs);
  write_file_atomic(path, os.str());
}

std::set<std::string> lemma_set(const std::vector<std::string>& tokens) {
  std::set<std::string> out;
  for (const std::string& t : tokens) {
    if (!t.empty()) out.insert(lemmatize(t));
  }
  return out;
}

std::vector<bool> derive_salience_labels(const Document& article,
                                         const std::set<std::string>& abstract_lemmas) {
  std::vector<bool> labels;
  labels.reserve(article.events.size());
  for (const EventMention& e : article.events) {
    labels.push_back(abstract_lemmas.contains(e.lemma));
  }
  return labels;
}

json to_json(const ClozeStory& s) {
  return {{"context_events", s.context_events},
          {"ending_a_events", s.ending_a_events},
          {"ending_b_events", s.ending_b_events},
          {"gold", std::string(1, s.gold)}};
}

ClozeStory cloze_story_from_json(const json& j, std::size_t line) {
  try {
    ClozeStory s;
    s.context_events = j.at("context_events").get<std::vector<std::string>>();
    s.ending_a_events = j.at("ending_a_events").get<std::vector<std::string>>();
    s.ending_b_events = j.at("ending_b_events").get<std::vector<std::string>>();
    const std::string gold = j.at("gold").get<std::string>();
    if (gold != "A" && gold != "B") throw FormatError("gold must be \"A\" or \"B\"", line);
    s.gold = gold[0];
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed story record: ") + e.what(), line);
  }
}

std::vector<ClozeStory> load_stories(const std::filesystem::path& path) {
  std::vector<ClozeStory> out;
  std::size_t line = 0;
  for (const json& j : read_json_lines(path)) out.push_back(cloze_story_from_json(j, ++line));
  return out;
}

void save_stories(const std::filesystem::path& path, const std::vector<ClozeStory>& stories) {
  std::vector<json> records;
  for (const ClozeStory& s : stories) records.push_back(to_json(s));
  write_json_lines(path, records);
}

std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(text));
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line);
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_lines(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ostringstream os;
  for (const json& r : records) os << r.dump() << '\n';
  write_file_atomic(path, os.str());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what(), 0);
  }
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  write_file_atomic(path, value.dump(1) + "\n");
}

}  // namespace evchain
