#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "evchain/corpus.hpp"
#include "evchain/nn.hpp"

namespace evchain {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 52> kNarrativeVerbs = {
    "detain",   "alert",     "question", "arrest",   "charge",   "attack",
    "flood",    "destroy",   "rescue",   "evacuate", "injure",   "kill",
    "search",   "discover",  "seize",    "release",  "convict",  "sentence",
    "appeal",   "investigate", "protest", "march",   "clash",    "disperse",
    "negotiate", "sign",     "ratify",   "launch",   "orbit",    "land",
    "explode",  "burn",      "extinguish", "collapse", "repair", "open",
    "close",    "elect",     "resign",   "nominate", "vote",     "approve",
    "veto",     "hire",      "dismiss",  "train",    "compete",  "finish",
    "celebrate", "invest",   "merge",    "acquire"};

constexpr std::array<std::string_view, 10> kBackgroundVerbs = {
    "say", "report", "announce", "claim", "comment", "establish",
    "note", "state", "insist", "predict"};

constexpr std::array<std::string_view, 22> kNames = {
    "Smith",  "Garcia", "Chen",   "Patel",  "Novak",  "Okafor", "Silva",  "Kim",
    "Muller", "Rossi",  "Tanaka", "Haddad", "Ivanova", "Larsen", "Moreau", "Nguyen",
    "Costa",  "Fischer", "Kowalski", "Mendez", "Olsen",  "Sato"};

constexpr std::array<std::string_view, 14> kNouns = {
    "suspect", "plant",  "statement", "city",   "river",  "council", "market",
    "vehicle", "border", "crowd",     "company", "court", "ship",    "bridge"};

// One cue word per discourse label, in label order.
constexpr std::array<std::string_view, kDiscourseLabelCount> kCues = {
    "today", "consequently", "earlier", "currently",
    "historically", "once", "critics", "soon"};

bool is_sibilant_end(const std::string& w) {
  return w.ends_with("s") || w.ends_with("x") || w.ends_with("z") ||
         w.ends_with("ch") || w.ends_with("sh");
}

bool consonant_y(const std::string& w) {
  return w.size() >= 2 && w.back() == 'y' &&
         std::string_view("aeiou").find(w[w.size() - 2]) == std::string_view::npos;
}

// Natural inflections of a verb that lemmatize back to it.
std::vector<std::string> surface_forms(const std::string& lemma) {
  std::vector<std::string> candidates = {lemma};
  const std::string stem = lemma.substr(0, lemma.size() - 1);
  if (lemma.ends_with("e")) {
    candidates.push_back(lemma + "d");
    candidates.push_back(lemma + "s");
    candidates.push_back(stem + "ing");
  } else if (consonant_y(lemma)) {
    candidates.push_back(stem + "ied");
    candidates.push_back(stem + "ies");
    candidates.push_back(lemma + "ing");
  } else {
    candidates.push_back(lemma + "ed");
    candidates.push_back(is_sibilant_end(lemma) ? lemma + "es" : lemma + "s");
    candidates.push_back(lemma + "ing");
  }
  if (lemma == "say") candidates = {"said", "says", "say"};
  std::vector<std::string> out;
  for (const std::string& c : candidates) {
    if (lemmatize(c) == lemma) out.push_back(c);
  }
  if (out.empty()) out.push_back(lemma);
  return out;
}

struct NarrativeModel {
  std::vector<std::string> lemmas;
  std::vector<int> topic_of;
  std::vector<std::vector<int>> topic_members;
  std::vector<std::vector<std::pair<int, double>>> successors;
  std::vector<std::string> background;
  std::map<std::string, std::vector<std::string>> forms;

  const std::vector<std::string>& forms_of(const std::string& lemma) const {
    return forms.at(lemma);
  }
};

std::string narrative_lemma(int i) {
  if (i < static_cast<int>(kNarrativeVerbs.size())) return std::string(kNarrativeVerbs[static_cast<std::size_t>(i)]);
  return "verb" + std::to_string(i);
}

std::string background_lemma(int i) {
  if (i < static_cast<int>(kBackgroundVerbs.size())) return std::string(kBackgroundVerbs[static_cast<std::size_t>(i)]);
  return "bgverb" + std::to_string(i);
}

NarrativeModel build_narrative_model(const SyntheticConfig& c) {
  nn::Rng rng = nn::Rng(c.seed).fork(1);
  NarrativeModel m;
  for (int i = 0; i < c.vocab_size; ++i) m.lemmas.push_back(narrative_lemma(i));
  for (int i = 0; i < c.background_vocab_size; ++i) m.background.push_back(background_lemma(i));
  m.topic_members.resize(static_cast<std::size_t>(c.topics));
  m.topic_of.resize(m.lemmas.size());
  for (int i = 0; i < c.vocab_size; ++i) {
    const int t = static_cast<int>(static_cast<long>(i) * c.topics / c.vocab_size);
    m.topic_of[static_cast<std::size_t>(i)] = t;
    m.topic_members[static_cast<std::size_t>(t)].push_back(i);
  }
  m.successors.resize(m.lemmas.size());
  for (int i = 0; i < c.vocab_size; ++i) {
    std::vector<int> pool;
    for (int j : m.topic_members[static_cast<std::size_t>(m.topic_of[static_cast<std::size_t>(i)])]) {
      if (j != i) pool.push_back(j);
    }
    rng.shuffle(pool);
    const auto members = static_cast<double>(pool.size() + 1);
    const std::size_t k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(c.sparsity * members)), 1, pool.size());
    double total = 0.0;
    std::vector<std::pair<int, double>> succ;
    for (std::size_t s = 0; s < k; ++s) {
      const double w = rng.uniform(0.5, 1.5);
      succ.emplace_back(pool[s], w);
      total += w;
    }
    std::sort(succ.begin(), succ.end());
    for (auto& [_, w] : succ) w /= total;
    m.successors[static_cast<std::size_t>(i)] = std::move(succ);
  }
  for (const std::string& l : m.lemmas) m.forms[l] = surface_forms(l);
  for (const std::string& l : m.background) m.forms[l] = surface_forms(l);
  return m;
}

int sample_successor(const NarrativeModel& m, int from, nn::Rng& rng) {
  double u = rng.uniform();
  const auto& succ = m.successors[static_cast<std::size_t>(from)];
  for (const auto& [to, p] : succ) {
    if (u < p) return to;
    u -= p;
  }
  return succ.back().first;
}

std::vector<int> markov_walk(const NarrativeModel& m, int topic, int length, nn::Rng& rng) {
  const auto& members = m.topic_members[static_cast<std::size_t>(topic)];
  std::vector<int> walk = {members[rng.below(members.size())]};
  while (static_cast<int>(walk.size()) < length) {
    walk.push_back(sample_successor(m, walk.back(), rng));
  }
  return walk;
}

template <typename T>
const T& pick(const std::vector<T>& items, nn::Rng& rng) {
  return items[rng.below(items.size())];
}

int pick_other_topic_lemma(const NarrativeModel& m, int topic, nn::Rng& rng) {
  std::vector<int> pool;
  for (std::size_t i = 0; i < m.lemmas.size(); ++i) {
    if (m.topic_of[i] != topic || m.topic_members.size() == 1) pool.push_back(static_cast<int>(i));
  }
  return pool[rng.below(pool.size())];
}

struct PlannedEvent {
  std::string lemma;
  int position = 0;  // token index within the sentence
  double time = 0.0;
  bool backbone = false;
};

struct PlannedSentence {
  std::vector<std::string> tokens;
  std::vector<PlannedEvent> events;
  std::vector<int> entity_positions;
  DiscourseLabel label = DiscourseLabel::kM1;
};

std::vector<std::string> question_prefix(int category, nn::Rng& rng) {
  static const std::vector<std::vector<std::string>> before = {
      {"what", "happened", "before"},
      {"what", "event", "happened", "before"},
      {"what", "events", "happened", "before"}};
  static const std::vector<std::vector<std::string>> after = {
      {"what", "happened", "after"},
      {"what", "event", "happened", "after"},
      {"what", "will", "happen", "after"}};
  static const std::vector<std::vector<std::string>> during = {
      {"what", "happened", "while"}, {"what", "happened", "during"}};
  switch (category) {
    case 0: return pick(before, rng);
    case 1: return pick(after, rng);
    default: return pick(during, rng);
  }
}

Document generate_document(const SyntheticConfig& c, const NarrativeModel& m, int index) {
  nn::Rng rng = nn::Rng(c.seed).fork(1000 + static_cast<std::uint64_t>(index));
  const int topic = static_cast<int>(rng.below(static_cast<std::size_t>(c.topics)));
  const int length = c.backbone_min +
                     static_cast<int>(rng.below(static_cast<std::size_t>(c.backbone_max - c.backbone_min + 1)));
  const std::vector<int> walk = markov_walk(m, topic, length, rng);

  std::vector<std::vector<int>> steps;
  for (int i = 0; i < length;) {
    if (i + 1 < length && rng.bernoulli(c.cooccur_rate)) {
      steps.push_back({i, i + 1});
      i += 2;
    } else {
      steps.push_back({i});
      i += 1;
    }
  }

  std::vector<std::string> names(kNames.begin(), kNames.end());
  const std::string main_entity = pick(names, rng);
  auto other_entity = [&] {
    std::string e = pick(names, rng);
    while (e == main_entity) e = pick(names, rng);
    return e;
  };
  auto surface = [&](const std::string& lemma) { return pick(m.forms_of(lemma), rng); };
  auto noun_phrase = [&](std::vector<std::string>& toks) {
    toks.push_back("the");
    toks.push_back(std::string(kNouns[rng.below(kNouns.size())]));
  };
  auto maybe_cue = [&](std::vector<std::string>& toks, DiscourseLabel label) {
    if (rng.bernoulli(c.cue_rate)) toks.push_back(std::string(kCues[static_cast<std::size_t>(label)]));
  };

  // Blocks of one backbone sentence followed by its distractor run.
  std::vector<std::vector<PlannedSentence>> blocks;
  int distractor_counter = 0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    std::vector<PlannedSentence> block;
    PlannedSentence s;
    s.label = k == 0 ? DiscourseLabel::kM1
                     : static_cast<DiscourseLabel>(1 + rng.below(3));
    maybe_cue(s.tokens, s.label);
    s.entity_positions.push_back(static_cast<int>(s.tokens.size()));
    s.tokens.push_back(rng.bernoulli(c.main_entity_rate) ? main_entity : other_entity());
    for (std::size_t e = 0; e < steps[k].size(); ++e) {
      if (e > 0) s.tokens.push_back("and");
      const std::string& lemma = m.lemmas[static_cast<std::size_t>(walk[static_cast<std::size_t>(steps[k][e])])];
      s.events.push_back({lemma, static_cast<int>(s.tokens.size()), static_cast<double>(k), true});
      s.tokens.push_back(surface(lemma));
      if (e == 0) noun_phrase(s.tokens);
    }
    if (rng.bernoulli(c.report_rate)) {
      s.tokens.push_back("officials");
      const std::string& lemma = pick(m.background, rng);
      s.events.push_back({lemma, static_cast<int>(s.tokens.size()), static_cast<double>(k) + 0.25, false});
      s.tokens.push_back(surface(lemma));
    }
    block.push_back(std::move(s));

    int run = 0;
    while (run < c.max_distractor_run && rng.bernoulli(c.distractor_rate)) {
      ++run;
      PlannedSentence d;
      d.label = static_cast<DiscourseLabel>(4 + rng.below(4));
      maybe_cue(d.tokens, d.label);
      d.entity_positions.push_back(static_cast<int>(d.tokens.size()));
      d.tokens.push_back(rng.bernoulli(c.distractor_entity_rate) ? main_entity : other_entity());
      const std::string lemma =
          rng.bernoulli(c.background_share)
              ? pick(m.background, rng)
              : m.lemmas[static_cast<std::size_t>(pick_other_topic_lemma(m, topic, rng))];
      const double time = static_cast<double>(k) + 0.5 + 0.001 * ++distractor_counter;
      d.events.push_back({lemma, static_cast<int>(d.tokens.size()), time, false});
      d.tokens.push_back(surface(lemma));
      noun_phrase(d.tokens);
      block.push_back(std::move(d));
    }
    blocks.push_back(std::move(block));
  }
  for (std::size_t k = 1; k + 1 < blocks.size(); ++k) {
    if (rng.bernoulli(c.inversion_rate)) std::swap(blocks[k], blocks[k + 1]);
  }

  std::vector<std::vector<std::string>> sentences;
  std::vector<DiscourseLabel> labels;
  struct Placed {
    TokenRef head;
    double time;
    bool backbone;
  };
  std::vector<Placed> placed;
  std::vector<TokenRef> entity_heads;
  for (const auto& block : blocks) {
    for (const PlannedSentence& s : block) {
      const int si = static_cast<int>(sentences.size());
      for (const PlannedEvent& e : s.events) placed.push_back({{si, e.position}, e.time, e.backbone});
      for (int p : s.entity_positions) entity_heads.push_back({si, p});
      sentences.push_back(s.tokens);
      labels.push_back(s.label);
    }
  }

  Document doc = make_document("syn-" + std::to_string(c.seed) + "-" + std::to_string(index), sentences);
  for (const Placed& p : placed) doc.events.push_back(make_event(doc, p.head));
  for (TokenRef r : entity_heads) doc.entities.push_back(make_entity(doc, r));

  GoldBundle gold;
  std::vector<std::pair<int, int>> relations;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    for (std::size_t j = 0; j < placed.size(); ++j) {
      if (placed[i].time < placed[j].time) {
        relations.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  gold.relations = std::move(relations);
  std::vector<bool> salience;
  for (const Placed& p : placed) salience.push_back(p.backbone);
  gold.salience = std::move(salience);
  gold.discourse = labels;

  std::vector<std::string> abstract = {main_entity};
  for (int w : walk) abstract.push_back(surface(m.lemmas[static_cast<std::size_t>(w)]));
  noun_phrase(abstract);
  gold.abstract = std::move(abstract);

  std::vector<int> backbone;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    if (placed[i].backbone) backbone.push_back(static_cast<int>(i));
  }
  std::vector<QaItem> qa;
  for (int q = 0; q < c.questions_per_doc && !backbone.empty(); ++q) {
    const int x = pick(backbone, rng);
    const double tx = placed[static_cast<std::size_t>(x)].time;
    bool has_partner = false;
    for (int b : backbone) {
      if (b != x && placed[static_cast<std::size_t>(b)].time == tx) has_partner = true;
    }
    const double r = rng.uniform();
    int category = r < 0.5 ? 0 : (r < 0.95 ? 1 : 3);
    if (has_partner && rng.bernoulli(0.5)) category = 2;
    QaItem item;
    if (category == 3) {
      item.question = {"what", "events", "have", "happened"};
      item.answer_event_indices = backbone;
    } else {
      item.question = question_prefix(category, rng);
      item.question.push_back(doc.token(placed[static_cast<std::size_t>(x)].head).surface);
      for (int b : backbone) {
        const double tb = placed[static_cast<std::size_t>(b)].time;
        const bool keep = (category == 0 && tb < tx) || (category == 1 && tb > tx) ||
                          (category == 2 && tb == tx && b != x);
        if (keep) item.answer_event_indices.push_back(b);
      }
    }
    qa.push_back(std::move(item));
  }
  gold.qa = std::move(qa);
  doc.gold = std::move(gold);
  return doc;
}

}  // namespace

void SyntheticConfig::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
  };
  rate(distractor_rate, "distractor_rate");
  rate(background_share, "background_share");
  rate(cue_rate, "cue_rate");
  rate(main_entity_rate, "main_entity_rate");
  rate(distractor_entity_rate, "distractor_entity_rate");
  rate(report_rate, "report_rate");
  rate(cooccur_rate, "cooccur_rate");
  rate(inversion_rate, "inversion_rate");
  rate(ending_noise, "ending_noise");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) {
    throw std::invalid_argument("sparsity must lie in (0, 1]");
  }
  if (num_docs < 0) throw std::invalid_argument("num_docs must be non-negative");
  if (backbone_min < 1 || backbone_max < backbone_min) {
    throw std::invalid_argument("backbone length range is invalid");
  }
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be at least 2");
  if (topics < 1 || vocab_size < 2 * topics) {
    throw std::invalid_argument("each topic needs at least two lemmas");
  }
  if (background_vocab_size < 1) {
    throw std::invalid_argument("background_vocab_size must be positive");
  }
  if (max_distractor_run < 0 || questions_per_doc < 0) {
    throw std::invalid_argument("counts must be non-negative");
  }
}

json to_json(const SyntheticConfig& c) {
  return {{"seed", c.seed},
          {"num_docs", c.num_docs},
          {"backbone_min", c.backbone_min},
          {"backbone_max", c.backbone_max},
          {"distractor_rate", c.distractor_rate},
          {"max_distractor_run", c.max_distractor_run},
          {"vocab_size", c.vocab_size},
          {"topics", c.topics},
          {"sparsity", c.sparsity},
          {"background_vocab_size", c.background_vocab_size},
          {"background_share", c.background_share},
          {"cue_rate", c.cue_rate},
          {"main_entity_rate", c.main_entity_rate},
          {"distractor_entity_rate", c.distractor_entity_rate},
          {"report_rate", c.report_rate},
          {"cooccur_rate", c.cooccur_rate},
          {"inversion_rate", c.inversion_rate},
          {"questions_per_doc", c.questions_per_doc},
          {"ending_noise", c.ending_noise},
          {"same_topic_wrong_endings", c.same_topic_wrong_endings}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  c.seed = j.value("seed", c.seed);
  c.num_docs = j.value("num_docs", c.num_docs);
  c.backbone_min = j.value("backbone_min", c.backbone_min);
  c.backbone_max = j.value("backbone_max", c.backbone_max);
  c.distractor_rate = j.value("distractor_rate", c.distractor_rate);
  c.max_distractor_run = j.value("max_distractor_run", c.max_distractor_run);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.topics = j.value("topics", c.topics);
  c.sparsity = j.value("sparsity", c.sparsity);
  c.background_vocab_size = j.value("background_vocab_size", c.background_vocab_size);
  c.background_share = j.value("background_share", c.background_share);
  c.cue_rate = j.value("cue_rate", c.cue_rate);
  c.main_entity_rate = j.value("main_entity_rate", c.main_entity_rate);
  c.distractor_entity_rate = j.value("distractor_entity_rate", c.distractor_entity_rate);
  c.report_rate = j.value("report_rate", c.report_rate);
  c.cooccur_rate = j.value("cooccur_rate", c.cooccur_rate);
  c.inversion_rate = j.value("inversion_rate", c.inversion_rate);
  c.questions_per_doc = j.value("questions_per_doc", c.questions_per_doc);
  c.ending_noise = j.value("ending_noise", c.ending_noise);
  c.same_topic_wrong_endings = j.value("same_topic_wrong_endings", c.same_topic_wrong_endings);
  c.validate();
  return c;
}

std::vector<Document> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const NarrativeModel model = build_narrative_model(config);
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(config.num_docs));
  for (int i = 0; i < config.num_docs; ++i) docs.push_back(generate_document(config, model, i));
  return docs;
}

std::vector<ClozeStory> generate_cloze_stories(const SyntheticConfig& config, int count,
                                               std::uint64_t stream) {
  config.validate();
  const NarrativeModel m = build_narrative_model(config);
  nn::Rng rng = nn::Rng(config.seed).fork(500000 + stream);
  std::vector<ClozeStory> stories;
  for (int n = 0; n < count; ++n) {
    const int topic = static_cast<int>(rng.below(static_cast<std::size_t>(config.topics)));
    const std::vector<int> walk = markov_walk(m, topic, 5, rng);
    std::vector<int> wrong_pool;
    const auto& succ = m.successors[static_cast<std::size_t>(walk[3])];
    for (std::size_t i = 0; i < m.lemmas.size(); ++i) {
      const bool successor = std::any_of(succ.begin(), succ.end(), [&](const auto& s) {
        return s.first == static_cast<int>(i);
      });
      const bool on_topic = m.topic_of[i] == topic;
      if (!successor && i != static_cast<std::size_t>(walk[3]) &&
          (on_topic || !config.same_topic_wrong_endings)) {
        wrong_pool.push_back(static_cast<int>(i));
      }
    }
    if (wrong_pool.empty()) {
      throw std::invalid_argument("sparsity leaves no wrong ending for a cloze story");
    }
    ClozeStory s;
    for (int k = 0; k < 4; ++k) s.context_events.push_back(m.lemmas[static_cast<std::size_t>(walk[static_cast<std::size_t>(k)])]);
    std::vector<std::string> right = {m.lemmas[static_cast<std::size_t>(walk[4])]};
    std::vector<std::string> wrong = {m.lemmas[static_cast<std::size_t>(pick(wrong_pool, rng))]};
    for (auto* ending : {&right, &wrong}) {
      if (rng.bernoulli(config.ending_noise)) {
        const std::string& bg = pick(m.background, rng);
        if (rng.bernoulli(0.5)) {
          ending->insert(ending->begin(), bg);
        } else {
          ending->push_back(bg);
        }
      }
    }
    if (rng.bernoulli(0.5)) {
      s.ending_a_events = std::move(right);
      s.ending_b_events = std::move(wrong);
      s.gold = 'A';
    } else {
      s.ending_a_events = std::move(wrong);
      s.ending_b_events = std::move(right);
      s.gold = 'B';
    }
    stories.push_back(std::move(s));
  }
  return stories;
}

}  // namespace evchain
