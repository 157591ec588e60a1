// String <-> dense id map with reserved symbols at the front. Id 0 is always
// the unknown symbol.

#ifndef EVCHAIN_VOCAB_HPP_
#define EVCHAIN_VOCAB_HPP_

#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace evchain {

class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  explicit Vocabulary(const std::vector<std::string>& extra_specials) {
    add(std::string(kUnknown));
    for (const std::string& s : extra_specials) add(s);
    special_count_ = words_.size();
  }

  int add(const std::string& word) {
    auto [it, inserted] = ids_.emplace(word, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(word);
    return it->second;
  }

  int id(std::string_view word) const {
    auto it = ids_.find(std::string(word));
    return it == ids_.end() ? 0 : it->second;
  }
  bool contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  std::size_t special_count() const { return special_count_; }

  nlohmann::json to_json() const {
    return {{"specials", special_count_}, {"words", words_}};
  }
  static Vocabulary from_json(const nlohmann::json& j) {
    const auto words = j.at("words").get<std::vector<std::string>>();
    const auto specials = j.at("specials").get<std::size_t>();
    if (words.empty() || words[0] != kUnknown || specials > words.size()) {
      throw std::invalid_argument("malformed vocabulary record");
    }
    Vocabulary v(std::vector<std::string>(words.begin() + 1, words.begin() + static_cast<long>(specials)));
    for (std::size_t i = specials; i < words.size(); ++i) v.add(words[i]);
    return v;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::size_t special_count_ = 0;
};

}  // namespace evchain

#endif  // EVCHAIN_VOCAB_HPP_
