#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "absa/errors.hpp"

namespace absa {

// Token vocabulary; ids 0..2 are reserved for [CLS], [SEP], [UNK].
class Vocab {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kUnk = 2;
  static constexpr int kNumSpecials = 3;

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) v.add(line);
    }
    return v;
  }

  template <typename Range>
  static Vocab from_tokens(const Range& tokens) {
    Vocab v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  void add(const std::string& token) {
    if (index_.emplace(token, kNumSpecials + static_cast<int>(words_.size()))
            .second)
      words_.push_back(token);
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }

  int size() const { return kNumSpecials + static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write vocabulary: " + path);
    for (const auto& w : words_) out << w << "\n";
  }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

}  // namespace absa
