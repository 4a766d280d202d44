#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "absa/corpus.hpp"
#include "absa/errors.hpp"

namespace absa {

// Per-polarity strength scores a(O,C) in [0,1].
struct SentimentScores {
  std::array<double, kNumPolarities> s{0, 0, 0};

  double at(Polarity p) const { return s[static_cast<int>(p)]; }
  double& at(Polarity p) { return s[static_cast<int>(p)]; }

  // Mass on classes other than `target`.
  double off_target_mass(Polarity target) const {
    double m = 0;
    for (int i = 0; i < kNumPolarities; ++i)
      if (i != static_cast<int>(target)) m += s[i];
    return m;
  }

  Polarity dominant() const {
    int best = 0;
    for (int i = 1; i < kNumPolarities; ++i)
      if (s[i] > s[best]) best = i;
    return static_cast<Polarity>(best);
  }

  bool neutral_dominant() const {
    return s[static_cast<int>(Polarity::Neutral)] >=
               s[static_cast<int>(Polarity::Positive)] &&
           s[static_cast<int>(Polarity::Neutral)] >=
               s[static_cast<int>(Polarity::Negative)];
  }
};

// Loaded from a 5-column TSV: word, UPOS, pos, neu, neg.
// Duplicate (word,UPOS) rows are averaged; lookup falls back to a
// word-only match when the exact UPOS key is absent.
class SentimentLexicon {
 public:
  static SentimentLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open sentiment lexicon: " + path);
    SentimentLexicon lex;
    std::map<std::pair<std::string, std::string>, int> counts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto cols = detail::split(line, '\t');
      if (cols.size() != 5)
        throw ParseError("sentiment lexicon line " + std::to_string(lineno) +
                         ": expected 5 columns");
      SentimentScores sc;
      try {
        sc.at(Polarity::Positive) = std::stod(cols[2]);
        sc.at(Polarity::Neutral) = std::stod(cols[3]);
        sc.at(Polarity::Negative) = std::stod(cols[4]);
      } catch (const std::exception&) {
        throw ParseError("sentiment lexicon line " + std::to_string(lineno) +
                         ": non-numeric score");
      }
      for (double v : sc.s)
        if (v < 0.0 || v > 1.0)
          throw ParseError("sentiment lexicon line " + std::to_string(lineno) +
                           ": score outside [0,1]");
      auto key = std::make_pair(cols[0], cols[1]);
      auto it = lex.entries_.find(key);
      if (it == lex.entries_.end()) {
        lex.entries_[key] = sc;
        counts[key] = 1;
      } else {
        // multiple synset rows for one key are averaged
        int c = counts[key]++;
        for (int i = 0; i < kNumPolarities; ++i)
          it->second.s[i] = (it->second.s[i] * c + sc.s[i]) / (c + 1);
        ++lex.duplicate_rows_;
      }
    }
    return lex;
  }

  // Number of rows that re-used an existing (word,UPOS) key.
  int duplicate_rows() const { return duplicate_rows_; }

  std::optional<SentimentScores> lookup(const std::string& word,
                                        const std::string& upos) const {
    auto it = entries_.find({word, upos});
    if (it != entries_.end()) return it->second;
    // word-only fallback: first key in UPOS order
    auto lo = entries_.lower_bound({word, ""});
    if (lo != entries_.end() && lo->first.first == word) return lo->second;
    return std::nullopt;
  }

  bool has_upos(const std::string& word, const std::string& upos) const {
    return entries_.count({word, upos}) > 0;
  }

  const std::map<std::pair<std::string, std::string>, SentimentScores>&
  entries() const {
    return entries_;
  }

 private:
  std::map<std::pair<std::string, std::string>, SentimentScores> entries_;
  int duplicate_rows_ = 0;
};

enum class Relation { Synonym, Antonym };

// Rows: word \t UPOS \t synonym|antonym \t target.
class RelationLexicon {
 public:
  static RelationLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open relation lexicon: " + path);
    RelationLexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto cols = detail::split(line, '\t');
      if (cols.size() != 4)
        throw ParseError("relation lexicon line " + std::to_string(lineno) +
                         ": expected 4 columns");
      Relation rel;
      if (cols[2] == "synonym") rel = Relation::Synonym;
      else if (cols[2] == "antonym") rel = Relation::Antonym;
      else
        throw ParseError("relation lexicon line " + std::to_string(lineno) +
                         ": unknown relation '" + cols[2] + "'");
      lex.add(cols[0], cols[1], rel, cols[3], lineno);
    }
    return lex;
  }

  void add(const std::string& word, const std::string& upos, Relation rel,
           const std::string& target, int lineno = 0) {
    if (target == word)
      throw ParseError("relation lexicon line " + std::to_string(lineno) +
                       ": word related to itself");
    auto& e = entries_[{word, upos}];
    auto& mine = rel == Relation::Synonym ? e.synonyms : e.antonyms;
    auto& other = rel == Relation::Synonym ? e.antonyms : e.synonyms;
    for (const auto& t : other)
      if (t == target)
        throw ParseError("'" + target + "' is both synonym and antonym of '" +
                         word + "'");
    for (const auto& t : mine)
      if (t == target) return;  // duplicate row
    mine.push_back(target);
  }

  std::vector<std::string> candidates(const std::string& word,
                                      const std::string& upos,
                                      Relation rel) const {
    auto it = entries_.find({word, upos});
    if (it == entries_.end()) return {};
    return rel == Relation::Synonym ? it->second.synonyms
                                    : it->second.antonyms;
  }

 private:
  struct Entry {
    std::vector<std::string> synonyms;
    std::vector<std::string> antonyms;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries_;
};

// One negation token per line; defaults to {not, n't, never}.
class NegationList {
 public:
  NegationList() : words_{"not", "n't", "never"} {}
  explicit NegationList(std::vector<std::string> words)
      : words_(std::move(words)) {
    if (words_.empty()) throw ConfigError("negation list must be non-empty");
  }

  static NegationList load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open negation list: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) words.push_back(line);
    }
    return NegationList(std::move(words));
  }

  const std::vector<std::string>& words() const { return words_; }
  const std::string& primary() const { return words_.front(); }

 private:
  std::vector<std::string> words_;
};

}  // namespace absa
