#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "absa/errors.hpp"
#include "absa/rng.hpp"

namespace absa {

enum class Polarity { Positive = 0, Negative = 1, Neutral = 2 };
inline constexpr int kNumPolarities = 3;

inline const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::Positive: return "positive";
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
  }
  return "?";
}

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "positive") return Polarity::Positive;
  if (s == "negative") return Polarity::Negative;
  if (s == "neutral") return Polarity::Neutral;
  throw ParseError("unknown polarity: " + s);
}

struct Token {
  int index = 0;  // 1-based
  std::string form;
  std::string lemma;   // "_" when absent
  std::string upos;
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;        // 0 = root
  std::string deprel;
  std::string deps = "_";
  std::string misc = "_";
};

struct Arc {
  int head;
  int dep;
  std::string label;
  friend bool operator==(const Arc&, const Arc&) = default;
  friend auto operator<=>(const Arc&, const Arc&) = default;
};

// Relation label inventory (one label per line).
class LabelInventory {
 public:
  LabelInventory() = default;
  explicit LabelInventory(std::vector<std::string> labels) {
    for (auto& l : labels) add(l);
  }

  static LabelInventory load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open label inventory: " + path);
    LabelInventory inv;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) inv.add(line);
    }
    return inv;
  }

  void add(const std::string& label) {
    if (index_.emplace(label, static_cast<int>(labels_.size())).second)
      labels_.push_back(label);
  }
  bool contains(const std::string& label) const {
    return index_.count(label) > 0;
  }
  int id(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end())
      throw StructuralError("relation label not in inventory: " + label);
    return it->second;
  }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int> index_;
};

struct DepTree {
  std::vector<Token> tokens;

  int size() const { return static_cast<int>(tokens.size()); }
  const Token& at(int index_1based) const { return tokens[index_1based - 1]; }
  Token& at(int index_1based) { return tokens[index_1based - 1]; }

  std::vector<Arc> arcs() const {
    std::vector<Arc> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back({t.head, t.index, t.deprel});
    return out;
  }

  int root() const {
    for (const auto& t : tokens)
      if (t.head == 0) return t.index;
    throw StructuralError("tree has no root");
  }

  std::vector<int> children(int index_1based) const {
    std::vector<int> out;
    for (const auto& t : tokens)
      if (t.head == index_1based) out.push_back(t.index);
    return out;
  }

  std::vector<std::string> forms() const {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.form);
    return out;
  }

  // One head per token is structural; this checks single root + acyclicity
  // (which for a functional head map implies connectivity).
  void validate(const std::string& context = "") const {
    int n = size();
    int roots = 0;
    for (const auto& t : tokens) {
      if (t.index != &t - tokens.data() + 1)
        throw StructuralError("non-contiguous token indices" + where(context));
      if (t.form.empty())
        throw StructuralError("empty token form" + where(context));
      if (t.head < 0 || t.head > n || t.head == t.index)
        throw StructuralError("head out of range for token " +
                              std::to_string(t.index) + where(context));
      if (t.head == 0) ++roots;
    }
    if (roots != 1)
      throw StructuralError("tree must have exactly one root, found " +
                            std::to_string(roots) + where(context));
    for (const auto& t : tokens) {
      int cur = t.index, steps = 0;
      while (cur != 0) {
        cur = tokens[cur - 1].head;
        if (++steps > n)
          throw StructuralError("cycle involving token " +
                                std::to_string(t.index) + where(context));
      }
    }
  }

  void validate_labels(const LabelInventory& inv,
                       const std::string& context = "") const {
    for (const auto& t : tokens)
      if (!inv.contains(t.deprel))
        throw StructuralError("label '" + t.deprel + "' not in inventory" +
                              where(context));
  }

 private:
  static std::string where(const std::string& c) {
    return c.empty() ? "" : " (" + c + ")";
  }
};

struct AspectSpan {
  int start = 0;  // inclusive, 1-based
  int end = 0;    // exclusive

  int length() const { return end - start; }
  bool contains(int index_1based) const {
    return index_1based >= start && index_1based < end;
  }
  void validate(int n) const {
    if (!(1 <= start && start < end && end <= n + 1))
      throw StructuralError("aspect span [" + std::to_string(start) + "," +
                            std::to_string(end) + ") invalid for " +
                            std::to_string(n) + " tokens");
  }
  friend bool operator==(const AspectSpan&, const AspectSpan&) = default;
};

struct AbsaInstance {
  std::string id;
  DepTree tree;
  AspectSpan aspect;
  Polarity label = Polarity::Neutral;
  std::set<std::string> subset_tags;
  std::optional<std::set<int>> gold_opinion;

  void validate() const {
    tree.validate(id);
    aspect.validate(tree.size());
    if (gold_opinion)
      for (int i : *gold_opinion)
        if (i < 1 || i > tree.size())
          throw StructuralError("gold opinion index out of range in " + id);
  }

  std::vector<std::string> aspect_forms() const {
    std::vector<std::string> out;
    for (int i = aspect.start; i < aspect.end; ++i)
      out.push_back(tree.at(i).form);
    return out;
  }
};

namespace detail {
inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

// ---- CoNLL-U ----

inline std::vector<DepTree> load_conllu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CoNLL-U file: " + path);
  std::vector<DepTree> trees;
  DepTree cur;
  std::set<int> seen;
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      cur.validate("sentence " + std::to_string(trees.size()));
      trees.push_back(std::move(cur));
      cur = DepTree{};
      seen.clear();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 10)
      throw ParseError("line " + std::to_string(lineno) + ": expected 10 " +
                       "columns, got " + std::to_string(cols.size()));
    if (cols[0].find('-') != std::string::npos ||
        cols[0].find('.') != std::string::npos)
      continue;  // multiword/empty nodes are skipped
    Token t;
    try {
      t.index = std::stoi(cols[0]);
      t.head = std::stoi(cols[6]);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": non-numeric index or head");
    }
    t.form = cols[1];
    t.lemma = cols[2];
    t.upos = cols[3];
    t.xpos = cols[4];
    t.feats = cols[5];
    t.deprel = cols[7];
    t.deps = cols[8];
    t.misc = cols[9];
    if (!seen.insert(t.index).second)
      throw StructuralError("sentence " + std::to_string(trees.size()) +
                            ": token " + std::to_string(t.index) +
                            " has two head rows (line " +
                            std::to_string(lineno) + ")");
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return trees;
}

inline void serialize_conllu(const std::vector<DepTree>& trees,
                             std::ostream& out) {
  for (const auto& tree : trees) {
    for (const auto& t : tree.tokens) {
      out << t.index << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos
          << '\t' << t.xpos << '\t' << t.feats << '\t' << t.head << '\t'
          << t.deprel << '\t' << t.deps << '\t' << t.misc << '\n';
    }
    out << '\n';
  }
}

inline void save_conllu(const std::vector<DepTree>& trees,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write: " + path);
  serialize_conllu(trees, out);
}

// ---- instance records ----
// id \t sentence-index \t start \t end \t polarity \t tags \t opinion
// tags: comma-separated or "-"; opinion: comma-separated 1-based or "-".

inline std::vector<AbsaInstance> load_instances(
    const std::string& path, const std::vector<DepTree>& trees) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instance file: " + path);
  std::vector<AbsaInstance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 7)
      throw ParseError("instance line " + std::to_string(lineno) +
                       ": expected 7 columns, got " +
                       std::to_string(cols.size()));
    AbsaInstance inst;
    inst.id = cols[0];
    size_t sent;
    try {
      sent = std::stoul(cols[1]);
      inst.aspect.start = std::stoi(cols[2]);
      inst.aspect.end = std::stoi(cols[3]);
    } catch (const std::exception&) {
      throw ParseError("instance line " + std::to_string(lineno) +
                       ": non-numeric field");
    }
    if (sent >= trees.size())
      throw ParseError("instance line " + std::to_string(lineno) +
                       ": sentence index " + std::to_string(sent) +
                       " out of range");
    inst.tree = trees[sent];
    inst.label = polarity_from_string(cols[4]);
    if (cols[5] != "-" && !cols[5].empty())
      for (const auto& t : detail::split(cols[5], ','))
        if (!t.empty()) inst.subset_tags.insert(t);
    if (cols[6] != "-" && !cols[6].empty()) {
      std::set<int> op;
      for (const auto& t : detail::split(cols[6], ','))
        if (!t.empty()) op.insert(std::stoi(t));
      inst.gold_opinion = std::move(op);
    }
    try {
      inst.validate();
    } catch (const StructuralError& e) {
      throw ParseError("instance line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::string format_instance_record(const AbsaInstance& inst,
                                          size_t sentence_index) {
  std::ostringstream os;
  os << inst.id << '\t' << sentence_index << '\t' << inst.aspect.start << '\t'
     << inst.aspect.end << '\t' << to_string(inst.label) << '\t';
  if (inst.subset_tags.empty()) {
    os << '-';
  } else {
    bool first = true;
    for (const auto& t : inst.subset_tags) {
      if (!first) os << ',';
      os << t;
      first = false;
    }
  }
  os << '\t';
  if (!inst.gold_opinion || inst.gold_opinion->empty()) {
    os << '-';
  } else {
    bool first = true;
    for (int i : *inst.gold_opinion) {
      if (!first) os << ',';
      os << i;
      first = false;
    }
  }
  return os.str();
}

// ---- parse-noise injection ----
// Re-points round(rate*n) arcs to random valid heads with random labels,
// resampling until the result is a valid tree that differs on exactly the
// selected arcs.
inline DepTree inject_parse_noise(const DepTree& tree, double rate,
                                  uint64_t seed, const LabelInventory& inv) {
  if (rate < 0.0 || rate > 1.0)
    throw StructuralError("noise rate must lie in [0,1]");
  tree.validate();
  int n = tree.size();
  int k = static_cast<int>(std::lround(rate * n));
  if (k == 0) return tree;
  if (inv.size() == 0) throw StructuralError("empty label inventory");
  Rng rng(mix(seed, 0x70617273656e6fULL));
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i + 1;
    rng.shuffle(order);
    DepTree out = tree;
    for (int i = 0; i < k; ++i) {
      int dep = order[i];
      const Token& orig = tree.at(dep);
      // sample until (head,label) differs from the original arc
      for (int tries = 0;; ++tries) {
        if (tries > 1000) throw StructuralError("noise sampling stuck");
        int head = static_cast<int>(rng.next_below(n + 1));
        if (head == dep) continue;
        std::string label =
            head == 0 ? std::string("root")
                      : inv.labels()[rng.next_below(inv.size())];
        if (head == 0 && !inv.contains("root")) continue;
        if (head == orig.head && label == orig.deprel) continue;
        out.at(dep).head = head;
        out.at(dep).deprel = label;
        break;
      }
    }
    // reject invalid trees and untouched-arc collisions
    try {
      out.validate();
    } catch (const StructuralError&) {
      continue;
    }
    int diff = 0;
    for (int i = 1; i <= n; ++i)
      if (out.at(i).head != tree.at(i).head ||
          out.at(i).deprel != tree.at(i).deprel)
        ++diff;
    if (diff != k) continue;
    return out;
  }
  throw StructuralError("inject_parse_noise failed to find a valid tree");
}

}  // namespace absa
