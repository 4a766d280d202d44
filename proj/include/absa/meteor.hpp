#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "absa/errors.hpp"

namespace absa {

// Exact-unigram METEOR against a single reference.
//   P = m/|cand|, R = m/|ref|, F = 10PR/(R+9P),
//   Penalty = 0.5*(chunks/m)^3, score = F*(1-Penalty).
// The alignment maximizes the number of matches and, among maximal
// alignments, minimizes the number of chunks.

namespace meteor_detail {

inline int count_chunks(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) return 0;
  int chunks = 1;
  for (size_t i = 1; i < pairs.size(); ++i)
    if (!(pairs[i].first == pairs[i - 1].first + 1 &&
          pairs[i].second == pairs[i - 1].second + 1))
      ++chunks;
  return chunks;
}

struct AlignSearch {
  const std::vector<std::string>& cand;
  std::map<std::string, std::vector<int>> ref_positions;  // remaining
  std::map<std::string, int> match_quota;                 // per word
  std::vector<std::pair<int, int>> current;
  int best_chunks = 1 << 30;
  long states = 0;
  static constexpr long kStateLimit = 200000;

  void run(size_t ci) {
    if (++states > kStateLimit) return;
    if (ci == cand.size()) {
      best_chunks = std::min(best_chunks, count_chunks(current));
      return;
    }
    const std::string& w = cand[ci];
    auto qit = match_quota.find(w);
    int skips_left = skipped_quota(w);
    if (qit != match_quota.end() && qit->second > 0) {
      auto& refs = ref_positions[w];
      for (size_t r = 0; r < refs.size(); ++r) {
        if (refs[r] < 0) continue;
        int rp = refs[r];
        refs[r] = -1;
        --qit->second;
        current.emplace_back(static_cast<int>(ci), rp);
        run(ci + 1);
        current.pop_back();
        ++qit->second;
        refs[r] = rp;
        if (states > kStateLimit) return;
      }
      if (skips_left > 0) {
        --skip_remaining[w];
        run(ci + 1);
        ++skip_remaining[w];
      }
    } else {
      run(ci + 1);
    }
  }

  std::map<std::string, int> skip_remaining;
  int skipped_quota(const std::string& w) {
    auto it = skip_remaining.find(w);
    return it == skip_remaining.end() ? 0 : it->second;
  }
};

}  // namespace meteor_detail

inline double meteor(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference) {
  if (reference.empty()) throw StructuralError("meteor: empty reference");
  if (candidate.empty()) return 0.0;

  std::map<std::string, int> cc, cr;
  for (const auto& w : candidate) ++cc[w];
  for (const auto& w : reference) ++cr[w];
  int m = 0;
  for (const auto& [w, c] : cc) {
    auto it = cr.find(w);
    if (it != cr.end()) m += std::min(c, it->second);
  }
  if (m == 0) return 0.0;

  meteor_detail::AlignSearch search{candidate};
  for (const auto& [w, c] : cc) {
    auto it = cr.find(w);
    if (it == cr.end()) continue;
    int quota = std::min(c, it->second);
    search.match_quota[w] = quota;
    search.skip_remaining[w] = c - quota;
  }
  for (size_t i = 0; i < reference.size(); ++i)
    if (search.match_quota.count(reference[i]))
      search.ref_positions[reference[i]].push_back(static_cast<int>(i));
  search.run(0);

  int chunks = search.best_chunks;
  if (chunks > m) {
    // state limit hit before any full alignment: fall back to the
    // in-order greedy alignment
    std::map<std::string, size_t> next;
    std::vector<std::pair<int, int>> pairs;
    auto quota = search.match_quota;
    for (size_t i = 0; i < candidate.size(); ++i) {
      auto q = quota.find(candidate[i]);
      if (q == quota.end() || q->second == 0) continue;
      auto& refs = search.ref_positions[candidate[i]];
      size_t& k = next[candidate[i]];
      if (k < refs.size()) {
        pairs.emplace_back(static_cast<int>(i), refs[k++]);
        --q->second;
      }
    }
    chunks = meteor_detail::count_chunks(pairs);
  }

  double p = static_cast<double>(m) / candidate.size();
  double r = static_cast<double>(m) / reference.size();
  double f = 10.0 * p * r / (r + 9.0 * p);
  double frag = static_cast<double>(chunks) / m;
  double penalty = 0.5 * frag * frag * frag;
  return f * (1.0 - penalty);
}

}  // namespace absa
