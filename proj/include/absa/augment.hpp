#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "absa/corpus.hpp"
#include "absa/lexicon.hpp"
#include "absa/meteor.hpp"
#include "absa/rng.hpp"
#include "absa/tensor.hpp"

namespace absa {

// ---- opinion localization ----

enum class OpinionRelation { Amod, Nsubj, Dobj, Xcomp };

inline const char* to_string(OpinionRelation r) {
  switch (r) {
    case OpinionRelation::Amod: return "amod";
    case OpinionRelation::Nsubj: return "nsubj";
    case OpinionRelation::Dobj: return "dobj";
    case OpinionRelation::Xcomp: return "xcomp";
  }
  return "?";
}

struct OpinionLink {
  AspectSpan aspect;
  std::set<int> opinion;  // token indices, disjoint from the aspect span
  OpinionRelation relation;
};

// Token inside the span whose head lies outside it (or the root).
inline int aspect_head_index(const AbsaInstance& inst) {
  for (int i = inst.aspect.start; i < inst.aspect.end; ++i) {
    int h = inst.tree.at(i).head;
    if (h == 0 || !inst.aspect.contains(h)) return i;
  }
  throw StructuralError("aspect span has no external head in " + inst.id);
}

// Rule-based extraction of explicit opinion expressions:
//   1. amod modifier of the aspect head
//   2. predicate whose nominal subject is the aspect head
//   3. verb taking the aspect as direct object
//   4. open clausal complement of that predicate/verb, which when present
//      replaces the predicate itself as the opinion
inline std::vector<OpinionLink> locate_opinions(const AbsaInstance& inst) {
  inst.validate();
  std::vector<OpinionLink> links;
  int head = aspect_head_index(inst);
  const Token& ht = inst.tree.at(head);
  auto push = [&](int opinion_idx, OpinionRelation rel) {
    if (inst.aspect.contains(opinion_idx)) return;
    links.push_back({inst.aspect, {opinion_idx}, rel});
  };
  for (int c : inst.tree.children(head))
    if (inst.tree.at(c).deprel == "amod") push(c, OpinionRelation::Amod);
  auto is_object = [](const std::string& rel) {
    return rel == "dobj" || rel == "obj";
  };
  if ((ht.deprel == "nsubj" || is_object(ht.deprel)) && ht.head != 0) {
    int pred = ht.head;
    std::vector<int> xcomps;
    for (int c : inst.tree.children(pred))
      if (inst.tree.at(c).deprel == "xcomp") xcomps.push_back(c);
    if (!xcomps.empty()) {
      for (int c : xcomps) push(c, OpinionRelation::Xcomp);
    } else if (ht.deprel == "nsubj") {
      push(pred, OpinionRelation::Nsubj);
    } else {
      push(pred, OpinionRelation::Dobj);
    }
  }
  return links;
}

// ---- modification confidence (the sentiment-flip quality gate) ----
//   p = a(O_s, C_s) * 2 a(O_t, C_t) / sum_{C != C_t} a(O_t, C)
inline double modification_confidence(double src_score,
                                      const SentimentScores& tgt,
                                      Polarity target) {
  if (src_score < 0 || src_score > 1)
    throw StructuralError("source score outside [0,1]");
  double mass = tgt.off_target_mass(target);
  if (mass <= 0)
    throw NumericError("modification confidence undefined: zero off-target mass");
  return src_score * 2.0 * tgt.at(target) / mass;
}

// ---- synthetic samples ----

enum class SynthKind { SentimentMod, BackgroundRewrite, AspectAddition };

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::SentimentMod: return "sentiment_mod";
    case SynthKind::BackgroundRewrite: return "background_rewrite";
    case SynthKind::AspectAddition: return "aspect_addition";
  }
  return "?";
}

inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "sentiment_mod") return SynthKind::SentimentMod;
  if (s == "background_rewrite") return SynthKind::BackgroundRewrite;
  if (s == "aspect_addition") return SynthKind::AspectAddition;
  throw ParseError("unknown synthetic kind: " + s);
}

struct SyntheticSample {
  std::string id;
  std::string source_id;
  SynthKind kind = SynthKind::SentimentMod;
  DepTree tree;
  AspectSpan aspect;
  Polarity label = Polarity::Neutral;
  double confidence = 0.0;
  bool needs_reparse = false;
  std::vector<double> unit_scores;  // AspectAddition: the per-unit phi values

  AbsaInstance as_instance() const {
    AbsaInstance inst;
    inst.id = id;
    inst.tree = tree;
    inst.aspect = aspect;
    inst.label = label;
    return inst;
  }
};

// ---- tree edits ----

namespace augment_detail {

// Insert a token before 1-based position `pos`, re-indexing heads.
inline void insert_token(DepTree& tree, int pos, Token tok) {
  int n = tree.size();
  if (pos < 1 || pos > n + 1) throw StructuralError("bad insertion point");
  for (auto& t : tree.tokens) {
    if (t.index >= pos) ++t.index;
    if (t.head >= pos) ++t.head;
  }
  if (tok.head >= pos) ++tok.head;
  tok.index = pos;
  tree.tokens.insert(tree.tokens.begin() + (pos - 1), std::move(tok));
}

inline void shift_span(AspectSpan& span, int inserted_at) {
  if (inserted_at <= span.start) {
    ++span.start;
    ++span.end;
  } else if (inserted_at < span.end) {
    throw StructuralError("insertion inside aspect span");
  }
}

}  // namespace augment_detail

// ---- sentiment modification (D_a) ----

struct SentimentModOptions {
  int max_combinations = 8;  // cap on combinatorial multi-link variants
};

// Negation flips positive<->negative; negating a neutral statement reads
// as refusal, so it maps to negative.
inline Polarity negation_target(Polarity src) {
  switch (src) {
    case Polarity::Positive: return Polarity::Negative;
    case Polarity::Negative: return Polarity::Positive;
    case Polarity::Neutral: return Polarity::Negative;
  }
  return Polarity::Negative;
}

inline std::vector<SyntheticSample> gen_sentiment_mod(
    const AbsaInstance& inst, const SentimentLexicon& sent_lex,
    const RelationLexicon& rel_lex, const NegationList& negations,
    double theta_a, const SentimentModOptions& opts = {}) {
  if (theta_a < 0) throw StructuralError("theta_a must be >= 0");
  auto links = locate_opinions(inst);
  if (links.empty()) return {};

  // Per-link edit candidates for one target polarity.
  struct Edit {
    int opinion;            // token index
    std::string new_form;   // empty => negation insertion
    double confidence;
  };

  std::vector<SyntheticSample> out;
  int counter = 0;
  std::array<Polarity, 3> targets = {Polarity::Positive, Polarity::Negative,
                                     Polarity::Neutral};
  for (Polarity target : targets) {
    bool same = target == inst.label;
    std::vector<std::vector<Edit>> per_link;
    bool feasible = true;
    for (const auto& link : links) {
      int op = *link.opinion.begin();
      const Token& ot = inst.tree.at(op);
      auto src_entry = sent_lex.lookup(ot.form, ot.upos);
      std::vector<Edit> edits;
      if (src_entry) {
        double src_score = src_entry->at(inst.label);
        auto rel = same ? Relation::Synonym : Relation::Antonym;
        for (const auto& cand : rel_lex.candidates(ot.form, ot.upos, rel)) {
          // POS-tag agreement gate: the candidate must be known under the
          // source opinion's UPOS
          if (!sent_lex.has_upos(cand, ot.upos)) continue;
          auto tgt_entry = sent_lex.lookup(cand, ot.upos);
          try {
            double conf =
                modification_confidence(src_score, *tgt_entry, target);
            edits.push_back({op, cand, conf});
          } catch (const NumericError&) {
            // zero off-target mass: candidate rejected
          }
        }
        if (!same && target == negation_target(inst.label)) {
          // negation swaps the positive and negative strengths
          SentimentScores swapped = *src_entry;
          std::swap(swapped.at(Polarity::Positive),
                    swapped.at(Polarity::Negative));
          try {
            double conf =
                modification_confidence(src_score, swapped, target);
            edits.push_back({op, "", conf});
          } catch (const NumericError&) {
          }
        }
      }
      if (edits.empty()) {
        feasible = false;
        break;
      }
      per_link.push_back(std::move(edits));
    }
    if (!feasible || (same && per_link.empty())) continue;

    // cartesian product across links, substitutions applied simultaneously
    std::vector<std::vector<const Edit*>> combos{{}};
    for (const auto& edits : per_link) {
      std::vector<std::vector<const Edit*>> next;
      for (const auto& combo : combos)
        for (const auto& e : edits) {
          if (static_cast<int>(next.size()) >= opts.max_combinations) break;
          auto c = combo;
          c.push_back(&e);
          next.push_back(std::move(c));
        }
      combos = std::move(next);
    }
    for (const auto& combo : combos) {
      double conf = 1e300;
      for (const Edit* e : combo) conf = std::min(conf, e->confidence);
      if (conf < theta_a) continue;
      SyntheticSample s;
      s.source_id = inst.id;
      s.kind = SynthKind::SentimentMod;
      s.tree = inst.tree;
      s.aspect = inst.aspect;
      s.label = target;
      s.confidence = conf;
      s.needs_reparse = false;
      // substitutions first, then negation insertions right-to-left so
      // earlier indices stay valid
      std::vector<int> neg_points;
      for (const Edit* e : combo) {
        if (!e->new_form.empty()) {
          Token& t = s.tree.at(e->opinion);
          t.form = e->new_form;
          t.lemma = e->new_form;
        } else {
          neg_points.push_back(e->opinion);
        }
      }
      std::sort(neg_points.rbegin(), neg_points.rend());
      for (int op : neg_points) {
        // before the opinion head; after the copula when present
        int pos = op;
        for (int c : s.tree.children(op))
          if (s.tree.at(c).deprel == "cop" && c < op) pos = c + 1;
        Token neg;
        neg.form = negations.primary();
        neg.lemma = negations.primary();
        neg.upos = "PART";
        neg.head = op;
        neg.deprel = "neg";
        augment_detail::insert_token(s.tree, pos, std::move(neg));
        augment_detail::shift_span(s.aspect, pos);
      }
      s.id = inst.id + "#a" + std::to_string(counter++);
      s.tree.validate(s.id);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---- background rewriting (D_n) ----

// Sentence-in, sentence-out; implementations may throw on failure.
class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::vector<std::string> paraphrase(
      const std::vector<std::string>& tokens) = 0;
};

// Offline deterministic stand-in for the external back-translation
// service: cycles eligible tokens through lexicon synonyms, preserving
// length and order.
class StubParaphraser : public Paraphraser {
 public:
  StubParaphraser(const RelationLexicon* rel, uint64_t seed)
      : rel_(rel), seed_(seed) {}

  std::vector<std::string> paraphrase(
      const std::vector<std::string>& tokens) override {
    std::vector<std::string> out = tokens;
    static const char* kPos[] = {"ADJ", "NOUN", "VERB", "ADV"};
    for (size_t i = 0; i < out.size(); ++i) {
      uint64_t h = mix(seed_, i, hash_string(out[i]));
      if (h % 2 != 0) continue;
      for (const char* pos : kPos) {
        auto cands = rel_->candidates(out[i], pos, Relation::Synonym);
        if (!cands.empty()) {
          out[i] = cands[h % cands.size()];
          break;
        }
      }
    }
    return out;
  }

 private:
  const RelationLexicon* rel_;
  uint64_t seed_;
};

struct RewriteOptions {
  bool tense_edits = true;
  bool pronoun_edits = true;
  bool quantifier_edits = true;
  bool punctuation_edits = true;
  bool neutral_substitution = true;
  bool paraphrase = true;
  int max_substitutions_per_token = 1;
};

namespace augment_detail {

inline const std::map<std::string, std::string>& quantifier_swaps() {
  static const std::map<std::string, std::string> m = {
      {"some", "many"}, {"many", "some"}, {"few", "several"},
      {"several", "few"}, {"all", "most"}, {"most", "all"}};
  return m;
}

// Agreement between two sentiment profiles: complement of the total
// variation distance, in [0,1].
inline double polarity_agreement(const SentimentScores& a,
                                 const SentimentScores& b) {
  double tv = 0;
  for (int i = 0; i < kNumPolarities; ++i) tv += std::abs(a.s[i] - b.s[i]);
  return 1.0 - tv / 2.0;
}

// Right-branching fallback tree for reparse-pending token lists.
inline DepTree flat_tree(const std::vector<std::string>& forms) {
  DepTree t;
  for (size_t i = 0; i < forms.size(); ++i) {
    Token tok;
    tok.index = static_cast<int>(i) + 1;
    tok.form = forms[i];
    tok.lemma = forms[i];
    tok.upos = "X";
    tok.head = i == 0 ? 0 : 1;
    tok.deprel = i == 0 ? "root" : "dep";
    t.tokens.push_back(std::move(tok));
  }
  return t;
}

}  // namespace augment_detail

inline std::vector<SyntheticSample> rewrite_background(
    const AbsaInstance& inst, const SentimentLexicon& sent_lex,
    const RelationLexicon& rel_lex, double theta_n, Paraphraser& paraphraser,
    const RewriteOptions& opts = {}, int* paraphrase_skips = nullptr) {
  std::set<int> protected_idx;
  for (int i = inst.aspect.start; i < inst.aspect.end; ++i)
    protected_idx.insert(i);
  std::set<int> opinion_idx;
  for (const auto& link : locate_opinions(inst))
    for (int o : link.opinion) {
      protected_idx.insert(o);
      opinion_idx.insert(o);
    }
  const auto original = inst.tree.forms();

  std::vector<SyntheticSample> out;
  int counter = 0;
  auto emit = [&](DepTree tree, AspectSpan aspect, bool needs_reparse) {
    double conf = meteor(tree.forms(), original);
    if (conf < theta_n) return;
    SyntheticSample s;
    s.id = inst.id + "#n" + std::to_string(counter++);
    s.source_id = inst.id;
    s.kind = SynthKind::BackgroundRewrite;
    s.tree = std::move(tree);
    s.aspect = aspect;
    s.label = inst.label;
    s.confidence = conf;
    s.needs_reparse = needs_reparse;
    s.tree.validate(s.id);
    out.push_back(std::move(s));
  };

  // strategy 1: surface edits on opinion-less context
  {
    DepTree t = inst.tree;
    bool changed = false;
    int pronouns = 0;
    for (const auto& tok : t.tokens)
      if (tok.upos == "PRON") ++pronouns;
    for (auto& tok : t.tokens) {
      if (protected_idx.count(tok.index)) continue;
      if (opts.tense_edits && tok.upos == "VERB" && tok.lemma != "_" &&
          !tok.lemma.empty() && tok.lemma != tok.form) {
        tok.form = tok.lemma;
        changed = true;
      } else if (opts.pronoun_edits && tok.upos == "PRON" && pronouns <= 1 &&
                 (tok.form == "he" || tok.form == "she")) {
        tok.form = tok.form == "he" ? "she" : "he";
        tok.lemma = tok.form;
        changed = true;
      } else if (opts.quantifier_edits) {
        auto it = augment_detail::quantifier_swaps().find(tok.form);
        if (it != augment_detail::quantifier_swaps().end()) {
          tok.form = it->second;
          tok.lemma = it->second;
          changed = true;
        }
      }
    }
    if (opts.punctuation_edits && !t.tokens.empty() &&
        t.tokens.back().form == "." &&
        !protected_idx.count(t.tokens.back().index)) {
      t.tokens.back().form = "!";
      t.tokens.back().lemma = "!";
      changed = true;
    }
    if (changed) emit(std::move(t), inst.aspect, false);
  }

  // strategy 2: synonym/antonym substitution of neutral-dominant words
  if (opts.neutral_substitution) {
    for (const auto& tok : inst.tree.tokens) {
      if (protected_idx.count(tok.index)) continue;
      auto entry = sent_lex.lookup(tok.form, tok.upos);
      if (!entry || !entry->neutral_dominant()) continue;
      int emitted = 0;
      for (Relation rel : {Relation::Synonym, Relation::Antonym}) {
        for (const auto& cand :
             rel_lex.candidates(tok.form, tok.upos, rel)) {
          if (!sent_lex.has_upos(cand, tok.upos)) continue;  // POS must match
          if (emitted >= opts.max_substitutions_per_token) break;
          DepTree t = inst.tree;
          t.at(tok.index).form = cand;
          t.at(tok.index).lemma = cand;
          emit(std::move(t), inst.aspect, false);
          ++emitted;
        }
      }
    }
  }

  // strategy 3: whole-sentence paraphrase with the aspect pinned
  if (opts.paraphrase) {
    bool ok = true;
    std::vector<std::string> para;
    try {
      para = paraphraser.paraphrase(original);
      if (para.empty()) ok = false;
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      if (paraphrase_skips) ++(*paraphrase_skips);
    } else {
      bool same_len = para.size() == original.size();
      if (same_len) {
        // pin the aspect term
        for (int i = inst.aspect.start; i < inst.aspect.end; ++i)
          para[i - 1] = original[i - 1];
      }
      std::set<std::string> para_forms(para.begin(), para.end());
      int survived = 0;
      for (int o : opinion_idx)
        if (para_forms.count(original[o - 1])) ++survived;
      bool accept = true;
      if (!opinion_idx.empty() && survived == 0) {
        // fully changed: accept only on strong lexicon polarity agreement
        accept = false;
        int o = *opinion_idx.begin();
        const Token& ot = inst.tree.at(o);
        auto src = sent_lex.lookup(ot.form, ot.upos);
        size_t rpos = same_len ? static_cast<size_t>(o - 1)
                               : std::min(para.size() - 1,
                                          static_cast<size_t>(o - 1));
        auto repl = sent_lex.lookup(para[rpos], ot.upos);
        if (src && repl &&
            augment_detail::polarity_agreement(*src, *repl) > 0.5)
          accept = true;
      }
      if (!accept || (survived < static_cast<int>(opinion_idx.size()))) {
        // splice the original opinion expression back
        for (int o : opinion_idx) {
          size_t rpos = same_len ? static_cast<size_t>(o - 1)
                                 : std::min(para.size() - 1,
                                            static_cast<size_t>(o - 1));
          para[rpos] = original[o - 1];
        }
      }
      if (same_len) {
        DepTree t = inst.tree;
        for (int i = 1; i <= t.size(); ++i) {
          if (t.at(i).form != para[i - 1]) {
            t.at(i).form = para[i - 1];
            t.at(i).lemma = para[i - 1];
          }
        }
        emit(std::move(t), inst.aspect, true);
      } else {
        // locate the pinned aspect in the rewritten token list
        auto aspect_forms = inst.aspect_forms();
        int found = -1;
        for (size_t i = 0; i + aspect_forms.size() <= para.size(); ++i) {
          bool match = true;
          for (size_t j = 0; j < aspect_forms.size(); ++j)
            if (para[i + j] != aspect_forms[j]) {
              match = false;
              break;
            }
          if (match) {
            found = static_cast<int>(i) + 1;
            break;
          }
        }
        if (found < 0) {
          if (paraphrase_skips) ++(*paraphrase_skips);
        } else {
          AspectSpan span{found,
                          found + static_cast<int>(aspect_forms.size())};
          emit(augment_detail::flat_tree(para), span, true);
        }
      }
    }
  }
  return out;
}

// ---- non-target aspect addition (D_m) ----

using Embedder = std::function<Tensor(const std::vector<std::string>&)>;

// Mean of per-word deterministic pseudo-vectors; the offline stand-in for
// pretrained-encoder embeddings.
inline Embedder hash_embedder(int dim, uint64_t seed) {
  return [dim, seed](const std::vector<std::string>& words) {
    Tensor v = Tensor::zeros({dim});
    if (words.empty()) return v;
    for (const auto& w : words) {
      uint64_t h = mix(seed, hash_string(w));
      for (int j = 0; j < dim; ++j)
        v(j) += 2.0 * uniform01(mix(h, static_cast<uint64_t>(j))) - 1.0;
    }
    for (int j = 0; j < dim; ++j) v(j) /= static_cast<double>(words.size());
    return v;
  };
}

struct AspectUnit {
  std::string source_id;
  std::vector<Token> tokens;  // re-indexed 1..k; external heads marked 0
  int aspect_head = 0;        // 1-based index within the unit
  int top = 0;                // syntactic top of the unit, 1-based
  std::string aspect_form;
  Polarity polarity = Polarity::Neutral;
  Tensor embedding;

  std::vector<std::string> forms() const {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.form);
    return out;
  }
};

// Minimal dependency subtree covering aspect head and opinion tokens,
// plus determiners hanging off it.
inline std::vector<AspectUnit> build_aspect_units(
    const std::vector<AbsaInstance>& corpus, const Embedder& embedder) {
  std::vector<AspectUnit> units;
  for (const auto& inst : corpus) {
    for (const auto& link : locate_opinions(inst)) {
      int ah = aspect_head_index(inst);
      auto ancestors = [&](int idx) {
        std::vector<int> path;
        for (int cur = idx; cur != 0; cur = inst.tree.at(cur).head)
          path.push_back(cur);
        return path;
      };
      std::set<int> keep;
      auto a_path = ancestors(ah);
      for (int o : link.opinion) {
        auto o_path = ancestors(o);
        // lowest common ancestor, then the two path prefixes up to it
        std::set<int> o_set(o_path.begin(), o_path.end());
        int lca = 0;
        for (int x : a_path)
          if (o_set.count(x)) {
            lca = x;
            break;
          }
        for (int x : a_path) {
          keep.insert(x);
          if (x == lca) break;
        }
        for (int x : o_path) {
          keep.insert(x);
          if (x == lca) break;
        }
      }
      for (int i = inst.aspect.start; i < inst.aspect.end; ++i) keep.insert(i);
      std::set<int> dets;
      for (const auto& t : inst.tree.tokens)
        if (t.deprel == "det" && keep.count(t.head)) dets.insert(t.index);
      keep.insert(dets.begin(), dets.end());

      AspectUnit u;
      u.source_id = inst.id;
      u.polarity = inst.label;
      std::map<int, int> remap;
      int next = 1;
      for (int idx : keep) remap[idx] = next++;
      for (int idx : keep) {
        Token t = inst.tree.at(idx);
        t.index = remap[idx];
        t.head = keep.count(t.head) ? remap[t.head] : 0;
        if (t.head == 0) u.top = t.index;
        u.tokens.push_back(std::move(t));
      }
      u.aspect_head = remap[ah];
      for (int i = inst.aspect.start; i < inst.aspect.end; ++i) {
        if (i > inst.aspect.start) u.aspect_form += " ";
        u.aspect_form += inst.tree.at(i).form;
      }
      u.embedding = embedder(u.forms());
      units.push_back(std::move(u));
    }
  }
  return units;
}

// phi = (1 + cosine) / 2 in [0,1]
inline double aspect_similarity(const AspectUnit& u, const AspectUnit& v) {
  if (!u.embedding.same_shape(v.embedding))
    throw StructuralError("aspect unit embedding dimension mismatch");
  double nu = norm(u.embedding), nv = norm(v.embedding);
  if (nu == 0 || nv == 0)
    throw NumericError("aspect similarity of zero embedding");
  return (1.0 + dot(u.embedding, v.embedding) / (nu * nv)) / 2.0;
}

struct AspectAdditionOptions {
  int samples_per_target = 2;
};

namespace augment_detail {

// Graft a unit onto the sentence root as a coordinated clause:
// ", and <unit>" with a conj arc.
inline void graft_unit(DepTree& tree, const AspectUnit& unit) {
  int root = tree.root();
  int base = tree.size();

  Token comma;
  comma.index = base + 1;
  comma.form = ",";
  comma.lemma = ",";
  comma.upos = "PUNCT";
  comma.head = root;
  comma.deprel = "punct";
  tree.tokens.push_back(std::move(comma));

  int unit_top_new = base + 2 + unit.top;  // after "and"
  Token conj;
  conj.index = base + 2;
  conj.form = "and";
  conj.lemma = "and";
  conj.upos = "CCONJ";
  conj.head = unit_top_new;
  conj.deprel = "cc";
  tree.tokens.push_back(std::move(conj));

  for (const auto& ut : unit.tokens) {
    Token t = ut;
    t.index = base + 2 + ut.index;
    if (ut.head == 0) {
      if (ut.index == unit.top) {
        t.head = root;
        t.deprel = "conj";
      } else {
        t.head = unit_top_new;
        t.deprel = "dep";
      }
    } else {
      t.head = base + 2 + ut.head;
    }
    tree.tokens.push_back(std::move(t));
  }
}

}  // namespace augment_detail

inline std::vector<SyntheticSample> gen_aspect_addition(
    const AbsaInstance& inst, const std::vector<AspectUnit>& units, int top_j,
    double theta_m, const AspectAdditionOptions& opts = {}) {
  if (top_j < 1) throw StructuralError("J must be >= 1");
  if (units.empty()) throw StructuralError("unit pool is empty");

  const AspectUnit* target = nullptr;
  for (const auto& u : units)
    if (u.source_id == inst.id) {
      target = &u;
      break;
    }
  if (!target) return {};

  std::string target_form = target->aspect_form;
  struct Scored {
    const AspectUnit* unit;
    double phi;
    size_t ord;
  };
  std::vector<Scored> ranked;
  for (size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    if (u.source_id == inst.id || u.aspect_form == target_form) continue;
    ranked.push_back({&u, aspect_similarity(*target, u), i});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
    if (a.phi != b.phi) return a.phi > b.phi;
    return a.ord < b.ord;
  });
  if (static_cast<int>(ranked.size()) < top_j) return {};

  std::vector<SyntheticSample> out;
  for (int s = 0; s < opts.samples_per_target; ++s) {
    if (s + top_j > static_cast<int>(ranked.size())) break;
    std::vector<const Scored*> chosen;
    for (int j = 0; j < top_j; ++j) chosen.push_back(&ranked[s + j]);
    if (top_j >= 2) {
      // added units must not share one uniform polarity
      auto uniform = [&] {
        for (const auto* c : chosen)
          if (c->unit->polarity != chosen[0]->unit->polarity) return false;
        return true;
      };
      if (uniform()) {
        bool fixed = false;
        for (size_t k = s + top_j; k < ranked.size(); ++k)
          if (ranked[k].unit->polarity != chosen[0]->unit->polarity) {
            chosen.back() = &ranked[k];
            fixed = true;
            break;
          }
        if (!fixed) continue;
      }
    }
    double p_m = 0;
    for (const auto* c : chosen) p_m += c->phi;
    p_m /= top_j;
    if (!(p_m > theta_m)) continue;  // strict

    SyntheticSample sample;
    sample.id = inst.id + "#m" + std::to_string(s);
    sample.source_id = inst.id;
    sample.kind = SynthKind::AspectAddition;
    sample.tree = inst.tree;
    sample.aspect = inst.aspect;
    sample.label = inst.label;
    sample.confidence = p_m;
    sample.needs_reparse = false;
    for (const auto* c : chosen) {
      augment_detail::graft_unit(sample.tree, *c->unit);
      sample.unit_scores.push_back(c->phi);
    }
    sample.tree.validate(sample.id);
    out.push_back(std::move(sample));
  }
  return out;
}

// ---- synthetic corpus serialization ----
// <stem>.conllu holds the trees; <stem>.instances holds one record per
// sample:
// id \t idx \t start \t end \t polarity \t kind \t confidence \t source \t reparse

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void save_synthetic(const std::vector<SyntheticSample>& samples,
                           const std::string& stem) {
  std::vector<DepTree> trees;
  trees.reserve(samples.size());
  for (const auto& s : samples) trees.push_back(s.tree);
  save_conllu(trees, stem + ".conllu");
  std::ofstream out(stem + ".instances");
  if (!out) throw ConfigError("cannot write: " + stem + ".instances");
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out << s.id << '\t' << i << '\t' << s.aspect.start << '\t' << s.aspect.end
        << '\t' << to_string(s.label) << '\t' << to_string(s.kind) << '\t'
        << format_double(s.confidence) << '\t' << s.source_id << '\t'
        << (s.needs_reparse ? 1 : 0) << '\n';
  }
}

inline std::vector<SyntheticSample> load_synthetic(const std::string& stem) {
  auto trees = load_conllu(stem + ".conllu");
  std::ifstream in(stem + ".instances");
  if (!in) throw ConfigError("cannot open: " + stem + ".instances");
  std::vector<SyntheticSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 9)
      throw ParseError("synthetic record line " + std::to_string(lineno) +
                       ": expected 9 columns");
    SyntheticSample s;
    s.id = cols[0];
    size_t idx = std::stoul(cols[1]);
    if (idx >= trees.size())
      throw ParseError("synthetic record line " + std::to_string(lineno) +
                       ": tree index out of range");
    s.tree = trees[idx];
    s.aspect.start = std::stoi(cols[2]);
    s.aspect.end = std::stoi(cols[3]);
    s.label = polarity_from_string(cols[4]);
    s.kind = synth_kind_from_string(cols[5]);
    s.confidence = std::stod(cols[6]);
    s.source_id = cols[7];
    s.needs_reparse = cols[8] == "1";
    s.aspect.validate(s.tree.size());
    out.push_back(std::move(s));
  }
  return out;
}

// Canonical output order: source id, kind, then candidate rank (= id).
inline void sort_synthetic(std::vector<SyntheticSample>& samples) {
  std::sort(samples.begin(), samples.end(),
            [](const SyntheticSample& a, const SyntheticSample& b) {
              if (a.source_id != b.source_id) return a.source_id < b.source_id;
              if (a.kind != b.kind)
                return static_cast<int>(a.kind) < static_cast<int>(b.kind);
              return a.id < b.id;
            });
}

}  // namespace absa
