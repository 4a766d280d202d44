#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "absa/augment.hpp"
#include "absa/corpus.hpp"
#include "absa/model.hpp"
#include "absa/optim.hpp"
#include "absa/tape.hpp"

namespace absa {

enum class Regime { E, A, EC, AC };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::E: return "e";
    case Regime::A: return "a";
    case Regime::EC: return "e+c";
    case Regime::AC: return "a+c";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "e") return Regime::E;
  if (s == "a") return Regime::A;
  if (s == "e+c" || s == "ec") return Regime::EC;
  if (s == "a+c" || s == "ac") return Regime::AC;
  throw ConfigError("unknown regime: " + s);
}

inline bool regime_adversarial(Regime r) {
  return r == Regime::A || r == Regime::AC;
}
inline bool regime_contrastive(Regime r) {
  return r == Regime::EC || r == Regime::AC;
}

struct TrainConfig {
  Regime regime = Regime::E;
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 10;
  double lr = 1e-4;
  double weight_decay = 5e-5;
  double lambda_a = 0.6;
  // c1 = ita#o, c2 = ita#s, c3 = itr#o, c4 = itr#s
  std::array<double, 4> lambda_c = {0.3, 0.2, 0.3, 0.2};
  double mu = 0.1;
  uint64_t seed = 42;
  bool share_weights = true;
  int max_positives = 2;
  int max_negatives = 4;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (mu <= 0) throw ConfigError("temperature mu must be > 0");
    if (lambda_a < 0) throw ConfigError("lambda_a must be >= 0");
    for (double l : lambda_c)
      if (l < 0) throw ConfigError("lambda_c weights must be >= 0");
  }
};

// ---- building blocks (also exercised directly by tests) ----

// v = [a; b; a - b; a (.) b]
inline Tape::NodeId matcher_features(Tape& tape, Tape::NodeId a,
                                     Tape::NodeId b) {
  if (!tape.value(a).same_shape(tape.value(b)))
    throw StructuralError("matcher inputs must share dimensions");
  return tape.concat({a, b, tape.sub(a, b), tape.mul(a, b)});
}

inline void ensure_discriminator(ParamStore& store, int d_v,
                                 uint64_t seed = 7) {
  if (store.contains("disc.w")) return;
  Rng rng(seed);
  double radius = std::sqrt(6.0 / (d_v + 3));
  store.create("disc.w", Tensor::uniform({d_v, 3}, radius, rng));
  store.create("disc.b", Tensor::zeros({3}));
}

inline Tape::NodeId discriminator_logits(Tape& tape, Bound& p,
                                         Tape::NodeId v) {
  int d = tape.value(v).shape[0];
  return tape.reshape(
      tape.bias_add(tape.matmul(tape.reshape(v, {1, d}), p("disc.w")),
                    p("disc.b")),
      {3});
}

// Eq.-as-printed log-ratio contrastive loss:
//   L = sum_j [ logsumexp_k(neg_k / mu) - pos_j / mu ]
// May be negative; not a normalized InfoNCE.
inline Tape::NodeId contrastive_loss(Tape& tape,
                                     const std::vector<Tape::NodeId>& pos_sims,
                                     const std::vector<Tape::NodeId>& neg_sims,
                                     double mu) {
  if (pos_sims.empty() || neg_sims.empty())
    throw StructuralError("contrastive loss needs >=1 positive and negative");
  Tape::NodeId negs = tape.scale(tape.concat(neg_sims), 1.0 / mu);
  Tape::NodeId lse = tape.logsumexp(negs);
  Tape::NodeId pos = tape.sum(tape.scale(tape.concat(pos_sims), 1.0 / mu));
  return tape.sub(tape.scale(lse, static_cast<double>(pos_sims.size())), pos);
}

// ---- corpora pairing ----

struct PairedSample {
  const AbsaInstance* raw;
  const SyntheticSample* synth;
};

inline std::vector<PairedSample> pair_synthetic(
    const std::vector<AbsaInstance>& raw,
    const std::vector<SyntheticSample>& synth) {
  std::map<std::string, const AbsaInstance*> by_id;
  for (const auto& r : raw) by_id[r.id] = &r;
  std::vector<PairedSample> out;
  for (const auto& s : synth) {
    auto it = by_id.find(s.source_id);
    if (it == by_id.end())
      throw StructuralError("synthetic sample " + s.id +
                            " has unresolved source " + s.source_id);
    out.push_back({it->second, &s});
  }
  return out;
}

// ---- training ----

struct TrainLogEntry {
  int epoch = 0;
  double loss_e = 0, loss_a = 0, loss_c = 0;
  double dev_acc = 0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  double best_dev_acc = 0;
  int best_epoch = -1;
  int skipped_anchors = 0;  // anchors lacking contrastive pairs
};

inline double accuracy(const Model& model,
                       const std::vector<AbsaInstance>& corpus) {
  if (corpus.empty()) return 0.0;
  int correct = 0;
  for (const auto& inst : corpus)
    if (model.predict(inst).predicted == inst.label) ++correct;
  return static_cast<double>(correct) / corpus.size();
}

// Held-out probe: fraction of pairs whose synthetic kind the
// discriminator identifies (no reversal, eval mode).
inline double discriminator_accuracy(Model& model_o, Model& model_s,
                                     const std::vector<PairedSample>& pairs) {
  if (pairs.empty()) return 0.0;
  int correct = 0;
  for (const auto& pr : pairs) {
    Tape tape;
    Bound bo(model_o.params(), tape), bs(model_s.params(), tape);
    auto fo = model_o.forward(tape, bo, *pr.raw, false);
    auto fs = model_s.forward(tape, bs, pr.synth->as_instance(), false);
    Tape::NodeId v = matcher_features(tape, fo.r_adv, fs.r_adv);
    Bound bd(model_o.params(), tape);
    Tape::NodeId logits = discriminator_logits(tape, bd, v);
    const Tensor& l = tape.value(logits);
    int arg = 0;
    for (int i = 1; i < 3; ++i)
      if (l(i) > l(arg)) arg = i;
    if (arg == static_cast<int>(pr.synth->kind)) ++correct;
  }
  return static_cast<double>(correct) / pairs.size();
}

class Trainer {
 public:
  // model_s may equal model_o (shared weights).
  Trainer(TrainConfig cfg, Model& model_o, Model& model_s)
      : cfg_(cfg),
        model_o_(model_o),
        model_s_(model_s),
        adam_o_({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}),
        adam_s_({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}) {
    cfg_.validate();
  }

  struct Item {
    const AbsaInstance* raw = nullptr;
    const PairedSample* pair = nullptr;
  };

  // One epoch's worth of material; owns backing storage for items.
  struct Prepared {
    std::vector<PairedSample> pairs;
    std::map<std::string, std::vector<const SyntheticSample*>> da_pool,
        dm_pool;
    std::vector<AbsaInstance> synth_as_instances;
    std::vector<Item> items;
  };

  Prepared prepare(const std::vector<AbsaInstance>& raw,
                   const std::vector<SyntheticSample>& synth) {
    if (raw.empty()) throw ConfigError("raw corpus is empty");
    bool adversarial = regime_adversarial(cfg_.regime);
    if (adversarial && synth.empty())
      throw ConfigError("regime " + std::string(to_string(cfg_.regime)) +
                        " requires a synthetic corpus");
    Prepared prep;
    if (!synth.empty()) prep.pairs = pair_synthetic(raw, synth);
    if (adversarial)
      ensure_discriminator(model_o_.params(), 4 * model_o_.config().d_adv());

    // contrastive pools grouped by source id
    for (const auto& s : synth) {
      if (s.kind == SynthKind::SentimentMod)
        prep.da_pool[s.source_id].push_back(&s);
      if (s.kind == SynthKind::AspectAddition)
        prep.dm_pool[s.source_id].push_back(&s);
    }

    // epoch item list: every raw instance once; when adversarial, every
    // synthetic sample as a paired item, otherwise as a plain instance
    for (const auto& r : raw) prep.items.push_back({&r, nullptr});
    if (adversarial) {
      for (const auto& pr : prep.pairs) prep.items.push_back({nullptr, &pr});
    } else {
      prep.synth_as_instances.reserve(synth.size());
      for (const auto& s : synth)
        prep.synth_as_instances.push_back(s.as_instance());
      for (const auto& si : prep.synth_as_instances)
        prep.items.push_back({&si, nullptr});
    }
    return prep;
  }

  // Loss components and parameter gradients of one deterministic batch
  // over the whole corpus, without an optimizer step. Used by the
  // finite-difference harness.
  struct Probe {
    double ce = 0, type = 0, contrast = 0;
    std::array<double, 4> c_scheme{0, 0, 0, 0};  // unweighted, per scheme
    std::map<std::string, Tensor> grads_o, grads_s;
  };

  Probe probe_batch(const std::vector<AbsaInstance>& raw,
                    const std::vector<SyntheticSample>& synth) {
    Prepared prep = prepare(raw, synth);
    std::vector<size_t> order(prep.items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Probe probe;
    probe_sink_ = &probe;
    int skipped = 0;
    train_batch(prep.items, order, 0, order.size(), prep.da_pool, prep.dm_pool,
                /*epoch=*/0, /*step=*/0, regime_contrastive(cfg_.regime),
                regime_adversarial(cfg_.regime), skipped);
    probe_sink_ = nullptr;
    return probe;
  }

  TrainResult run(const std::vector<AbsaInstance>& raw,
                  const std::vector<SyntheticSample>& synth,
                  const std::vector<AbsaInstance>& dev) {
    bool contrastive = regime_contrastive(cfg_.regime);
    bool adversarial = regime_adversarial(cfg_.regime);
    Prepared prep = prepare(raw, synth);
    const auto& items = prep.items;
    const auto& da_pool = prep.da_pool;
    const auto& dm_pool = prep.dm_pool;

    TrainResult result;
    std::optional<ParamStore> best_o, best_s;
    int since_best = 0;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
      Rng shuffle_rng(mix(cfg_.seed, static_cast<uint64_t>(epoch), 0xe0));
      std::vector<size_t> order(items.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle_rng.shuffle(order);

      double sum_e = 0, sum_a = 0, sum_c = 0;
      int batches = 0;
      for (size_t start = 0; start < order.size();
           start += cfg_.batch_size) {
        size_t stop = std::min(order.size(),
                               start + static_cast<size_t>(cfg_.batch_size));
        auto comp = train_batch(items, order, start, stop, da_pool, dm_pool,
                                epoch, step++, contrastive, adversarial,
                                result.skipped_anchors);
        sum_e += comp.loss_e;
        sum_a += comp.loss_a;
        sum_c += comp.loss_c;
        ++batches;
      }

      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.loss_e = sum_e / std::max(1, batches);
      entry.loss_a = sum_a / std::max(1, batches);
      entry.loss_c = sum_c / std::max(1, batches);
      entry.dev_acc = dev.empty() ? accuracy(model_o_, raw)
                                  : accuracy(model_o_, dev);
      result.log.push_back(entry);

      if (entry.dev_acc > result.best_dev_acc || result.best_epoch < 0) {
        result.best_dev_acc = entry.dev_acc;
        result.best_epoch = epoch;
        best_o = model_o_.params();
        if (!shared()) best_s = model_s_.params();
        since_best = 0;
      } else if (++since_best >= cfg_.patience) {
        break;
      }
    }
    if (best_o) model_o_.params() = *best_o;
    if (best_s) model_s_.params() = *best_s;
    return result;
  }

 private:
  bool shared() const { return &model_o_ == &model_s_; }

  struct BatchComponents {
    double loss_e = 0, loss_a = 0, loss_c = 0;
  };

  template <typename Items, typename Pool>
  BatchComponents train_batch(const Items& items,
                              const std::vector<size_t>& order, size_t start,
                              size_t stop, const Pool& da_pool,
                              const Pool& dm_pool, int epoch, int64_t step,
                              bool contrastive, bool adversarial,
                              int& skipped_anchors) {
    Tape tape(cfg_.seed, step);
    Bound bo(model_o_.params(), tape);
    Bound bs(shared() ? model_o_.params() : model_s_.params(), tape);
    Bound& bs_use = shared() ? bo : bs;

    std::vector<Tape::NodeId> ce_terms;      // L_e / L_a2
    std::vector<Tape::NodeId> type_terms;    // discriminator CE (reversed)
    std::vector<Tape::NodeId> c_terms[4];    // per contrastive scheme
    int n_items = 0, n_anchors = 0;

    // cache forwards of raw anchors for contrastive reuse
    std::map<const AbsaInstance*, Model::Forward> fwd_cache;
    auto forward_o = [&](const AbsaInstance& inst) -> Model::Forward& {
      auto it = fwd_cache.find(&inst);
      if (it == fwd_cache.end())
        it = fwd_cache
                 .emplace(&inst, model_o_.forward(tape, bo, inst, true))
                 .first;
      return it->second;
    };

    for (size_t k = start; k < stop; ++k) {
      const auto& item = items[order[k]];
      ++n_items;
      if (item.pair == nullptr) {
        auto& f = forward_o(*item.raw);
        ce_terms.push_back(
            tape.cross_entropy(f.logits, static_cast<int>(item.raw->label)));
        if (contrastive)
          add_contrastive(tape, bo, *item.raw, f, da_pool, dm_pool, epoch,
                          c_terms, n_anchors, skipped_anchors);
      } else {
        const auto& pr = *item.pair;
        auto& fo = forward_o(*pr.raw);
        AbsaInstance si = pr.synth->as_instance();
        auto fs = model_s_.forward(tape, bs_use, si, true);
        ce_terms.push_back(
            tape.cross_entropy(fo.logits, static_cast<int>(pr.raw->label)));
        ce_terms.push_back(
            tape.cross_entropy(fs.logits, static_cast<int>(pr.synth->label)));
        // min-max boundary: D minimizes the type loss, the encoders see
        // -lambda_a times its gradient
        Tape::NodeId v = matcher_features(tape, fo.r_adv, fs.r_adv);
        Tape::NodeId vr = tape.grad_reverse(v, cfg_.lambda_a);
        Tape::NodeId logits = discriminator_logits(tape, bo, vr);
        type_terms.push_back(
            tape.cross_entropy(logits, static_cast<int>(pr.synth->kind)));
        if (contrastive)
          add_contrastive(tape, bo, *pr.raw, fo, da_pool, dm_pool, epoch,
                          c_terms, n_anchors, skipped_anchors);
      }
    }

    if (n_items == 0) return {};
    double inv_n = 1.0 / n_items;
    std::vector<Tape::NodeId> total_terms;
    Tape::NodeId ce_total = tape.scale(tape.sum(tape.concat(ce_terms)), inv_n);
    total_terms.push_back(ce_total);
    Tape::NodeId type_total = -1;
    if (!type_terms.empty()) {
      type_total = tape.scale(tape.sum(tape.concat(type_terms)), inv_n);
      total_terms.push_back(type_total);
    }
    double c_values[4] = {0, 0, 0, 0};
    Tape::NodeId c_total = -1;
    {
      std::vector<Tape::NodeId> weighted;
      for (int s = 0; s < 4; ++s) {
        if (c_terms[s].empty()) continue;
        Tape::NodeId scheme =
            tape.scale(tape.sum(tape.concat(c_terms[s])), inv_n);
        c_values[s] = tape.value(scheme)(0);
        weighted.push_back(tape.scale(scheme, cfg_.lambda_c[s]));
      }
      if (!weighted.empty()) {
        c_total = tape.sum(tape.concat(weighted));
        total_terms.push_back(c_total);
      }
    }
    Tape::NodeId total = tape.sum(tape.concat(total_terms));
    tape.backward(total);

    if (probe_sink_ != nullptr) {
      probe_sink_->ce = tape.value(ce_total)(0);
      probe_sink_->type = type_total >= 0 ? tape.value(type_total)(0) : 0.0;
      probe_sink_->contrast = c_total >= 0 ? tape.value(c_total)(0) : 0.0;
      for (int s = 0; s < 4; ++s) probe_sink_->c_scheme[s] = c_values[s];
      probe_sink_->grads_o = bo.grads();
      if (!shared()) probe_sink_->grads_s = bs.grads();
    } else {
      auto go = bo.grads();
      adam_o_.step(model_o_.params(), go);
      if (!shared()) {
        auto gs = bs.grads();
        adam_s_.step(model_s_.params(), gs);
      }
    }

    BatchComponents comp;
    comp.loss_e = tape.value(ce_total)(0);
    // reported adversarial component follows the printed objective,
    // lambda_a * L_a1 + L_a2
    comp.loss_a = type_total >= 0
                      ? cfg_.lambda_a * tape.value(type_total)(0) + comp.loss_e
                      : 0.0;
    comp.loss_c = c_total >= 0 ? tape.value(c_total)(0) : 0.0;
    return comp;
  }

  template <typename Pool>
  void add_contrastive(Tape& tape, Bound& bo, const AbsaInstance& anchor,
                       const Model::Forward& fa, const Pool& da_pool,
                       const Pool& dm_pool, int epoch,
                       std::vector<Tape::NodeId> (&c_terms)[4],
                       int& n_anchors, int& skipped_anchors) {
    auto da_it = da_pool.find(anchor.id);
    auto dm_it = dm_pool.find(anchor.id);
    std::vector<const SyntheticSample*> pos, neg_intra, neg_inter;
    if (da_it != da_pool.end())
      for (const auto* s : da_it->second)
        (s->label == anchor.label ? pos : neg_intra).push_back(s);
    if (dm_it != dm_pool.end())
      for (const auto* s : dm_it->second) neg_inter.push_back(s);

    Rng rng(mix(cfg_.seed, static_cast<uint64_t>(epoch),
                hash_string(anchor.id)));
    auto cap = [&](std::vector<const SyntheticSample*>& v, int limit) {
      rng.shuffle(v);
      if (static_cast<int>(v.size()) > limit) v.resize(limit);
    };
    cap(pos, cfg_.max_positives);
    cap(neg_intra, cfg_.max_negatives);
    cap(neg_inter, cfg_.max_negatives);

    if (pos.empty() || (neg_intra.empty() && neg_inter.empty())) {
      ++skipped_anchors;
      return;
    }
    ++n_anchors;

    // contrastive passes run through Omega^o's bindings
    auto sims = [&](const std::vector<const SyntheticSample*>& set,
                    bool use_rs, Tape::NodeId anchor_rep) {
      std::vector<Tape::NodeId> out;
      for (const auto* s : set) {
        AbsaInstance si = s->as_instance();
        auto f = model_o_.forward(tape, bo, si, true);
        out.push_back(
            tape.cosine(use_rs ? f.r_s : f.r_f, anchor_rep));
      }
      return out;
    };
    // scheme order: ita#o, ita#s, itr#o, itr#s
    if (!neg_intra.empty()) {
      c_terms[0].push_back(contrastive_loss(
          tape, sims(pos, false, fa.r_f), sims(neg_intra, false, fa.r_f),
          cfg_.mu));
      c_terms[1].push_back(contrastive_loss(
          tape, sims(pos, true, fa.r_s), sims(neg_intra, true, fa.r_s),
          cfg_.mu));
    }
    if (!neg_inter.empty()) {
      c_terms[2].push_back(contrastive_loss(
          tape, sims(pos, false, fa.r_f), sims(neg_inter, false, fa.r_f),
          cfg_.mu));
      c_terms[3].push_back(contrastive_loss(
          tape, sims(pos, true, fa.r_s), sims(neg_inter, true, fa.r_s),
          cfg_.mu));
    }
  }

  TrainConfig cfg_;
  Model& model_o_;
  Model& model_s_;
  Adam adam_o_, adam_s_;
  Probe* probe_sink_ = nullptr;
};

inline TrainResult train(const TrainConfig& cfg, Model& model_o,
                         Model* model_s,
                         const std::vector<AbsaInstance>& raw,
                         const std::vector<SyntheticSample>& synth,
                         const std::vector<AbsaInstance>& dev) {
  Model& s = (cfg.share_weights || model_s == nullptr) ? model_o : *model_s;
  Trainer trainer(cfg, model_o, s);
  return trainer.run(raw, synth, dev);
}

}  // namespace absa
