#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "absa/model.hpp"
#include "absa/tape.hpp"
#include "absa/training.hpp"

namespace absa {

struct GradCheckRow {
  std::string name;
  double max_err = 0;
  double tolerance = 0;
  bool pass() const { return max_err < tolerance; }
};

namespace gradcheck_detail {

// Scalar error measure: absolute for small gradients, relative for large.
inline double grad_error(double analytic, double fd) {
  double denom = std::max({1.0, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / denom;
}

// Builder maps leaf node ids (one per input tensor) to a scalar loss node.
using LossBuilder =
    std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

// Central finite differences of every input element against the analytic
// gradient. grad_scale covers ops whose backward intentionally rescales
// the true derivative (gradient reversal).
inline double check_builder(std::vector<Tensor> inputs,
                            const LossBuilder& build, double grad_scale = 1.0,
                            double h = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& ins, bool want_grads,
                  std::vector<Tensor>* grads) {
    Tape tape(/*seed=*/9, /*step=*/0);
    std::vector<Tape::NodeId> leaves;
    for (const auto& t : ins) leaves.push_back(tape.leaf(t, true));
    Tape::NodeId loss = build(tape, leaves);
    double v = tape.value(loss)(0);
    if (want_grads) {
      tape.backward(loss);
      grads->clear();
      for (auto id : leaves) grads->push_back(tape.grad(id));
    }
    return v;
  };

  std::vector<Tensor> analytic;
  eval(inputs, true, &analytic);

  double worst = 0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    for (int64_t i = 0; i < inputs[t].size(); ++i) {
      double keep = inputs[t].data[i];
      inputs[t].data[i] = keep + h;
      double up = eval(inputs, false, nullptr);
      inputs[t].data[i] = keep - h;
      double dn = eval(inputs, false, nullptr);
      inputs[t].data[i] = keep;
      double fd = grad_scale * (up - dn) / (2 * h);
      worst = std::max(worst, grad_error(analytic[t].data[i], fd));
    }
  }
  return worst;
}

inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo,
                          double hi) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = lo + (hi - lo) * rng.next_double();
  return t;
}

// Values bounded away from zero, for kinked or scale-sensitive ops.
inline Tensor rand_offzero(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) {
    double m = 0.2 + rng.next_double();
    v = rng.next_double() < 0.5 ? -m : m;
  }
  return t;
}

// Reduce an arbitrary-shape node to a scalar through a fixed random probe,
// exercising the full Jacobian.
inline Tape::NodeId scalarize(Tape& tape, Tape::NodeId node, Rng& rng) {
  const Tensor& v = tape.value(node);
  int64_t sz = v.size();
  Tensor probe = Tensor::zeros({static_cast<int>(sz)});
  for (auto& p : probe.data) p = 0.5 + rng.next_double();
  Tape::NodeId flat = tape.reshape(node, {static_cast<int>(sz)});
  return tape.sum(tape.mul(flat, tape.leaf(probe)));
}

}  // namespace gradcheck_detail

// Finite-difference rows for every tape op, aggregated over n_seeds random
// input draws.
inline std::vector<GradCheckRow> run_op_gradchecks(int n_seeds = 100,
                                                   uint64_t base_seed = 123,
                                                   double tolerance = 1e-4) {
  using namespace gradcheck_detail;
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, double err) {
    auto [it, fresh] = worst.emplace(name, err);
    if (!fresh) it->second = std::max(it->second, err);
  };

  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(mix(base_seed, static_cast<uint64_t>(s)));
    uint64_t probe_seed = rng.next();
    auto with_probe = [probe_seed](auto fn) {
      return [probe_seed, fn](Tape& tape,
                              const std::vector<Tape::NodeId>& in) {
        Rng prng(probe_seed);
        return scalarize(tape, fn(tape, in), prng);
      };
    };

    record("add", check_builder(
                      {rand_tensor({5}, rng, -1, 1), rand_tensor({5}, rng, -1, 1)},
                      with_probe([](Tape& t, const auto& in) {
                        return t.add(in[0], in[1]);
                      })));
    record("sub", check_builder(
                      {rand_tensor({5}, rng, -1, 1), rand_tensor({5}, rng, -1, 1)},
                      with_probe([](Tape& t, const auto& in) {
                        return t.sub(in[0], in[1]);
                      })));
    record("mul", check_builder(
                      {rand_tensor({5}, rng, -1, 1), rand_tensor({5}, rng, -1, 1)},
                      with_probe([](Tape& t, const auto& in) {
                        return t.mul(in[0], in[1]);
                      })));
    record("scale", check_builder({rand_tensor({6}, rng, -1, 1)},
                                  with_probe([](Tape& t, const auto& in) {
                                    return t.scale(in[0], 1.7);
                                  })));
    record("relu", check_builder({rand_offzero({6}, rng)},
                                 with_probe([](Tape& t, const auto& in) {
                                   return t.relu(in[0]);
                                 })));
    record("tanh", check_builder({rand_tensor({6}, rng, -2, 2)},
                                 with_probe([](Tape& t, const auto& in) {
                                   return t.tanh_(in[0]);
                                 })));
    record("matmul",
           check_builder({rand_tensor({3, 4}, rng, -1, 1),
                          rand_tensor({4, 2}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.matmul(in[0], in[1]);
                         })));
    record("matmul_nt",
           check_builder({rand_tensor({3, 4}, rng, -1, 1),
                          rand_tensor({2, 4}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.matmul_nt(in[0], in[1]);
                         })));
    record("bias_add",
           check_builder({rand_tensor({3, 4}, rng, -1, 1),
                          rand_tensor({4}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.bias_add(in[0], in[1]);
                         })));
    record("reshape", check_builder({rand_tensor({12}, rng, -1, 1)},
                                    with_probe([](Tape& t, const auto& in) {
                                      return t.reshape(in[0], {3, 4});
                                    })));
    record("concat",
           check_builder({rand_tensor({3}, rng, -1, 1),
                          rand_tensor({4}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.concat({in[0], in[1]});
                         })));
    record("concat_cols",
           check_builder({rand_tensor({3, 2}, rng, -1, 1),
                          rand_tensor({3, 3}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.concat_cols({in[0], in[1]});
                         })));
    record("slice", check_builder({rand_tensor({8}, rng, -1, 1)},
                                  with_probe([](Tape& t, const auto& in) {
                                    return t.slice(in[0], 2, 3);
                                  })));
    record("gather_rows",
           check_builder({rand_tensor({5, 3}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.gather_rows(in[0], {0, 2, 2, 4});
                         })));
    record("tile_rows", check_builder({rand_tensor({4}, rng, -1, 1)},
                                      with_probe([](Tape& t, const auto& in) {
                                        return t.tile_rows(in[0], 3);
                                      })));
    record("sum",
           check_builder({rand_tensor({7}, rng, -1, 1)},
                         [](Tape& t, const auto& in) { return t.sum(in[0]); }));
    record("mean_rows", check_builder({rand_tensor({3, 4}, rng, -1, 1)},
                                      with_probe([](Tape& t, const auto& in) {
                                        return t.mean_rows(in[0]);
                                      })));
    {
      Tensor mask = Tensor::zeros({3, 4});
      for (int i = 0; i < 3; ++i) {
        mask(i, static_cast<int>(rng.next_below(4))) = 1.0;
        for (int j = 0; j < 4; ++j)
          if (rng.next_double() < 0.5) mask(i, j) = 1.0;
      }
      record("masked_softmax",
             check_builder({rand_tensor({3, 4}, rng, -2, 2)},
                           with_probe([mask](Tape& t, const auto& in) {
                             return t.masked_softmax(in[0], mask);
                           })));
    }
    record("layer_norm",
           check_builder({rand_tensor({3, 4}, rng, -1, 1),
                          rand_tensor({4}, rng, 0.5, 1.5),
                          rand_tensor({4}, rng, -0.5, 0.5)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.layer_norm(in[0], in[1], in[2]);
                         })));
    record("dropout", check_builder({rand_tensor({10}, rng, -1, 1)},
                                    with_probe([](Tape& t, const auto& in) {
                                      return t.dropout(in[0], 0.4, true);
                                    })));
    record("cross_entropy",
           check_builder({rand_tensor({5}, rng, -2, 2)},
                         [gold = static_cast<int>(rng.next_below(5))](
                             Tape& t, const auto& in) {
                           return t.cross_entropy(in[0], gold);
                         }));
    record("logsumexp", check_builder({rand_tensor({6}, rng, -2, 2)},
                                      [](Tape& t, const auto& in) {
                                        return t.logsumexp(in[0]);
                                      }));
    record("cosine", check_builder({rand_offzero({5}, rng),
                                    rand_offzero({5}, rng)},
                                   [](Tape& t, const auto& in) {
                                     return t.cosine(in[0], in[1]);
                                   }));
    // forward is the identity, backward multiplies by -lambda
    record("grad_reverse",
           check_builder({rand_tensor({5}, rng, -1, 1)},
                         with_probe([](Tape& t, const auto& in) {
                           return t.grad_reverse(in[0], 0.6);
                         }),
                         /*grad_scale=*/-0.6));
  }

  std::vector<GradCheckRow> rows;
  for (const auto& [name, err] : worst) rows.push_back({name, err, tolerance});
  return rows;
}

// ---- tiny self-contained fixture for end-to-end checks ----

struct GradCheckFixture {
  Vocab vocab;
  LabelInventory labels;
  std::vector<AbsaInstance> raw;
  std::vector<SyntheticSample> synth;
};

namespace gradcheck_detail {

inline DepTree make_tree(
    const std::vector<std::tuple<std::string, int, std::string>>& spec) {
  DepTree tree;
  int idx = 0;
  for (const auto& [form, head, rel] : spec) {
    Token t;
    t.index = ++idx;
    t.form = form;
    t.lemma = form;
    t.upos = "X";
    t.head = head;
    t.deprel = rel;
    tree.tokens.push_back(std::move(t));
  }
  tree.validate();
  return tree;
}

}  // namespace gradcheck_detail

inline GradCheckFixture make_gradcheck_fixture() {
  using gradcheck_detail::make_tree;
  GradCheckFixture fx;
  fx.labels = LabelInventory(
      {"root", "det", "nsubj", "cop", "amod", "punct", "conj", "cc", "dep"});

  AbsaInstance a;
  a.id = "g1";
  a.tree = make_tree({{"the", 2, "det"},
                      {"food", 4, "nsubj"},
                      {"was", 4, "cop"},
                      {"great", 0, "root"}});
  a.aspect = {2, 3};
  a.label = Polarity::Positive;
  a.gold_opinion = std::set<int>{4};

  AbsaInstance b;
  b.id = "g2";
  b.tree = make_tree({{"bad", 2, "amod"},
                      {"service", 3, "nsubj"},
                      {"hurts", 0, "root"}});
  b.aspect = {2, 3};
  b.label = Polarity::Negative;

  fx.raw = {a, b};

  std::vector<std::string> toks;
  for (const auto& inst : fx.raw)
    for (const auto& t : inst.tree.tokens) toks.push_back(t.form);
  toks.insert(toks.end(), {"fine", "awful", "slow"});
  fx.vocab = Vocab::from_tokens(toks);

  // hand-built synthetic partners; training only needs kinds + sources
  auto synth_of = [](const AbsaInstance& src, const std::string& id,
                     SynthKind kind, Polarity label) {
    SyntheticSample s;
    s.id = id;
    s.source_id = src.id;
    s.kind = kind;
    s.tree = src.tree;
    s.aspect = src.aspect;
    s.label = label;
    s.confidence = 0.9;
    return s;
  };
  auto da_same = synth_of(a, "g1#a0", SynthKind::SentimentMod,
                          Polarity::Positive);
  da_same.tree.at(4).form = "fine";
  auto da_flip = synth_of(a, "g1#a1", SynthKind::SentimentMod,
                          Polarity::Negative);
  da_flip.tree.at(4).form = "awful";
  auto dn = synth_of(a, "g1#n0", SynthKind::BackgroundRewrite,
                     Polarity::Positive);
  dn.tree.at(1).form = "a";
  auto dm = synth_of(a, "g1#m0", SynthKind::AspectAddition,
                     Polarity::Positive);
  auto db = synth_of(b, "g2#a0", SynthKind::SentimentMod, Polarity::Positive);
  db.tree.at(1).form = "fine";
  fx.synth = {da_same, da_flip, dn, dm, db};
  return fx;
}

inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_transformer_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 12;
  cfg.d_gcn = 6;
  cfg.n_gcn_layers = 2;
  cfg.d_label = 4;
  cfg.max_seq_len = 16;
  return cfg;
}

// Per-parameter-group rows for a full forward + cross-entropy pass,
// sampling entries_per_group elements of each tensor.
inline std::vector<GradCheckRow> run_model_gradcheck(
    uint64_t seed, int entries_per_group = 2, double tolerance = 1e-3) {
  using namespace gradcheck_detail;
  GradCheckFixture fx = make_gradcheck_fixture();
  ModelConfig cfg = gradcheck_model_config();
  cfg.init_seed = seed;
  Model model(cfg, &fx.vocab, &fx.labels);

  auto loss_value = [&](std::map<std::string, Tensor>* grads) {
    Tape tape(seed, 0);
    Bound p(model.params(), tape);
    std::vector<Tape::NodeId> terms;
    for (const auto& inst : fx.raw) {
      auto f = model.forward(tape, p, inst, /*train=*/true);
      terms.push_back(
          tape.cross_entropy(f.logits, static_cast<int>(inst.label)));
    }
    Tape::NodeId loss = tape.sum(tape.concat(terms));
    if (grads) {
      tape.backward(loss);
      *grads = p.grads();
    }
    return tape.value(loss)(0);
  };

  std::map<std::string, Tensor> analytic;
  loss_value(&analytic);

  std::vector<GradCheckRow> rows;
  Rng pick(mix(seed, 0x6d6f64ULL));
  const double h = 1e-5;
  for (auto& [name, tensor] : model.params().all()) {
    auto git = analytic.find(name);
    GradCheckRow row{name, 0, tolerance};
    if (git != analytic.end()) {
      for (int e = 0; e < entries_per_group; ++e) {
        int64_t i = static_cast<int64_t>(
            pick.next_below(static_cast<uint64_t>(tensor.size())));
        double keep = tensor.data[i];
        tensor.data[i] = keep + h;
        double up = loss_value(nullptr);
        tensor.data[i] = keep - h;
        double dn = loss_value(nullptr);
        tensor.data[i] = keep;
        double fd = (up - dn) / (2 * h);
        row.max_err =
            std::max(row.max_err, grad_error(git->second.data[i], fd));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

// Finite differences of the batch objective actually minimized by the
// trainer, per regime. Discriminator parameters see the type loss with a
// positive sign; encoder parameters see it scaled by -lambda_a.
inline GradCheckRow run_regime_gradcheck(Regime regime, uint64_t seed = 11,
                                         double tolerance = 1e-3,
                                         int entries_per_group = 2) {
  using namespace gradcheck_detail;
  GradCheckFixture fx = make_gradcheck_fixture();
  ModelConfig mcfg = gradcheck_model_config();
  mcfg.init_seed = seed;
  TrainConfig tcfg;
  tcfg.regime = regime;
  tcfg.seed = seed;
  tcfg.batch_size = 64;
  Model model(mcfg, &fx.vocab, &fx.labels);

  auto probe = [&]() {
    Trainer tr(tcfg, model, model);
    return tr.probe_batch(fx.raw, fx.synth);
  };
  Trainer::Probe base = probe();

  auto surrogate = [&](bool disc_param) {
    Trainer tr(tcfg, model, model);
    Trainer::Probe p = tr.probe_batch(fx.raw, fx.synth);
    double type_w = disc_param ? 1.0 : -tcfg.lambda_a;
    return p.ce + p.contrast + type_w * p.type;
  };

  GradCheckRow row{std::string("regime ") + to_string(regime), 0, tolerance};
  Rng pick(mix(seed, 0x726567ULL));
  const double h = 1e-5;
  for (auto& [name, tensor] : model.params().all()) {
    auto git = base.grads_o.find(name);
    if (git == base.grads_o.end()) continue;
    bool disc_param = name.rfind("disc.", 0) == 0;
    for (int e = 0; e < entries_per_group; ++e) {
      int64_t i = static_cast<int64_t>(
          pick.next_below(static_cast<uint64_t>(tensor.size())));
      double keep = tensor.data[i];
      tensor.data[i] = keep + h;
      double up = surrogate(disc_param);
      tensor.data[i] = keep - h;
      double dn = surrogate(disc_param);
      tensor.data[i] = keep;
      double fd = (up - dn) / (2 * h);
      row.max_err = std::max(row.max_err, grad_error(git->second.data[i], fd));
    }
  }
  return row;
}

}  // namespace absa
