#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "absa/corpus.hpp"
#include "absa/optim.hpp"
#include "absa/tape.hpp"
#include "absa/vocab.hpp"

namespace absa {

struct ModelConfig {
  int d_model = 64;
  int n_transformer_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int d_gcn = 32;
  int n_gcn_layers = 3;
  int d_label = 16;
  int max_seq_len = 96;
  double dropout_embed = 0.3;   // word embeddings
  double dropout_feat = 0.1;    // label embeddings
  uint64_t init_seed = 1;

  // Dimensions reported by the paper's setup.
  static ModelConfig paper_scale() {
    ModelConfig c;
    c.d_model = 768;
    c.n_transformer_layers = 4;
    c.n_heads = 8;
    c.d_ff = 2048;
    c.d_gcn = 300;
    c.n_gcn_layers = 3;
    c.d_label = 100;
    return c;
  }

  void validate() const {
    if (d_model % n_heads != 0)
      throw ConfigError("d_model must be divisible by n_heads");
    if (n_gcn_layers < 0) throw ConfigError("n_gcn_layers must be >= 0");
  }

  // Width of the representation fed to the classifier head.
  int d_syntax() const { return n_gcn_layers == 0 ? d_model : d_gcn; }
  int d_final() const { return d_syntax() + d_model; }
  int d_adv() const { return d_model + 2 * d_syntax(); }
};

struct Prediction {
  std::array<double, kNumPolarities> probs{};
  Polarity predicted = Polarity::Positive;
  Tensor beta;    // aggregation weights over sentence tokens
  Tensor r_f, r_a, r_cls, r_s, r_adv;
};

// Binds a ParamStore's tensors to leaf nodes on one tape, lazily by name.
class Bound {
 public:
  Bound(ParamStore& store, Tape& tape) : store_(&store), tape_(&tape) {}

  Tape::NodeId operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    Tape::NodeId id = tape_->leaf(store_->at(name), /*requires_grad=*/true);
    ids_.emplace(name, id);
    return id;
  }

  std::map<std::string, Tensor> grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : ids_) out.emplace(name, tape_->grad(id));
    return out;
  }

  ParamStore& store() { return *store_; }

 private:
  ParamStore* store_;
  Tape* tape_;
  std::map<std::string, Tape::NodeId> ids_;
};

// Transformer base encoder + syntax fusion + aspect-aware
// aggregation + softmax head. Holds its parameters; forward passes
// record onto a caller-provided tape.
class Model {
 public:
  struct Forward {
    Tape::NodeId logits;  // rank-1, 3
    Tape::NodeId r_f, r_a, r_cls, r_s, r_adv;
    Tape::NodeId beta;    // rank-1, n
    int n = 0;
  };

  Model(ModelConfig cfg, const Vocab* vocab, const LabelInventory* labels,
        std::string prefix = "")
      : cfg_(cfg), vocab_(vocab), labels_(labels), prefix_(std::move(prefix)) {
    cfg_.validate();
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Vocab& vocab() const { return *vocab_; }

  // ids 0=self, 1=none, then per relation label a head->dep and a
  // dep->head embedding.
  int label_table_rows() const { return 2 + 2 * labels_->size(); }

  struct InputSeq {
    std::vector<int> ids;
    std::vector<int> segments;
    int n = 0;        // sentence tokens
    int aspect_pos = 0;  // first aspect position in the sequence
    int aspect_len = 0;
  };

  // [CLS] x_1..x_n [SEP] a_i..a_j [SEP]
  InputSeq build_input(const AbsaInstance& inst) const {
    if (inst.aspect.length() <= 0)
      throw StructuralError("empty aspect span in " + inst.id);
    InputSeq s;
    s.n = inst.tree.size();
    s.ids.push_back(Vocab::kCls);
    s.segments.push_back(0);
    for (const auto& t : inst.tree.tokens) {
      s.ids.push_back(vocab_->id(t.form));
      s.segments.push_back(0);
    }
    s.ids.push_back(Vocab::kSep);
    s.segments.push_back(0);
    s.aspect_pos = static_cast<int>(s.ids.size());
    s.aspect_len = inst.aspect.length();
    for (int i = inst.aspect.start; i < inst.aspect.end; ++i) {
      s.ids.push_back(vocab_->id(inst.tree.at(i).form));
      s.segments.push_back(1);
    }
    s.ids.push_back(Vocab::kSep);
    s.segments.push_back(1);
    if (static_cast<int>(s.ids.size()) > cfg_.max_seq_len)
      throw StructuralError("sequence longer than max_seq_len in " + inst.id);
    return s;
  }

  Forward forward(Tape& tape, Bound& p, const AbsaInstance& inst,
                  bool train) const {
    InputSeq seq = build_input(inst);
    int m = static_cast<int>(seq.ids.size());
    int n = seq.n;

    // embeddings
    std::vector<int> positions(m);
    for (int i = 0; i < m; ++i) positions[i] = i;
    Tape::NodeId tok = tape.gather_rows(p(name("embed.tok")), seq.ids);
    tok = tape.dropout(tok, cfg_.dropout_embed, train);
    Tape::NodeId pos = tape.gather_rows(p(name("embed.pos")), positions);
    Tape::NodeId seg = tape.gather_rows(p(name("embed.seg")), seq.segments);
    Tape::NodeId h = tape.add(tape.add(tok, pos), seg);

    // transformer stack
    for (int l = 0; l < cfg_.n_transformer_layers; ++l)
      h = transformer_layer(tape, p, h, l, m);

    Tape::NodeId h_cls = tape.row(h, 0);
    std::vector<int> sent_rows(n);
    for (int i = 0; i < n; ++i) sent_rows[i] = 1 + i;
    Tape::NodeId h_x = tape.gather_rows(h, sent_rows);
    std::vector<int> asp_rows(seq.aspect_len);
    for (int i = 0; i < seq.aspect_len; ++i) asp_rows[i] = seq.aspect_pos + i;
    Tape::NodeId r_asp = tape.mean_rows(tape.gather_rows(h, asp_rows));

    // syntax fusion
    Tape::NodeId r = h_x;
    if (cfg_.n_gcn_layers > 0) {
      auto [mask, label_ids] = syntax_matrices(inst.tree);
      for (int l = 0; l < cfg_.n_gcn_layers; ++l)
        r = syntax_fusion_layer(tape, p, r, r_asp, mask, label_ids, l, n, train);
    }
    Tape::NodeId r_s = tape.mean_rows(r);

    // aspect-aware aggregation
    Tape::NodeId cat = tape.concat_cols({r, tape.tile_rows(r_asp, n)});
    Tape::NodeId scores =
        tape.tanh_(tape.bias_add(tape.matmul(cat, p(name("agg.wc"))),
                                 p(name("agg.bc"))));
    Tape::NodeId beta =
        tape.masked_softmax(tape.reshape(scores, {n}), Tensor::full({n}, 1.0));
    Tape::NodeId r_a = tape.reshape(
        tape.matmul(tape.reshape(beta, {1, n}), r), {cfg_.d_syntax()});
    Tape::NodeId r_f = tape.concat({r_a, h_cls});
    Tape::NodeId logits = tape.reshape(
        tape.bias_add(tape.matmul(tape.reshape(r_f, {1, cfg_.d_final()}),
                                  p(name("head.w"))),
                      p(name("head.b"))),
        {kNumPolarities});
    Tape::NodeId r_adv = tape.concat({h_cls, r_a, r_s});

    Forward f;
    f.logits = logits;
    f.r_f = r_f;
    f.r_a = r_a;
    f.r_cls = h_cls;
    f.r_s = r_s;
    f.r_adv = r_adv;
    f.beta = beta;
    f.n = n;
    return f;
  }

  // Pure inference on a fresh tape.
  Prediction predict(const AbsaInstance& inst) const {
    Tape tape;
    Bound p(const_cast<ParamStore&>(params_), tape);
    Forward f = forward(tape, p, inst, /*train=*/false);
    return extract(tape, f);
  }

  static Prediction extract(const Tape& tape, const Forward& f) {
    Prediction pred;
    const Tensor& logits = tape.value(f.logits);
    double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double z = 0;
    for (double v : logits.data) z += std::exp(v - mx);
    int arg = 0;
    for (int i = 0; i < kNumPolarities; ++i) {
      pred.probs[i] = std::exp(logits(i) - mx) / z;
      if (logits(i) > logits(arg)) arg = i;  // ties keep the lower index
    }
    pred.predicted = static_cast<Polarity>(arg);
    pred.beta = tape.value(f.beta);
    pred.r_f = tape.value(f.r_f);
    pred.r_a = tape.value(f.r_a);
    pred.r_cls = tape.value(f.r_cls);
    pred.r_s = tape.value(f.r_s);
    pred.r_adv = tape.value(f.r_adv);
    return pred;
  }

  // Adjacency mask (symmetrized, self loops) and directional label ids.
  std::pair<Tensor, std::vector<std::vector<int>>> syntax_matrices(
      const DepTree& tree) const {
    int n = tree.size();
    Tensor mask = Tensor::zeros({n, n});
    std::vector<std::vector<int>> ids(n, std::vector<int>(n, 1));  // none
    for (int i = 0; i < n; ++i) {
      mask(i, i) = 1.0;
      ids[i][i] = 0;  // self
    }
    for (const auto& t : tree.tokens) {
      if (t.head == 0) continue;
      int dep = t.index - 1, head = t.head - 1;
      int rel = labels_->id(t.deprel);
      mask(head, dep) = 1.0;
      mask(dep, head) = 1.0;
      ids[head][dep] = 2 + 2 * rel;      // head -> dependent
      ids[dep][head] = 2 + 2 * rel + 1;  // dependent -> head
    }
    return {std::move(mask), std::move(ids)};
  }

  // Word vectors (token + floats per line) copied into the token table.
  void load_word_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open word vectors: " + path);
    Tensor& table = params_.at(name("embed.tok"));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string word;
      is >> word;
      std::vector<double> vals;
      double v;
      while (is >> v) vals.push_back(v);
      if (static_cast<int>(vals.size()) != cfg_.d_model)
        throw ConfigError("word vector line " + std::to_string(lineno) +
                          ": dimension " + std::to_string(vals.size()) +
                          " != d_model");
      if (!vocab_->contains(word)) continue;
      int row = vocab_->id(word);
      for (int j = 0; j < cfg_.d_model; ++j) table(row, j) = vals[j];
    }
  }

  std::string name(const std::string& suffix) const {
    return prefix_.empty() ? suffix : prefix_ + "." + suffix;
  }

  // One syntax-fusion layer:
  //   alpha_ij = softmax_j over neighbors of W_b [r_j; x^e_ij; r_asp]
  //   r_i      = ReLU( sum_j alpha_ij (W_a [r_j; x^e_ij; r_asp] + b) )
  Tape::NodeId syntax_fusion_layer(Tape& tape, Bound& p, Tape::NodeId r_prev,
                           Tape::NodeId r_asp, const Tensor& mask,
                           const std::vector<std::vector<int>>& label_ids,
                           int l, int n, bool train) const {
    std::string base = "gcn" + std::to_string(l) + ".";
    Tape::NodeId labtab = p(name("gcn.labels"));
    Tape::NodeId asp_tiled = tape.tile_rows(r_asp, n);
    std::vector<Tape::NodeId> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
      Tape::NodeId lab = tape.gather_rows(labtab, label_ids[i]);
      lab = tape.dropout(lab, cfg_.dropout_feat, train);
      Tape::NodeId cat = tape.concat_cols({r_prev, lab, asp_tiled});
      Tensor mrow = Tensor::zeros({n});
      for (int j = 0; j < n; ++j) mrow(j) = mask(i, j);
      Tape::NodeId alpha = tape.masked_softmax(
          tape.reshape(tape.matmul(cat, p(name(base + "wb"))), {n}), mrow);
      Tape::NodeId proj = tape.bias_add(tape.matmul(cat, p(name(base + "wa"))),
                                        p(name(base + "ba")));
      rows.push_back(tape.matmul(tape.reshape(alpha, {1, n}), proj));
    }
    // stack the n (1 x d) rows into (n x d)
    std::vector<Tape::NodeId> flat;
    flat.reserve(n);
    for (auto id : rows) flat.push_back(tape.reshape(id, {cfg_.d_gcn}));
    Tape::NodeId stacked =
        tape.reshape(tape.concat(flat), {n, cfg_.d_gcn});
    return tape.relu(stacked);
  }

 private:
  Tape::NodeId transformer_layer(Tape& tape, Bound& p, Tape::NodeId x, int l,
                                 int m) const {
    int dk = cfg_.d_model / cfg_.n_heads;
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::string base = "trm" + std::to_string(l) + ".";
    std::vector<Tape::NodeId> heads;
    Tensor ones = Tensor::full({m, m}, 1.0);
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      std::string hb = base + "h" + std::to_string(hd) + ".";
      Tape::NodeId q = tape.matmul(x, p(name(hb + "wq")));
      Tape::NodeId k = tape.matmul(x, p(name(hb + "wk")));
      Tape::NodeId v = tape.matmul(x, p(name(hb + "wv")));
      Tape::NodeId att = tape.masked_softmax(
          tape.scale(tape.matmul_nt(q, k), inv_sqrt_dk), ones);
      heads.push_back(tape.matmul(att, v));
    }
    Tape::NodeId o = tape.bias_add(
        tape.matmul(tape.concat_cols(heads), p(name(base + "wo"))),
        p(name(base + "bo")));
    Tape::NodeId res1 = tape.layer_norm(tape.add(x, o),
                                        p(name(base + "ln1.g")),
                                        p(name(base + "ln1.b")));
    Tape::NodeId ff = tape.bias_add(
        tape.matmul(
            tape.relu(tape.bias_add(tape.matmul(res1, p(name(base + "ff1.w"))),
                                    p(name(base + "ff1.b")))),
            p(name(base + "ff2.w"))),
        p(name(base + "ff2.b")));
    return tape.layer_norm(tape.add(res1, ff), p(name(base + "ln2.g")),
                           p(name(base + "ln2.b")));
  }

  void init_params() {
    Rng rng(cfg_.init_seed);
    auto mat = [&](const std::string& nm, int r, int c) {
      double radius = std::sqrt(6.0 / (r + c));
      params_.create(name(nm), Tensor::uniform({r, c}, radius, rng));
    };
    auto vec = [&](const std::string& nm, int d, double fill) {
      params_.create(name(nm), Tensor::full({d}, fill));
    };
    int d = cfg_.d_model, dk = d / cfg_.n_heads;
    params_.create(name("embed.tok"),
                   Tensor::uniform({vocab_->size(), d}, 0.1, rng));
    params_.create(name("embed.pos"),
                   Tensor::uniform({cfg_.max_seq_len, d}, 0.1, rng));
    params_.create(name("embed.seg"), Tensor::uniform({2, d}, 0.1, rng));
    for (int l = 0; l < cfg_.n_transformer_layers; ++l) {
      std::string base = "trm" + std::to_string(l) + ".";
      for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        std::string hb = base + "h" + std::to_string(hd) + ".";
        mat(hb + "wq", d, dk);
        mat(hb + "wk", d, dk);
        mat(hb + "wv", d, dk);
      }
      mat(base + "wo", d, d);
      vec(base + "bo", d, 0.0);
      vec(base + "ln1.g", d, 1.0);
      vec(base + "ln1.b", d, 0.0);
      mat(base + "ff1.w", d, cfg_.d_ff);
      vec(base + "ff1.b", cfg_.d_ff, 0.0);
      mat(base + "ff2.w", cfg_.d_ff, d);
      vec(base + "ff2.b", d, 0.0);
      vec(base + "ln2.g", d, 1.0);
      vec(base + "ln2.b", d, 0.0);
    }
    if (cfg_.n_gcn_layers > 0) {
      params_.create(name("gcn.labels"),
                     Tensor::uniform({label_table_rows(), cfg_.d_label}, 0.1,
                                     rng));
      for (int l = 0; l < cfg_.n_gcn_layers; ++l) {
        int d_in = l == 0 ? d : cfg_.d_gcn;
        int d_cat = d_in + cfg_.d_label + d;
        std::string base = "gcn" + std::to_string(l) + ".";
        mat(base + "wa", d_cat, cfg_.d_gcn);
        vec(base + "ba", cfg_.d_gcn, 0.0);
        mat(base + "wb", d_cat, 1);
      }
    }
    mat("agg.wc", cfg_.d_syntax() + d, 1);
    vec("agg.bc", 1, 0.0);
    mat("head.w", cfg_.d_final(), kNumPolarities);
    vec("head.b", kNumPolarities, 0.0);
  }

  ModelConfig cfg_;
  const Vocab* vocab_;
  const LabelInventory* labels_;
  std::string prefix_;
  ParamStore params_;
};

}  // namespace absa
