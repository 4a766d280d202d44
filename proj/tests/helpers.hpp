#pragma once

// Shared test utilities: a straight-loop reference for the syntax-fusion
// layer, random tree generation, and small file helpers.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "absa/corpus.hpp"
#include "absa/model.hpp"
#include "absa/rng.hpp"
#include "absa/tensor.hpp"

namespace testutil {

inline std::string data_path(const std::string& rel) {
  return std::string(ABSA_DATA_DIR) + "/" + rel;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Independent dense-loop computation of one syntax-fusion layer, working
// directly on raw tensors instead of tape ops:
//   score_ij = W_b . [r_j; lab_ij; r_asp]
//   alpha_i  = softmax over unmasked j
//   r_i      = relu( sum_j alpha_ij (W_a^T [r_j; lab_ij; r_asp] + b) )
inline absa::Tensor syntax_fusion_reference(
    const absa::Tensor& r_prev, const absa::Tensor& r_asp,
    const absa::Tensor& mask, const std::vector<std::vector<int>>& label_ids,
    const absa::Tensor& label_table, const absa::Tensor& wa,
    const absa::Tensor& ba, const absa::Tensor& wb) {
  int n = r_prev.rows();
  int d_in = r_prev.cols();
  int d_lab = label_table.cols();
  int d_asp = r_asp.shape[0];
  int d_cat = d_in + d_lab + d_asp;
  int d_out = wa.cols();
  absa::Tensor out = absa::Tensor::zeros({n, d_out});
  for (int i = 0; i < n; ++i) {
    std::vector<double> score(n, 0.0);
    std::vector<std::vector<double>> cats(n, std::vector<double>(d_cat));
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < d_in; ++k) cats[j][k] = r_prev(j, k);
      int lab = label_ids[i][j];
      for (int k = 0; k < d_lab; ++k)
        cats[j][d_in + k] = label_table(lab, k);
      for (int k = 0; k < d_asp; ++k)
        cats[j][d_in + d_lab + k] = r_asp(k);
      double s = 0;
      for (int k = 0; k < d_cat; ++k) s += cats[j][k] * wb(k, 0);
      score[j] = s;
    }
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (mask(i, j) != 0) mx = std::max(mx, score[j]);
    double z = 0;
    for (int j = 0; j < n; ++j)
      if (mask(i, j) != 0) z += std::exp(score[j] - mx);
    for (int j = 0; j < n; ++j) {
      if (mask(i, j) == 0) continue;
      double alpha = std::exp(score[j] - mx) / z;
      for (int c = 0; c < d_out; ++c) {
        double proj = ba(c);
        for (int k = 0; k < d_cat; ++k) proj += cats[j][k] * wa(k, c);
        out(i, c) += alpha * proj;
      }
    }
    for (int c = 0; c < d_out; ++c) out(i, c) = std::max(0.0, out(i, c));
  }
  return out;
}

// Random dependency tree: token i > 1 attaches to a random earlier token,
// labels drawn from the inventory.
inline absa::DepTree random_tree(int n, const absa::LabelInventory& inv,
                                 absa::Rng& rng) {
  absa::DepTree tree;
  for (int i = 1; i <= n; ++i) {
    absa::Token t;
    t.index = i;
    t.form = "w" + std::to_string(i);
    t.lemma = t.form;
    t.upos = "X";
    if (i == 1) {
      t.head = 0;
      t.deprel = "root";
    } else {
      t.head = 1 + static_cast<int>(rng.next_below(i - 1));
      t.deprel = inv.labels()[rng.next_below(inv.size())];
    }
    tree.tokens.push_back(std::move(t));
  }
  tree.validate();
  return tree;
}

}  // namespace testutil
