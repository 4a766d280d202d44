#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "absa/errors.hpp"
#include "absa/tensor.hpp"

namespace absa {

// Reverse-mode tape. Nodes are appended in topological order; backward()
// walks them once in reverse. One tape per batch.
class Tape {
 public:
  using NodeId = int;

  explicit Tape(uint64_t seed = 0, int64_t step = 0)
      : seed_(seed), step_(step) {}

  NodeId leaf(Tensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  size_t num_nodes() const { return nodes_.size(); }

  // ---- elementwise ----

  NodeId add(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    require_same(ta, tb, "add");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    require_same(ta, tb, "sub");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      t.accumulate(a, g);
      Tensor ng = g;
      for (auto& v : ng.data) v = -v;
      t.accumulate(b, ng);
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    require_same(ta, tb, "mul");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor ga = g, gb = g;
      const Tensor &ta = t.val(a), &tb = t.val(b);
      for (int64_t i = 0; i < g.size(); ++i) {
        ga.data[i] = g.data[i] * tb.data[i];
        gb.data[i] = g.data[i] * ta.data[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  NodeId scale(NodeId a, double c) {
    Tensor out = val(a);
    for (auto& v : out.data) v *= c;
    return push(std::move(out), needs(a), [a, c](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      for (auto& v : g.data) v *= c;
      t.accumulate(a, g);
    });
  }

  NodeId relu(NodeId a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = v > 0 ? v : 0.0;
    return push(std::move(out), needs(a), [a](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      const Tensor& x = t.val(a);
      for (int64_t i = 0; i < g.size(); ++i)
        if (x.data[i] <= 0) g.data[i] = 0;
      t.accumulate(a, g);
    });
  }

  NodeId tanh_(NodeId a) {
    Tensor out = val(a);
    for (auto& v : out.data) v = std::tanh(v);
    return push(std::move(out), needs(a), [a](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].value;
      for (int64_t i = 0; i < g.size(); ++i)
        g.data[i] *= 1.0 - y.data[i] * y.data[i];
      t.accumulate(a, g);
    });
  }

  // ---- linear algebra ----

  // (m,k)x(k,n) -> (m,n)
  NodeId matmul(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
      throw StructuralError("matmul shape mismatch " + ta.shape_str() + " x " +
                            tb.shape_str());
    int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double av = ta(i, p);
        if (av == 0) continue;
        for (int j = 0; j < n; ++j) out(i, j) += av * tb(p, j);
      }
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor &ta = t.val(a), &tb = t.val(b);
      int m = ta.rows(), k = ta.cols(), n = tb.cols();
      Tensor ga = Tensor::zeros({m, k}), gb = Tensor::zeros({k, n});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gv = g(i, j);
          if (gv == 0) continue;
          for (int p = 0; p < k; ++p) {
            ga(i, p) += gv * tb(p, j);
            gb(p, j) += ta(i, p) * gv;
          }
        }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  // (m,k)x(n,k)^T -> (m,n)
  NodeId matmul_nt(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols())
      throw StructuralError("matmul_nt shape mismatch");
    int m = ta.rows(), k = ta.cols(), n = tb.rows();
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int p = 0; p < k; ++p) s += ta(i, p) * tb(j, p);
        out(i, j) = s;
      }
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor &ta = t.val(a), &tb = t.val(b);
      int m = ta.rows(), k = ta.cols(), n = tb.rows();
      Tensor ga = Tensor::zeros({m, k}), gb = Tensor::zeros({n, k});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gv = g(i, j);
          if (gv == 0) continue;
          for (int p = 0; p < k; ++p) {
            ga(i, p) += gv * tb(j, p);
            gb(j, p) += gv * ta(i, p);
          }
        }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  // mat (m,n) + row vector (n), broadcast over rows
  NodeId bias_add(NodeId mat, NodeId vec) {
    const Tensor &tm = val(mat), &tv = val(vec);
    if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape[0])
      throw StructuralError("bias_add shape mismatch");
    Tensor out = tm;
    for (int i = 0; i < tm.rows(); ++i)
      for (int j = 0; j < tm.cols(); ++j) out(i, j) += tv(j);
    return push(std::move(out), needs(mat) || needs(vec),
                [mat, vec](Tape& t, NodeId id) {
                  const Tensor& g = t.nodes_[id].grad;
                  t.accumulate(mat, g);
                  Tensor gv = Tensor::zeros({g.cols()});
                  for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gv(j) += g(i, j);
                  t.accumulate(vec, gv);
                });
  }

  // ---- shape ops ----

  NodeId reshape(NodeId a, std::vector<int> shape) {
    const Tensor& ta = val(a);
    if (Tensor::count(shape) != ta.size())
      throw StructuralError("reshape element count mismatch");
    Tensor out(shape, ta.data);
    return push(std::move(out), needs(a), [a](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      g.shape = t.val(a).shape;
      t.accumulate(a, g);
    });
  }

  // 1-D concatenation
  NodeId concat(const std::vector<NodeId>& parts) {
    Tensor out = Tensor::zeros({0});
    out.shape[0] = 0;
    for (NodeId p : parts) {
      const Tensor& tp = val(p);
      if (tp.rank() != 1) throw StructuralError("concat expects rank-1 inputs");
      out.shape[0] += tp.shape[0];
      out.data.insert(out.data.end(), tp.data.begin(), tp.data.end());
    }
    bool rg = false;
    for (NodeId p : parts) rg = rg || needs(p);
    auto ps = parts;
    return push(std::move(out), rg, [ps](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      int64_t off = 0;
      for (NodeId p : ps) {
        int len = t.val(p).shape[0];
        Tensor gp = Tensor::zeros({len});
        std::copy(g.data.begin() + off, g.data.begin() + off + len,
                  gp.data.begin());
        t.accumulate(p, gp);
        off += len;
      }
    });
  }

  // Column-wise concatenation of matrices with equal row counts.
  NodeId concat_cols(const std::vector<NodeId>& parts) {
    int m = val(parts.at(0)).rows(), total = 0;
    for (NodeId p : parts) {
      const Tensor& tp = val(p);
      if (tp.rank() != 2 || tp.rows() != m)
        throw StructuralError("concat_cols row mismatch");
      total += tp.cols();
    }
    Tensor out = Tensor::zeros({m, total});
    int off = 0;
    for (NodeId p : parts) {
      const Tensor& tp = val(p);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < tp.cols(); ++j) out(i, off + j) = tp(i, j);
      off += tp.cols();
    }
    bool rg = false;
    for (NodeId p : parts) rg = rg || needs(p);
    auto ps = parts;
    return push(std::move(out), rg, [ps, m](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      int off = 0;
      for (NodeId p : ps) {
        int c = t.val(p).cols();
        Tensor gp = Tensor::zeros({m, c});
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) gp(i, j) = g(i, off + j);
        t.accumulate(p, gp);
        off += c;
      }
    });
  }

  NodeId slice(NodeId a, int start, int len) {
    const Tensor& ta = val(a);
    if (ta.rank() != 1 || start < 0 || start + len > ta.shape[0])
      throw StructuralError("slice out of range");
    Tensor out = Tensor::zeros({len});
    std::copy(ta.data.begin() + start, ta.data.begin() + start + len,
              out.data.begin());
    return push(std::move(out), needs(a), [a, start, len](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor ga = Tensor::zeros(t.val(a).shape);
      for (int i = 0; i < len; ++i) ga(start + i) = g(i);
      t.accumulate(a, ga);
    });
  }

  // Row selection / embedding lookup; indices may repeat.
  NodeId gather_rows(NodeId table, std::vector<int> indices) {
    const Tensor& tt = val(table);
    if (tt.rank() != 2) throw StructuralError("gather_rows expects a matrix");
    int c = tt.cols();
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), c});
    for (size_t i = 0; i < indices.size(); ++i) {
      int r = indices[i];
      if (r < 0 || r >= tt.rows())
        throw StructuralError("gather_rows index out of range");
      for (int j = 0; j < c; ++j) out(static_cast<int>(i), j) = tt(r, j);
    }
    return push(std::move(out), needs(table),
                [table, idx = std::move(indices)](Tape& t, NodeId id) {
                  const Tensor& g = t.nodes_[id].grad;
                  Tensor gt = Tensor::zeros(t.val(table).shape);
                  for (size_t i = 0; i < idx.size(); ++i)
                    for (int j = 0; j < g.cols(); ++j)
                      gt(idx[i], j) += g(static_cast<int>(i), j);
                  t.accumulate(table, gt);
                });
  }

  // Single row of a matrix as a rank-1 tensor.
  NodeId row(NodeId a, int i) {
    return reshape(gather_rows(a, {i}), {val(a).cols()});
  }

  // Repeat a rank-1 vector as n identical rows.
  NodeId tile_rows(NodeId v, int n) {
    const Tensor& tv = val(v);
    if (tv.rank() != 1) throw StructuralError("tile_rows expects rank-1");
    int d = tv.shape[0];
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out(i, j) = tv(j);
    return push(std::move(out), needs(v), [v, n, d](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor gv = Tensor::zeros({d});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gv(j) += g(i, j);
      t.accumulate(v, gv);
    });
  }

  // ---- reductions & nonlinear blocks ----

  NodeId sum(NodeId a) {
    double s = 0;
    for (double v : val(a).data) s += v;
    return push(Tensor::scalar(s), needs(a), [a](Tape& t, NodeId id) {
      double g = t.nodes_[id].grad(0);
      Tensor ga = Tensor::full(t.val(a).shape, g);
      t.accumulate(a, ga);
    });
  }

  NodeId mean_rows(NodeId a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 2) throw StructuralError("mean_rows expects a matrix");
    int m = ta.rows(), c = ta.cols();
    Tensor out = Tensor::zeros({c});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j) out(j) += ta(i, j) / m;
    return push(std::move(out), needs(a), [a, m, c](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor ga = Tensor::zeros({m, c});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j) ga(i, j) = g(j) / m;
      t.accumulate(a, ga);
    });
  }

  // Row-wise softmax over unmasked entries; mask is 0/1, constant.
  NodeId masked_softmax(NodeId a, const Tensor& mask) {
    const Tensor& ta = val(a);
    if (!ta.same_shape(mask))
      throw StructuralError("masked_softmax mask shape mismatch");
    int m = ta.rank() == 2 ? ta.rows() : 1;
    int c = ta.rank() == 2 ? ta.cols() : ta.shape[0];
    Tensor out = Tensor::zeros(ta.shape);
    for (int i = 0; i < m; ++i) {
      double mx = -1e300;
      bool any = false;
      for (int j = 0; j < c; ++j)
        if (mask.data[i * c + j] != 0) {
          any = true;
          mx = std::max(mx, ta.data[i * c + j]);
        }
      if (!any) throw NumericError("masked_softmax: fully masked row");
      double z = 0;
      for (int j = 0; j < c; ++j)
        if (mask.data[i * c + j] != 0)
          z += std::exp(ta.data[i * c + j] - mx);
      for (int j = 0; j < c; ++j)
        out.data[i * c + j] = mask.data[i * c + j] != 0
                                  ? std::exp(ta.data[i * c + j] - mx) / z
                                  : 0.0;
    }
    return push(std::move(out), needs(a), [a, m, c](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].value;
      Tensor ga = Tensor::zeros(t.val(a).shape);
      for (int i = 0; i < m; ++i) {
        double gy = 0;
        for (int j = 0; j < c; ++j) gy += g.data[i * c + j] * y.data[i * c + j];
        for (int j = 0; j < c; ++j)
          ga.data[i * c + j] =
              y.data[i * c + j] * (g.data[i * c + j] - gy);
      }
      t.accumulate(a, ga);
    });
  }

  // Per-row layer normalization with learnable gain and bias.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-6) {
    const Tensor& tx = val(x);
    const Tensor &tg = val(gain), &tb = val(bias);
    if (tx.rank() != 2 || tg.rank() != 1 || tx.cols() != tg.shape[0] ||
        !tg.same_shape(tb))
      throw StructuralError("layer_norm shape mismatch");
    int m = tx.rows(), c = tx.cols();
    Tensor out = Tensor::zeros({m, c});
    auto xhat = std::make_shared<Tensor>(Tensor::zeros({m, c}));
    auto inv_sigma = std::make_shared<std::vector<double>>(m);
    for (int i = 0; i < m; ++i) {
      double mu = 0;
      for (int j = 0; j < c; ++j) mu += tx(i, j);
      mu /= c;
      double var = 0;
      for (int j = 0; j < c; ++j) var += (tx(i, j) - mu) * (tx(i, j) - mu);
      var /= c;
      double is = 1.0 / std::sqrt(var + eps);
      (*inv_sigma)[i] = is;
      for (int j = 0; j < c; ++j) {
        double xh = (tx(i, j) - mu) * is;
        (*xhat)(i, j) = xh;
        out(i, j) = tg(j) * xh + tb(j);
      }
    }
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [x, gain, bias, xhat, inv_sigma, m, c](Tape& t, NodeId id) {
                  const Tensor& g = t.nodes_[id].grad;
                  const Tensor& tg = t.val(gain);
                  Tensor gx = Tensor::zeros({m, c});
                  Tensor ggain = Tensor::zeros({c}), gbias = Tensor::zeros({c});
                  for (int i = 0; i < m; ++i) {
                    double mean_d = 0, mean_dx = 0;
                    std::vector<double> d(c);
                    for (int j = 0; j < c; ++j) {
                      d[j] = g(i, j) * tg(j);
                      mean_d += d[j];
                      mean_dx += d[j] * (*xhat)(i, j);
                      ggain(j) += g(i, j) * (*xhat)(i, j);
                      gbias(j) += g(i, j);
                    }
                    mean_d /= c;
                    mean_dx /= c;
                    for (int j = 0; j < c; ++j)
                      gx(i, j) = (*inv_sigma)[i] *
                                 (d[j] - mean_d - (*xhat)(i, j) * mean_dx);
                  }
                  t.accumulate(x, gx);
                  t.accumulate(gain, ggain);
                  t.accumulate(bias, gbias);
                });
  }

  // Inverted dropout with a counter-based mask keyed by (seed, step, node id),
  // so identical graph construction reproduces identical masks.
  NodeId dropout(NodeId a, double rate, bool train) {
    if (!train || rate <= 0.0) return a;
    if (rate >= 1.0) throw StructuralError("dropout rate must be < 1");
    const Tensor& ta = val(a);
    NodeId id_next = static_cast<NodeId>(nodes_.size());
    auto keep = std::make_shared<std::vector<char>>(ta.size());
    Tensor out = ta;
    double inv = 1.0 / (1.0 - rate);
    for (int64_t i = 0; i < ta.size(); ++i) {
      uint64_t key = mix(seed_, static_cast<uint64_t>(step_),
                         (static_cast<uint64_t>(id_next) << 32) ^
                             static_cast<uint64_t>(i));
      bool k = uniform01(key) >= rate;
      (*keep)[i] = k;
      out.data[i] = k ? ta.data[i] * inv : 0.0;
    }
    return push(std::move(out), needs(a), [a, keep, inv](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      for (int64_t i = 0; i < g.size(); ++i)
        if (!(*keep)[i]) g.data[i] = 0;
        else g.data[i] *= inv;
      t.accumulate(a, g);
    });
  }

  // -mean log-softmax at the gold index; logits rank-1.
  NodeId cross_entropy(NodeId logits, int gold) {
    const Tensor& tl = val(logits);
    if (tl.rank() != 1 || gold < 0 || gold >= tl.shape[0])
      throw StructuralError("cross_entropy: bad logits/gold");
    double mx = *std::max_element(tl.data.begin(), tl.data.end());
    double z = 0;
    for (double v : tl.data) z += std::exp(v - mx);
    double loss = std::log(z) + mx - tl(gold);
    return push(Tensor::scalar(loss), needs(logits),
                [logits, gold](Tape& t, NodeId id) {
                  double g = t.nodes_[id].grad(0);
                  const Tensor& tl = t.val(logits);
                  double mx = *std::max_element(tl.data.begin(), tl.data.end());
                  double z = 0;
                  for (double v : tl.data) z += std::exp(v - mx);
                  Tensor gl = Tensor::zeros(tl.shape);
                  for (int j = 0; j < tl.shape[0]; ++j)
                    gl(j) = g * (std::exp(tl(j) - mx) / z - (j == gold));
                  t.accumulate(logits, gl);
                });
  }

  // log sum exp over a rank-1 tensor -> scalar
  NodeId logsumexp(NodeId a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 1 || ta.size() == 0)
      throw StructuralError("logsumexp expects a non-empty rank-1 tensor");
    double mx = *std::max_element(ta.data.begin(), ta.data.end());
    double z = 0;
    for (double v : ta.data) z += std::exp(v - mx);
    return push(Tensor::scalar(mx + std::log(z)), needs(a),
                [a](Tape& t, NodeId id) {
                  double g = t.nodes_[id].grad(0);
                  const Tensor& ta = t.val(a);
                  double lse = t.nodes_[id].value(0);
                  Tensor ga = Tensor::zeros(ta.shape);
                  for (int64_t i = 0; i < ta.size(); ++i)
                    ga.data[i] = g * std::exp(ta.data[i] - lse);
                  t.accumulate(a, ga);
                });
  }

  NodeId cosine(NodeId a, NodeId b) {
    const Tensor &ta = val(a), &tb = val(b);
    require_same(ta, tb, "cosine");
    double na = norm(ta), nb = norm(tb);
    if (na == 0 || nb == 0) throw NumericError("cosine of zero vector");
    double c = dot(ta, tb) / (na * nb);
    return push(Tensor::scalar(c), needs(a) || needs(b),
                [a, b](Tape& t, NodeId id) {
                  double g = t.nodes_[id].grad(0);
                  double c = t.nodes_[id].value(0);
                  const Tensor &ta = t.val(a), &tb = t.val(b);
                  double na = norm(ta), nb = norm(tb);
                  Tensor ga = Tensor::zeros(ta.shape), gb = Tensor::zeros(tb.shape);
                  for (int64_t i = 0; i < ta.size(); ++i) {
                    ga.data[i] = g * (tb.data[i] / (na * nb) -
                                      c * ta.data[i] / (na * na));
                    gb.data[i] = g * (ta.data[i] / (na * nb) -
                                      c * tb.data[i] / (nb * nb));
                  }
                  t.accumulate(a, ga);
                  t.accumulate(b, gb);
                });
  }

  // Identity forward; backward multiplies by -lambda. The min-max boundary.
  NodeId grad_reverse(NodeId a, double lambda) {
    Tensor out = val(a);
    return push(std::move(out), needs(a), [a, lambda](Tape& t, NodeId id) {
      Tensor g = t.nodes_[id].grad;
      for (auto& v : g.data) v *= -lambda;
      t.accumulate(a, g);
    });
  }

  // ---- backward ----

  void backward(NodeId loss) {
    if (val(loss).size() != 1)
      throw StructuralError("backward requires a scalar loss");
    for (auto& n : nodes_) {
      n.grad = Tensor::zeros(n.value.shape);
      n.grad_live = false;
    }
    nodes_[loss].grad(0) = 1.0;
    nodes_[loss].grad_live = true;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back && n.requires_grad && n.grad_live) n.back(*this, id);
    }
  }

  uint64_t seed() const { return seed_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Tape&, NodeId)> back;
  };

  const Tensor& val(NodeId id) const { return nodes_[id].value; }
  bool needs(NodeId id) const { return nodes_[id].requires_grad; }

  static void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
      throw StructuralError(std::string(op) + ": shape mismatch " +
                            a.shape_str() + " vs " + b.shape_str());
  }

  NodeId push(Tensor value, bool requires_grad,
              std::function<void(Tape&, NodeId)> back) {
    if (!value.all_finite())
      throw NumericError("non-finite value produced at node " +
                         std::to_string(nodes_.size()));
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void accumulate(NodeId id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad && !n.back) {
      // still record for leaves queried by tests
    }
    for (int64_t i = 0; i < g.size(); ++i) n.grad.data[i] += g.data[i];
    n.grad_live = true;
  }

  std::vector<Node> nodes_;
  uint64_t seed_;
  int64_t step_;
};

}  // namespace absa
