#include "csmt/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "csmt/error.hpp"
#include "csmt/rng.hpp"

namespace csmt::ag {

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(Matrix value, std::initializer_list<Var> parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var p : parents) {
      if (nodes_[static_cast<std::size_t>(p.id)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_side_output(Matrix value, Var owner) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad(owner);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) {
  if (grad_enabled_) throw Error("const parameter on a gradient tape: " + p.name);
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.param) {
    n.has_grad = true;
    return n.param->grad;
  }
  if (!n.has_grad) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix::Zero(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

bool Tape::has_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].has_grad; }

void Tape::backward(Var root) {
  if (!grad_enabled_) throw Error("backward on a tape without gradients");
  const Matrix& r = value(root);
  if (r.rows() != 1 || r.cols() != 1) throw Error("backward root must be a scalar");
  grad(root)(0, 0) += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.has_grad) n.backward(*this, Var{i});
  }
}

int Segments::max_length() const {
  int m = 0;
  for (int b = 0; b < count(); ++b) m = std::max(m, length(b));
  return m;
}

// ---------------------------------------------------------------------------
// Elementwise / linear

Var matmul(Tape& t, Var a, Var b) {
  Matrix out;
  out.noalias() = t.value(a) * t.value(b);
  return t.make(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
    if (tp.needs_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  Matrix out;
  out.noalias() = t.value(x) * t.value(w);
  out.rowwise() += t.value(b).row(0);
  return t.make(std::move(out), {x, w, b}, [x, w, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(x)) tp.grad(x).noalias() += g * tp.value(w).transpose();
    if (tp.needs_grad(w)) tp.grad(w).noalias() += tp.value(x).transpose() * g;
    if (tp.needs_grad(b)) tp.grad(b).row(0) += g.colwise().sum();
  });
}

Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) + t.value(b);
  return t.make(std::move(out), {a, b}, [a, b](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a)) tp.grad(a) += g;
    if (tp.needs_grad(b)) tp.grad(b) += g;
  });
}

Var add_constant(Tape& t, Var a, const Matrix& c) {
  Matrix out = t.value(a) + c;
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) { tp.grad(a) += tp.grad(self); });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a) * s;
  return t.make(std::move(out), {a}, [a, s](Tape& tp, Var self) { tp.grad(a) += s * tp.grad(self); });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    const Matrix& y = tp.value(self);
    tp.grad(a).array() += tp.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var swish(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix sig = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix out = x.array() * sig.array();
  return t.make(std::move(out), {a}, [a, sig = std::move(sig)](Tape& tp, Var self) {
    const Matrix& x = tp.value(a);
    // d/dx x*s(x) = s + x*s*(1-s)
    tp.grad(a).array() += tp.grad(self).array() *
                          (sig.array() + x.array() * sig.array() * (1.0 - sig.array()));
  });
}

Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).cwiseMax(0.0);
  return t.make(std::move(out), {a}, [a](Tape& tp, Var self) {
    tp.grad(a).array() += (tp.value(a).array() > 0.0).cast<double>() * tp.grad(self).array();
  });
}

Var dropout(Tape& t, Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  const Matrix& x = t.value(a);
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  }
  Matrix out = x.array() * mask.array();
  return t.make(std::move(out), {a}, [a, mask = std::move(mask)](Tape& tp, Var self) {
    tp.grad(a).array() += tp.grad(self).array() * mask.array();
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& in = t.value(x);
  const Eigen::Index rows = in.rows(), d = in.cols();
  Matrix xhat(rows, d);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= t.value(gain).row(0).array();
  out.rowwise() += t.value(bias).row(0);
  return t.make(std::move(out), {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& tp, Var self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.needs_grad(gain)) {
                    tp.grad(gain).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
                  }
                  if (tp.needs_grad(bias)) tp.grad(bias).row(0) += g.colwise().sum();
                  if (tp.needs_grad(x)) {
                    Matrix dxhat = g;
                    dxhat.array().rowwise() *= tp.value(gain).row(0).array();
                    Matrix& dx = tp.grad(x);
                    const double n = static_cast<double>(xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                      const double m1 = dxhat.row(r).sum() / n;
                      const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                      dx.row(r).array() +=
                          inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                  }
                });
}

Var gather_rows(Tape& t, const std::vector<Var>& tables,
                const std::vector<std::pair<int, int>>& refs) {
  if (tables.empty()) throw Error("gather_rows: no tables");
  const Eigen::Index d = t.value(tables[0]).cols();
  Matrix out(static_cast<Eigen::Index>(refs.size()), d);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Matrix& tab = t.value(tables[static_cast<std::size_t>(refs[k].first)]);
    if (refs[k].second < 0 || refs[k].second >= tab.rows()) throw Error("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(k)) = tab.row(refs[k].second);
  }
  Var a = tables[0];
  Var b = tables.size() > 1 ? tables[1] : tables[0];
  if (tables.size() > 2) throw Error("gather_rows: at most two tables");
  return t.make(std::move(out), {a, b}, [tables, refs](Tape& tp, Var self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t k = 0; k < refs.size(); ++k) {
      Var tab = tables[static_cast<std::size_t>(refs[k].first)];
      if (tp.needs_grad(tab)) tp.grad(tab).row(refs[k].second) += g.row(static_cast<Eigen::Index>(k));
    }
  });
}

namespace {

void softmax_inplace(Eigen::Ref<Matrix> m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace

Var softmax_rows(Tape& t, Var logits) {
  Matrix out = t.value(logits);
  softmax_inplace(out);
  return t.make(std::move(out), {logits}, [logits](Tape& tp, Var self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
    Matrix dx = y.array() * (g.colwise() - dots).array();
    tp.grad(logits) += dx;
  });
}

// ---------------------------------------------------------------------------
// Attention

AttentionOutput attention(Tape& t, Var q, Var k, Var v, const Segments& q_seg,
                          const Segments& k_seg, int heads, bool causal, bool want_weights) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  const Eigen::Index d = Q.cols();
  if (d % heads != 0) throw Error("attention: d_model not divisible by heads");
  if (q_seg.count() != k_seg.count()) throw Error("attention: segment count mismatch");
  const Eigen::Index dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const int nb = q_seg.count();
  const int max_k = k_seg.max_length();

  Matrix out = Matrix::Zero(Q.rows(), d);
  Matrix avg;
  if (want_weights) avg = Matrix::Zero(Q.rows(), max_k);
  // Attention probabilities per (sequence, head).
  std::vector<Matrix> probs(static_cast<std::size_t>(nb * heads));

  for (int b = 0; b < nb; ++b) {
    const int q0 = q_seg.begin(b), nq = q_seg.length(b);
    const int k0 = k_seg.begin(b), nk = k_seg.length(b);
    if (nk == 0) throw Error("attention: empty key sequence");
    if (causal && nq > nk) throw Error("attention: causal needs nq <= nk");
    for (int h = 0; h < heads; ++h) {
      Matrix s;
      s.noalias() = Q.block(q0, h * dk, nq, dk) * K.block(k0, h * dk, nk, dk).transpose();
      s *= scale;
      if (causal) {
        const int shift = nk - nq;
        for (int i = 0; i < nq; ++i) {
          for (int j = i + shift + 1; j < nk; ++j) s(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
      softmax_inplace(s);
      out.block(q0, h * dk, nq, dk).noalias() = s * V.block(k0, h * dk, nk, dk);
      if (want_weights) avg.block(q0, 0, nq, nk) += s / static_cast<double>(heads);
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }

  AttentionOutput res;
  // The weights node is created right after; capture its id by value.
  const int weights_id = want_weights ? static_cast<int>(t.size()) + 1 : -1;
  res.context = t.make(
      std::move(out), {q, k, v},
      [q, k, v, q_seg, k_seg, heads, dk, scale, weights_id, probs = std::move(probs)](
          Tape& tp, Var self) {
        const Matrix& G = tp.grad(self);
        const Matrix& Q = tp.value(q);
        const Matrix& K = tp.value(k);
        const Matrix& V = tp.value(v);
        const Var w{weights_id};
        const bool have_w = weights_id >= 0 && tp.has_grad(w);
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        for (int b = 0; b < q_seg.count(); ++b) {
          const int q0 = q_seg.begin(b), nq = q_seg.length(b);
          const int k0 = k_seg.begin(b), nk = k_seg.length(b);
          for (int h = 0; h < heads; ++h) {
            const Matrix& A = probs[static_cast<std::size_t>(b * heads + h)];
            const auto g = G.block(q0, h * dk, nq, dk);
            Matrix dA;
            dA.noalias() = g * V.block(k0, h * dk, nk, dk).transpose();
            if (have_w) dA += tp.grad(w).block(q0, 0, nq, nk) / static_cast<double>(heads);
            dV.block(k0, h * dk, nk, dk).noalias() += A.transpose() * g;
            Eigen::VectorXd dots = (dA.array() * A.array()).rowwise().sum();
            Matrix dS = A.array() * (dA.colwise() - dots).array();
            dQ.block(q0, h * dk, nq, dk).noalias() += scale * dS * K.block(k0, h * dk, nk, dk);
            dK.block(k0, h * dk, nk, dk).noalias() += scale * dS.transpose() * Q.block(q0, h * dk, nq, dk);
          }
        }
        if (tp.needs_grad(q)) tp.grad(q) += dQ;
        if (tp.needs_grad(k)) tp.grad(k) += dK;
        if (tp.needs_grad(v)) tp.grad(v) += dV;
      });
  if (want_weights) {
    res.weights = t.make_side_output(std::move(avg), res.context);
    if (res.weights.id != weights_id) throw Error("attention: unexpected node order");
  }
  return res;
}

Var weighted_context(Tape& t, Var alpha, Var h, const Segments& q_seg, const Segments& k_seg) {
  const Matrix& A = t.value(alpha);
  const Matrix& H = t.value(h);
  Matrix out = Matrix::Zero(A.rows(), H.cols());
  for (int b = 0; b < q_seg.count(); ++b) {
    out.middleRows(q_seg.begin(b), q_seg.length(b)).noalias() =
        A.block(q_seg.begin(b), 0, q_seg.length(b), k_seg.length(b)) *
        H.middleRows(k_seg.begin(b), k_seg.length(b));
  }
  return t.make(std::move(out), {alpha, h}, [alpha, h, q_seg, k_seg](Tape& tp, Var self) {
    const Matrix& G = tp.grad(self);
    for (int b = 0; b < q_seg.count(); ++b) {
      const int q0 = q_seg.begin(b), nq = q_seg.length(b);
      const int k0 = k_seg.begin(b), nk = k_seg.length(b);
      if (tp.needs_grad(alpha)) {
        tp.grad(alpha).block(q0, 0, nq, nk).noalias() +=
            G.middleRows(q0, nq) * tp.value(h).middleRows(k0, nk).transpose();
      }
      if (tp.needs_grad(h)) {
        tp.grad(h).middleRows(k0, nk).noalias() +=
            tp.value(alpha).block(q0, 0, nq, nk).transpose() * G.middleRows(q0, nq);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Output layers

Var pointer_mixture(Tape& t, Var pred, Var gate, Var alpha, const Segments& q_seg,
                    const std::vector<std::vector<int>>& types, int width) {
  const Matrix& P = t.value(pred);
  const Matrix& G = t.value(gate);
  const Matrix& A = t.value(alpha);
  const Eigen::Index vt = P.cols();
  if (width < vt) throw Error("pointer_mixture: width smaller than target vocabulary");
  if (static_cast<int>(types.size()) != q_seg.count()) throw Error("pointer_mixture: types/segments mismatch");
  Matrix out = Matrix::Zero(P.rows(), width);
  for (int b = 0; b < q_seg.count(); ++b) {
    const auto& ty = types[static_cast<std::size_t>(b)];
    for (int r = q_seg.begin(b); r < q_seg.begin(b) + q_seg.length(b); ++r) {
      const double g = G(r, 0);
      out.row(r).head(vt) = g * P.row(r);
      for (std::size_t i = 0; i < ty.size(); ++i) {
        out(r, ty[i]) += (1.0 - g) * A(r, static_cast<Eigen::Index>(i));
      }
    }
  }
  return t.make(std::move(out), {pred, gate, alpha},
                [pred, gate, alpha, q_seg, types, vt](Tape& tp, Var self) {
                  const Matrix& dOut = tp.grad(self);
                  const Matrix& P = tp.value(pred);
                  const Matrix& G = tp.value(gate);
                  const Matrix& A = tp.value(alpha);
                  for (int b = 0; b < q_seg.count(); ++b) {
                    const auto& ty = types[static_cast<std::size_t>(b)];
                    for (int r = q_seg.begin(b); r < q_seg.begin(b) + q_seg.length(b); ++r) {
                      const double g = G(r, 0);
                      double dg = dOut.row(r).head(vt).dot(P.row(r));
                      for (std::size_t i = 0; i < ty.size(); ++i) {
                        const auto ii = static_cast<Eigen::Index>(i);
                        dg -= A(r, ii) * dOut(r, ty[i]);
                        if (tp.needs_grad(alpha)) tp.grad(alpha)(r, ii) += (1.0 - g) * dOut(r, ty[i]);
                      }
                      if (tp.needs_grad(pred)) tp.grad(pred).row(r) += g * dOut.row(r).head(vt);
                      if (tp.needs_grad(gate)) tp.grad(gate)(r, 0) += dg;
                    }
                  }
                });
}

namespace {

// Target distribution weight of column c.
struct SmoothingWeights {
  double gold;
  double other;
  int begin, end;
};

SmoothingWeights smoothing_for(int gold, SmoothedTarget st) {
  const int n = st.support_end - st.support_begin;
  const bool gold_in = gold >= st.support_begin && gold < st.support_end;
  const int others = n - (gold_in ? 1 : 0);
  const double other = others > 0 ? (1.0 - st.confidence) / others : 0.0;
  return {others > 0 ? st.confidence : 1.0, other, st.support_begin, st.support_end};
}

void check_gold(const Matrix& m, const std::vector<int>& gold, SmoothedTarget st) {
  if (static_cast<Eigen::Index>(gold.size()) != m.rows()) throw Error("loss: gold/rows mismatch");
  if (gold.empty()) throw Error("loss: no target tokens");
  if (st.support_begin < 0 || st.support_end > m.cols() || st.support_begin >= st.support_end) {
    throw Error("loss: bad smoothing support");
  }
  for (int g : gold) {
    if (g < 0 || g >= m.cols()) throw Error("loss: gold id out of range");
  }
}

}  // namespace

double smoothed_nll_row(const RowVector& log_probs, int gold, SmoothedTarget st) {
  const auto w = smoothing_for(gold, st);
  double loss = -w.gold * log_probs(gold);
  for (int c = w.begin; c < w.end; ++c) {
    if (c != gold) loss -= w.other * log_probs(c);
  }
  return loss;
}

Var smoothed_nll_logits(Tape& t, Var logits, const std::vector<int>& gold, SmoothedTarget st) {
  const Matrix& z = t.value(logits);
  check_gold(z, gold, st);
  Matrix logp = z;
  for (Eigen::Index r = 0; r < logp.rows(); ++r) {
    const double mx = logp.row(r).maxCoeff();
    const double lse = mx + std::log((logp.row(r).array() - mx).exp().sum());
    logp.row(r).array() -= lse;
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < logp.rows(); ++r) {
    total += smoothed_nll_row(logp.row(r), gold[static_cast<std::size_t>(r)], st);
  }
  const double n = static_cast<double>(logp.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return t.make(std::move(out), {logits}, [logits, gold, st, n, logp = std::move(logp)](Tape& tp, Var self) {
    const double g = tp.grad(self)(0, 0);
    // d/dz = softmax(z) * sum(q) - q, with sum(q) = 1
    Matrix dz = logp.array().exp();
    for (Eigen::Index r = 0; r < dz.rows(); ++r) {
      const int gd = gold[static_cast<std::size_t>(r)];
      const auto w = smoothing_for(gd, st);
      for (int c = w.begin; c < w.end; ++c) {
        if (c != gd) dz(r, c) -= w.other;
      }
      dz(r, gd) -= w.gold;
    }
    tp.grad(logits) += (g / n) * dz;
  });
}

Var smoothed_nll_probs(Tape& t, Var probs, const std::vector<int>& gold, SmoothedTarget st) {
  const Matrix& p = t.value(probs);
  check_gold(p, gold, st);
  static constexpr double kTiny = 1e-300;
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    RowVector logp = p.row(r).array().max(kTiny).log();
    total += smoothed_nll_row(logp, gold[static_cast<std::size_t>(r)], st);
  }
  const double n = static_cast<double>(p.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return t.make(std::move(out), {probs}, [probs, gold, st, n](Tape& tp, Var self) {
    const double g = tp.grad(self)(0, 0) / n;
    const Matrix& p = tp.value(probs);
    Matrix& dp = tp.grad(probs);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const int gd = gold[static_cast<std::size_t>(r)];
      const auto w = smoothing_for(gd, st);
      for (int c = w.begin; c < w.end; ++c) {
        if (c != gd) dp(r, c) -= g * w.other / std::max(p(r, c), kTiny);
      }
      dp(r, gd) -= g * w.gold / std::max(p(r, gd), kTiny);
    }
  });
}

}  // namespace csmt::ag
