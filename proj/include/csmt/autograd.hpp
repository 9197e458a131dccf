#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace csmt {
class Rng;
}

namespace csmt::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// Trainable tensor. `grad` has the shape of `value` and accumulates.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order and the
/// backward pass visits them in reverse; a node's backward closure reads
/// its own gradient and accumulates into its parents'.
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// No copy; gradients go straight into p.grad.
  Var param(Parameter& p);
  /// Read-only parameter for tapes without gradients.
  Var param(const Parameter& p);
  /// Adds a computed node; `fn` runs only if some parent needs a gradient.
  Var make(Matrix value, std::initializer_list<Var> parents, Backward fn);
  /// A node whose gradient is consumed by an earlier node's closure.
  Var make_side_output(Matrix value, Var owner);

  const Matrix& value(Var v) const;
  /// Gradient buffer, zero-initialised on first use.
  Matrix& grad(Var v);
  bool has_grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs all closures.
  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    Backward backward;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

/// Row offsets of the sequences stacked into one matrix: sequence b owns
/// rows [offsets[b], offsets[b+1]).
struct Segments {
  std::vector<int> offsets{0};

  void push(int length) { offsets.push_back(offsets.back() + length); }
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int begin(int b) const { return offsets[static_cast<std::size_t>(b)]; }
  int length(int b) const {
    return offsets[static_cast<std::size_t>(b) + 1] - offsets[static_cast<std::size_t>(b)];
  }
  int total() const { return offsets.back(); }
  int max_length() const;
};

// Elementwise and linear algebra --------------------------------------------

Var matmul(Tape& t, Var a, Var b);
/// x * w + b, with b a 1 x n row broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var add_constant(Tape& t, Var a, const Matrix& c);
Var scale(Tape& t, Var a, double s);
Var sigmoid(Tape& t, Var a);
Var swish(Tape& t, Var a);
Var relu(Tape& t, Var a);
/// Inverted dropout; identity when p == 0.
Var dropout(Tape& t, Var a, double p, Rng& rng);
/// Row-wise layer normalisation with 1 x d gain and bias.
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-6);

/// Row k of the result is row refs[k].second of tables[refs[k].first].
Var gather_rows(Tape& t, const std::vector<Var>& tables,
                const std::vector<std::pair<int, int>>& refs);

Var softmax_rows(Tape& t, Var logits);

// Attention -----------------------------------------------------------------

struct AttentionOutput {
  Var context;  // Nq x d, heads concatenated
  Var weights;  // Nq x max_k, head-averaged (only if requested)
};

/// Scaled dot-product multi-head attention between per-sequence blocks of
/// Q (queries) and K/V (keys/values). With `causal`, query i of a sequence
/// sees keys 0..i of the same sequence.
AttentionOutput attention(Tape& t, Var q, Var k, Var v, const Segments& q_seg,
                          const Segments& k_seg, int heads, bool causal,
                          bool want_weights);

/// Row r of the result is sum_i alpha[r, i] * h[offset(b) + i] for the
/// sequence b that query row r belongs to.
Var weighted_context(Tape& t, Var alpha, Var h, const Segments& q_seg, const Segments& k_seg);

// Output layers -------------------------------------------------------------

/// Copy/generate mixture: P = (1 - g) * P_copy + g * P_predict, where P_copy
/// puts alpha[r, i] on column types[b][i]. Output has `width` columns; the
/// first pred.cols() columns are the target vocabulary.
Var pointer_mixture(Tape& t, Var pred, Var gate, Var alpha, const Segments& q_seg,
                    const std::vector<std::vector<int>>& types, int width);

/// Label-smoothed negative log-likelihood, averaged over rows. The gold
/// column gets `confidence`; the rest of the mass is spread evenly over the
/// other columns of [support_begin, support_end).
struct SmoothedTarget {
  double confidence = 0.9;
  int support_begin = 0;
  int support_end = 0;
};

Var smoothed_nll_logits(Tape& t, Var logits, const std::vector<int>& gold, SmoothedTarget st);
Var smoothed_nll_probs(Tape& t, Var probs, const std::vector<int>& gold, SmoothedTarget st);

/// Reference value of the smoothed loss for one row of log-probabilities.
double smoothed_nll_row(const RowVector& log_probs, int gold, SmoothedTarget st);

}  // namespace csmt::ag
