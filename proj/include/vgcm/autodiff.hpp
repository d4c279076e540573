#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace vgcm::ad {

using Mat = Eigen::MatrixXd;

/// A named parameter tensor with its gradient and optimizer slots.
/// Values are double precision throughout so analytic gradients can be
/// validated against central finite differences.
struct Tensor {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Tensor(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        adam_m(Mat::Zero(rows, cols)),
        adam_v(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

class Graph;

/// Lightweight handle to a node in a Graph tape.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
};

/// Dynamic reverse-mode tape. One Graph is built per forward pass (or per
/// training batch) and discarded afterwards; parameters live outside the
/// tape in Tensor objects and accumulate gradients across backward calls.
class Graph {
 public:
  struct Node {
    Mat value;
    Mat grad;  // lazily allocated; empty means "no gradient reached here"
    std::function<void(Graph&)> backward;  // null for leaves
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient accumulator for a node, allocated (zero) on first use.
  Mat& grad(int id);
  /// Read-only gradient of a node that is known to have one.
  const Mat& grad_of(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

  /// Constant leaf; no gradient is tracked.
  Var constant(Mat v);
  /// Parameter leaf; backward accumulates into t.grad.
  Var param(Tensor& t);

  Var make(Mat value);
  void set_backward(Var v, std::function<void(Graph&)> fn);

  /// Run reverse accumulation from a scalar (1x1) node.
  void backward(Var loss);

 private:
  std::deque<Node> nodes_;
};

// ---- primitive ops ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add_rowvec(Var x, Var v);  // x + replicate(v); v is 1 x cols
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var x);
Var sigmoid(Var x);
Var slice_rows(Var x, int r0, int n);
Var slice_cols(Var x, int c0, int n);
Var vstack(const std::vector<Var>& xs);
Var hstack(const std::vector<Var>& xs);
Var flatten_row(Var x);  // (m x n) -> (1 x m*n), row-major
Var mean_rows_weighted(Var x, const Eigen::VectorXd& w);  // (1 x cols)
Var sum_all(Var x);   // 1x1
Var mean_all(Var x);  // 1x1

/// Mean squared error over all entries of two same-shape matrices; 1x1.
Var mse(Var a, Var b);
/// Binary cross entropy on a single logit (1x1) against a 0/1 target; 1x1.
Var bce_with_logits(Var logit, double target);
/// Label-smoothed cross entropy of per-row token logits against target ids.
/// Rows with valid[i]==0 are ignored; mean over valid rows. 1x1.
Var label_smoothed_ce(Var logits, const std::vector<int>& targets,
                      const std::vector<int>& valid, double epsilon);
/// Row of cosine similarities between a query (1 x d) and keys (B x d); 1 x B.
Var cosine_similarities(Var q, Var keys);
/// Softmax cross entropy of a score row (1 x B) against index `target`; 1x1.
Var softmax_xent_row(Var scores, int target);
/// Row-gather from an embedding table; backward scatter-adds into the table.
Var embedding(Graph& g, Tensor& table, const std::vector<int>& ids);
/// Multiplies by a constant elementwise mask (training-time dropout).
Var apply_mask(Var x, const Mat& mask);

// ---- composite helpers ----
Var linear(Var x, Tensor& w, Tensor& b);  // x * w + b

/// Multi-head attention weight block.
struct AttnWeights {
  Tensor* wq;
  Tensor* bq;
  Tensor* wk;
  Tensor* bk;
  Tensor* wv;
  Tensor* bv;
  Tensor* wo;
  Tensor* bo;
};

/// Standard scaled dot-product multi-head attention. Query rows come from
/// `q_in`, keys and values from `kv_in`.
Var multihead_attention(const AttnWeights& w, Var q_in, Var kv_in,
                        int n_heads);

}  // namespace vgcm::ad
