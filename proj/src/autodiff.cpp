#include "vgcm/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace vgcm::ad {

namespace {

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw std::logic_error("vars from different graphs");
  return *a.graph;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Mat& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::constant(Mat v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr});
  return Var{this, size() - 1};
}

Var Graph::param(Tensor& t) {
  Tensor* tp = &t;
  nodes_.push_back(Node{t.value, {}, nullptr});
  Var out{this, size() - 1};
  int id = out.id;
  nodes_[id].backward = [id, tp](Graph& g) { tp->grad += g.grad_of(id); };
  return out;
}

Var Graph::make(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr});
  return Var{this, size() - 1};
}

void Graph::set_backward(Var v, std::function<void(Graph&)> fn) {
  nodes_[v.id].backward = std::move(fn);
}

void Graph::backward(Var loss) {
  assert(loss.graph == this);
  const Node& ln = nodes_[loss.id];
  if (ln.value.rows() != 1 || ln.value.cols() != 1)
    throw std::logic_error("backward expects a scalar node");
  grad(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() > 0) n.backward(*this);
  }
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Var out = g.make(g.value(a) + g.value(b));
  g.set_backward(out, [out, a, b](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    gg.grad(a.id) += go;
    gg.grad(b.id) += go;
  });
  return out;
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Var out = g.make(g.value(a) - g.value(b));
  g.set_backward(out, [out, a, b](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    gg.grad(a.id) += go;
    gg.grad(b.id) -= go;
  });
  return out;
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  Var out = g.make(g.value(a) * s);
  g.set_backward(out, [out, a, s](Graph& gg) {
    gg.grad(a.id) += gg.grad_of(out.id) * s;
  });
  return out;
}

Var hadamard(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Var out = g.make(g.value(a).cwiseProduct(g.value(b)));
  g.set_backward(out, [out, a, b](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    gg.grad(a.id) += go.cwiseProduct(gg.value(b));
    gg.grad(b.id) += go.cwiseProduct(gg.value(a));
  });
  return out;
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Var out = g.make(g.value(a) * g.value(b));
  g.set_backward(out, [out, a, b](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    gg.grad(a.id) += go * gg.value(b).transpose();
    gg.grad(b.id) += gg.value(a).transpose() * go;
  });
  return out;
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Var out = g.make(g.value(a) * g.value(b).transpose());
  g.set_backward(out, [out, a, b](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    gg.grad(a.id) += go * gg.value(b);
    gg.grad(b.id) += go.transpose() * gg.value(a);
  });
  return out;
}

Var add_rowvec(Var x, Var v) {
  Graph& g = graph_of(x, v);
  Mat out = g.value(x);
  out.rowwise() += g.value(v).row(0);
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x, v](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    gg.grad(x.id) += go;
    gg.grad(v.id) += go.colwise().sum();
  });
  return o;
}

Var softmax_rows(Var x) {
  Graph& g = *x.graph;
  Mat v = g.value(x);
  for (int r = 0; r < v.rows(); ++r) {
    double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  Var out = g.make(std::move(v));
  g.set_backward(out, [out, x](Graph& gg) {
    const Mat& go = gg.grad_of(out.id);
    const Mat& s = gg.value(out);
    Mat& gx = gg.grad(x.id);
    for (int r = 0; r < s.rows(); ++r) {
      double dot = go.row(r).dot(s.row(r));
      gx.row(r) += (go.row(r).array() - dot).matrix().cwiseProduct(s.row(r));
    }
  });
  return out;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = *x.graph;
  const Mat& xv = g.value(x);
  int rows = static_cast<int>(xv.rows());
  int cols = static_cast<int>(xv.cols());
  Mat normed(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    double mean = xv.row(r).mean();
    double var = (xv.row(r).array() - mean).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    normed.row(r) = (xv.row(r).array() - mean) * is;
  }
  Mat out = normed;
  for (int r = 0; r < rows; ++r)
    out.row(r) = out.row(r).cwiseProduct(g.value(gamma).row(0)) +
                 g.value(beta).row(0);
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x, gamma, beta, normed, inv_std](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    const Mat& gm = gg.value(gamma);
    int rows = static_cast<int>(go.rows());
    int cols = static_cast<int>(go.cols());
    Mat& gx = gg.grad(x.id);
    Mat& ggm = gg.grad(gamma.id);
    Mat& gbt = gg.grad(beta.id);
    for (int r = 0; r < rows; ++r) {
      Eigen::RowVectorXd dnorm = go.row(r).cwiseProduct(gm.row(0));
      double mean_dnorm = dnorm.mean();
      double mean_dnorm_n = dnorm.cwiseProduct(normed.row(r)).mean();
      gx.row(r) += ((dnorm.array() - mean_dnorm -
                     normed.row(r).array() * mean_dnorm_n) *
                    inv_std(r))
                       .matrix();
      ggm.row(0) += go.row(r).cwiseProduct(normed.row(r));
      gbt.row(0) += go.row(r);
    }
    (void)cols;
  });
  return o;
}

Var gelu(Var x) {
  Graph& g = *x.graph;
  const Mat& xv = g.value(x);
  Mat out(xv.rows(), xv.cols());
  for (int i = 0; i < xv.size(); ++i) {
    double v = xv(i);
    double t = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
    out(i) = 0.5 * v * (1.0 + t);
  }
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    const Mat& xv = gg.value(x);
    Mat& gx = gg.grad(x.id);
    for (int i = 0; i < xv.size(); ++i) {
      double v = xv(i);
      double u = kGeluC * (v + 0.044715 * v * v * v);
      double t = std::tanh(u);
      double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
      double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      gx(i) += go(i) * d;
    }
  });
  return o;
}

Var sigmoid(Var x) {
  Graph& g = *x.graph;
  const Mat& xv = g.value(x);
  Mat out = xv.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    const Mat& s = gg.value(o);
    gg.grad(x.id) +=
        go.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  });
  return o;
}

Var slice_rows(Var x, int r0, int n) {
  Graph& g = *x.graph;
  Var out = g.make(g.value(x).middleRows(r0, n));
  g.set_backward(out, [out, x, r0, n](Graph& gg) {
    gg.grad(x.id).middleRows(r0, n) += gg.grad_of(out.id);
  });
  return out;
}

Var slice_cols(Var x, int c0, int n) {
  Graph& g = *x.graph;
  Var out = g.make(g.value(x).middleCols(c0, n));
  g.set_backward(out, [out, x, c0, n](Graph& gg) {
    gg.grad(x.id).middleCols(c0, n) += gg.grad_of(out.id);
  });
  return out;
}

Var vstack(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::logic_error("vstack of nothing");
  Graph& g = *xs.front().graph;
  int rows = 0;
  int cols = static_cast<int>(g.value(xs[0]).cols());
  for (Var v : xs) rows += static_cast<int>(g.value(v).rows());
  Mat out(rows, cols);
  int r = 0;
  for (Var v : xs) {
    int n = static_cast<int>(g.value(v).rows());
    out.middleRows(r, n) = g.value(v);
    r += n;
  }
  Var o = g.make(std::move(out));
  std::vector<Var> parts = xs;
  g.set_backward(o, [o, parts](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    int r = 0;
    for (Var v : parts) {
      int n = static_cast<int>(gg.value(v).rows());
      gg.grad(v.id) += go.middleRows(r, n);
      r += n;
    }
  });
  return o;
}

Var hstack(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::logic_error("hstack of nothing");
  Graph& g = *xs.front().graph;
  int cols = 0;
  int rows = static_cast<int>(g.value(xs[0]).rows());
  for (Var v : xs) cols += static_cast<int>(g.value(v).cols());
  Mat out(rows, cols);
  int c = 0;
  for (Var v : xs) {
    int n = static_cast<int>(g.value(v).cols());
    out.middleCols(c, n) = g.value(v);
    c += n;
  }
  Var o = g.make(std::move(out));
  std::vector<Var> parts = xs;
  g.set_backward(o, [o, parts](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    int c = 0;
    for (Var v : parts) {
      int n = static_cast<int>(gg.value(v).cols());
      gg.grad(v.id) += go.middleCols(c, n);
      c += n;
    }
  });
  return o;
}

Var flatten_row(Var x) {
  Graph& g = *x.graph;
  const Mat& xv = g.value(x);
  int rows = static_cast<int>(xv.rows());
  int cols = static_cast<int>(xv.cols());
  Mat out(1, rows * cols);
  for (int r = 0; r < rows; ++r) out.block(0, r * cols, 1, cols) = xv.row(r);
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x, rows, cols](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    Mat& gx = gg.grad(x.id);
    for (int r = 0; r < rows; ++r)
      gx.row(r) += go.block(0, r * cols, 1, cols);
  });
  return o;
}

Var mean_rows_weighted(Var x, const Eigen::VectorXd& w) {
  Graph& g = *x.graph;
  const Mat& xv = g.value(x);
  double total = w.sum();
  if (total <= 0.0) throw std::logic_error("weighted mean with zero weight");
  Mat out = (w.transpose() * xv) / total;
  Var o = g.make(std::move(out));
  Eigen::VectorXd wc = w;
  g.set_backward(o, [o, x, wc, total](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    gg.grad(x.id) += (wc / total) * go;
  });
  return o;
}

Var sum_all(Var x) {
  Graph& g = *x.graph;
  Mat out(1, 1);
  out(0, 0) = g.value(x).sum();
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, x](Graph& gg) {
    double go = gg.grad_of(o.id)(0, 0);
    gg.grad(x.id).array() += go;
  });
  return o;
}

Var mean_all(Var x) {
  Graph& g = *x.graph;
  double n = static_cast<double>(g.value(x).size());
  return scale(sum_all(x), 1.0 / n);
}

Var mse(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Mat& av = g.value(a);
  const Mat& bv = g.value(b);
  double n = static_cast<double>(av.size());
  Mat out(1, 1);
  out(0, 0) = (av - bv).squaredNorm() / n;
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, a, b, n](Graph& gg) {
    double go = gg.grad_of(o.id)(0, 0);
    Mat d = (gg.value(a) - gg.value(b)) * (2.0 / n) * go;
    gg.grad(a.id) += d;
    gg.grad(b.id) -= d;
  });
  return o;
}

Var bce_with_logits(Var logit, double target) {
  Graph& g = *logit.graph;
  double z = g.value(logit)(0, 0);
  // max(z,0) - y*z + log(1 + exp(-|z|)) is the stable form
  double loss = std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::abs(z)));
  Mat out(1, 1);
  out(0, 0) = loss;
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, logit, target](Graph& gg) {
    double go = gg.grad_of(o.id)(0, 0);
    double z = gg.value(logit)(0, 0);
    double s = 1.0 / (1.0 + std::exp(-z));
    gg.grad(logit.id)(0, 0) += go * (s - target);
  });
  return o;
}

Var label_smoothed_ce(Var logits, const std::vector<int>& targets,
                      const std::vector<int>& valid, double epsilon) {
  Graph& g = *logits.graph;
  const Mat& lv = g.value(logits);
  int rows = static_cast<int>(lv.rows());
  int vocab = static_cast<int>(lv.cols());
  if (static_cast<int>(targets.size()) != rows ||
      static_cast<int>(valid.size()) != rows)
    throw std::logic_error("label_smoothed_ce shape mismatch");
  int n_valid = 0;
  for (int f : valid) n_valid += (f != 0);
  if (n_valid == 0) throw std::logic_error("label_smoothed_ce no valid rows");

  // log-softmax rows, accumulate smoothed NLL
  Mat probs(rows, vocab);
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    double m = lv.row(r).maxCoeff();
    Eigen::RowVectorXd e = (lv.row(r).array() - m).exp();
    double s = e.sum();
    probs.row(r) = e / s;
    if (!valid[r]) continue;
    double log_z = std::log(s) + m;
    // smoothed target: (1-eps) on target id, eps/vocab everywhere
    double nll = 0.0;
    for (int c = 0; c < vocab; ++c) {
      double q = epsilon / vocab + ((c == targets[r]) ? (1.0 - epsilon) : 0.0);
      if (q > 0.0) nll -= q * (lv(r, c) - log_z);
    }
    total += nll;
  }
  Mat out(1, 1);
  out(0, 0) = total / n_valid;
  Var o = g.make(std::move(out));
  std::vector<int> t = targets, va = valid;
  g.set_backward(o, [o, logits, probs, t, va, epsilon, n_valid](Graph& gg) {
    double go = gg.grad_of(o.id)(0, 0);
    Mat& gl = gg.grad(logits.id);
    int vocab = static_cast<int>(probs.cols());
    for (int r = 0; r < probs.rows(); ++r) {
      if (!va[r]) continue;
      Eigen::RowVectorXd q =
          Eigen::RowVectorXd::Constant(vocab, epsilon / vocab);
      q(t[r]) += 1.0 - epsilon;
      gl.row(r) += go / n_valid * (probs.row(r) - q);
    }
  });
  return o;
}

Var cosine_similarities(Var q, Var keys) {
  Graph& g = graph_of(q, keys);
  const Mat& qv = g.value(q);
  const Mat& kv = g.value(keys);
  if (qv.rows() != 1 || qv.cols() != kv.cols())
    throw std::logic_error("cosine_similarities shape mismatch");
  int b = static_cast<int>(kv.rows());
  const double eps = 1e-12;
  double qn = std::max(qv.row(0).norm(), eps);
  Mat out(1, b);
  Eigen::VectorXd kn(b);
  for (int i = 0; i < b; ++i) {
    kn(i) = std::max(kv.row(i).norm(), eps);
    out(0, i) = qv.row(0).dot(kv.row(i)) / (qn * kn(i));
  }
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, q, keys, qn, kn](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    const Mat& qv = gg.value(q);
    const Mat& kv = gg.value(keys);
    const Mat& c = gg.value(o);
    Mat& gq = gg.grad(q.id);
    Mat& gk = gg.grad(keys.id);
    for (int i = 0; i < kv.rows(); ++i) {
      double gi = go(0, i);
      if (gi == 0.0) continue;
      gq.row(0) +=
          gi * (kv.row(i) / (qn * kn(i)) - c(0, i) * qv.row(0) / (qn * qn));
      gk.row(i) +=
          gi * (qv.row(0) / (qn * kn(i)) - c(0, i) * kv.row(i) / (kn(i) * kn(i)));
    }
  });
  return o;
}

Var softmax_xent_row(Var scores, int target) {
  Graph& g = *scores.graph;
  const Mat& sv = g.value(scores);
  if (sv.rows() != 1) throw std::logic_error("softmax_xent_row expects a row");
  double m = sv.row(0).maxCoeff();
  Eigen::RowVectorXd e = (sv.row(0).array() - m).exp();
  double z = e.sum();
  Eigen::RowVectorXd p = e / z;
  Mat out(1, 1);
  out(0, 0) = -(sv(0, target) - m - std::log(z));
  Var o = g.make(std::move(out));
  g.set_backward(o, [o, scores, p, target](Graph& gg) {
    double go = gg.grad_of(o.id)(0, 0);
    Eigen::RowVectorXd d = p;
    d(target) -= 1.0;
    gg.grad(scores.id).row(0) += go * d;
  });
  return o;
}

Var embedding(Graph& g, Tensor& table, const std::vector<int>& ids) {
  int d = static_cast<int>(table.value.cols());
  Mat out(static_cast<int>(ids.size()), d);
  for (size_t r = 0; r < ids.size(); ++r) {
    int id = ids[r];
    if (id < 0 || id >= table.value.rows())
      throw std::logic_error("embedding id out of range");
    out.row(static_cast<int>(r)) = table.value.row(id);
  }
  Var o = g.make(std::move(out));
  Tensor* tp = &table;
  std::vector<int> idc = ids;
  g.set_backward(o, [o, tp, idc](Graph& gg) {
    const Mat& go = gg.grad_of(o.id);
    for (size_t r = 0; r < idc.size(); ++r)
      tp->grad.row(idc[r]) += go.row(static_cast<int>(r));
  });
  return o;
}

Var apply_mask(Var x, const Mat& mask) {
  Graph& g = *x.graph;
  Var o = g.make(g.value(x).cwiseProduct(mask));
  Mat m = mask;
  g.set_backward(o, [o, x, m](Graph& gg) {
    gg.grad(x.id) += gg.grad_of(o.id).cwiseProduct(m);
  });
  return o;
}

Var linear(Var x, Tensor& w, Tensor& b) {
  Graph& g = *x.graph;
  return add_rowvec(matmul(x, g.param(w)), g.param(b));
}

Var multihead_attention(const AttnWeights& w, Var q_in, Var kv_in,
                        int n_heads) {
  Graph& g = *q_in.graph;
  Var q = linear(q_in, *w.wq, *w.bq);
  Var k = linear(kv_in, *w.wk, *w.bk);
  Var v = linear(kv_in, *w.wv, *w.bv);
  int d = static_cast<int>(g.value(q).cols());
  if (d % n_heads != 0) throw std::logic_error("model_dim % n_heads != 0");
  int dh = d / n_heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var att = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    heads.push_back(matmul(att, vh));
  }
  return linear(hstack(heads), *w.wo, *w.bo);
}

}  // namespace vgcm::ad
