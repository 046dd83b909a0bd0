#pragma once

#include "basen/types.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

namespace basen {

// Reverse-mode autodiff over dense Eigen matrices. A Graph is a tape built
// per forward pass; free functions below append nodes and backward closures.
// Scalars ride along as 1x1 matrices.
template <typename S>
class Graph {
 public:
  using M = Mat<S>;

  struct Node {
    M value;
    M grad;  // sized lazily
    bool needs_grad = false;
  };

  int add_node(M value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), M(), needs_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void add_backward(std::function<void()> fn) { tape_.push_back(std::move(fn)); }

  const M& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  M& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.size() != 0; }

  // Seeds d(out)/d(out) = 1 and runs the tape in reverse. `out` must be 1x1.
  void backward(int out_id) {
    grad(out_id).setConstant(S(1));
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;  // deque keeps value() references stable while ops append
  std::vector<std::function<void()>> tape_;
};

template <typename S>
class Var {
 public:
  Var() = default;
  Var(Graph<S>* g, int id) : g_(g), id_(id) {}

  const Mat<S>& val() const { return g_->value(id_); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
  int id() const { return id_; }
  Graph<S>* graph() const { return g_; }
  bool valid() const { return g_ != nullptr; }
  bool needs_grad() const { return g_->needs_grad(id_); }
  const Mat<S>& grad() const { return g_->grad(id_); }

 private:
  Graph<S>* g_ = nullptr;
  int id_ = -1;
};

// --- leaf creation -----------------------------------------------------------

template <typename S>
Var<S> constant(Graph<S>& g, Mat<S> value) {
  return Var<S>(&g, g.add_node(std::move(value), false));
}

template <typename S>
Var<S> leaf(Graph<S>& g, Mat<S> value, bool needs_grad = true) {
  return Var<S>(&g, g.add_node(std::move(value), needs_grad));
}

template <typename S>
Var<S> scalar_const(Graph<S>& g, S value) {
  Mat<S> m(1, 1);
  m(0, 0) = value;
  return constant(g, std::move(m));
}

// --- elementwise -------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  const int out = g.add_node(a.val() + b.val(), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      if (a.needs_grad()) g.grad(a.id()) += g.grad(out);
      if (b.needs_grad()) g.grad(b.id()) += g.grad(out);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  const int out = g.add_node(a.val() - b.val(), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      if (a.needs_grad()) g.grad(a.id()) += g.grad(out);
      if (b.needs_grad()) g.grad(b.id()) -= g.grad(out);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> cwise_mul(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  const int out = g.add_node((a.val().array() * b.val().array()).matrix(), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      if (a.needs_grad())
        g.grad(a.id()).array() += g.grad(out).array() * b.val().array();
      if (b.needs_grad())
        g.grad(b.id()).array() += g.grad(out).array() * a.val().array();
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node(a.val() * c, ng);
  if (ng) {
    g.add_backward([&g, a, c, out] { g.grad(a.id()) += g.grad(out) * c; });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> add_const(Var<S> a, const Mat<S>& m) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node(a.val() + m, ng);
  if (ng) {
    g.add_backward([&g, a, out] { g.grad(a.id()) += g.grad(out); });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> add_scalar(Var<S> a, S c) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node((a.val().array() + c).matrix(), ng);
  if (ng) {
    g.add_backward([&g, a, out] { g.grad(a.id()) += g.grad(out); });
  }
  return Var<S>(&g, out);
}

// --- matrix products and reshapes ---------------------------------------------

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  Mat<S> v;
  v.noalias() = a.val() * b.val();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      const Mat<S>& go = g.grad(out);
      if (a.needs_grad()) g.grad(a.id()).noalias() += go * b.val().transpose();
      if (b.needs_grad()) g.grad(b.id()).noalias() += a.val().transpose() * go;
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node(a.val().transpose(), ng);
  if (ng) {
    g.add_backward([&g, a, out] { g.grad(a.id()) += g.grad(out).transpose(); });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index r0, Eigen::Index nrows) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node(a.val().middleRows(r0, nrows), ng);
  if (ng) {
    g.add_backward([&g, a, r0, nrows, out] {
      g.grad(a.id()).middleRows(r0, nrows) += g.grad(out);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  Graph<S>& g = *parts.front().graph();
  Eigen::Index total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    total += p.rows();
    ng = ng || p.needs_grad();
  }
  Mat<S> v(total, parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.val();
    r += p.rows();
  }
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    auto parts_copy = parts;
    g.add_backward([&g, parts_copy, out] {
      Eigen::Index rr = 0;
      for (const auto& p : parts_copy) {
        if (p.needs_grad()) g.grad(p.id()) += g.grad(out).middleRows(rr, p.rows());
        rr += p.rows();
      }
    });
  }
  return Var<S>(&g, out);
}

// C x T -> (C*T) x 1, time-major within each channel block kept column-major
template <typename S>
Var<S> flatten_to_col(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v = a.val();
  v.resize(a.rows() * a.cols(), 1);
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    const Eigen::Index r = a.rows(), c = a.cols();
    g.add_backward([&g, a, r, c, out] {
      Mat<S> gv = g.grad(out);
      gv.resize(r, c);
      g.grad(a.id()) += gv;
    });
  }
  return Var<S>(&g, out);
}

// --- broadcasts over rows (channel-wise gain/bias) -----------------------------

// y(r, :) = x(r, :) * gain(r)
template <typename S>
Var<S> scale_rows(Var<S> x, Var<S> gain) {
  Graph<S>& g = *x.graph();
  const bool ng = x.needs_grad() || gain.needs_grad();
  Mat<S> v = x.val().array().colwise() * gain.val().col(0).array();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, gain, out] {
      const Mat<S>& go = g.grad(out);
      if (x.needs_grad())
        g.grad(x.id()).array() += go.array().colwise() * gain.val().col(0).array();
      if (gain.needs_grad())
        g.grad(gain.id()).col(0) += (go.array() * x.val().array()).rowwise().sum().matrix();
    });
  }
  return Var<S>(&g, out);
}

// y(r, :) = x(r, :) + bias(r)
template <typename S>
Var<S> add_rows(Var<S> x, Var<S> bias) {
  Graph<S>& g = *x.graph();
  const bool ng = x.needs_grad() || bias.needs_grad();
  Mat<S> v = x.val().array().colwise() + bias.val().col(0).array();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, bias, out] {
      const Mat<S>& go = g.grad(out);
      if (x.needs_grad()) g.grad(x.id()) += go;
      if (bias.needs_grad()) g.grad(bias.id()).col(0) += go.rowwise().sum();
    });
  }
  return Var<S>(&g, out);
}

// --- nonlinearities -------------------------------------------------------------

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Graph<S>& g = *x.graph();
  const bool ng = x.needs_grad();
  Mat<S> v = ((-x.val().array()).exp() + S(1)).inverse().matrix();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, out] {
      const auto y = g.value(out).array();
      g.grad(x.id()).array() += g.grad(out).array() * y * (S(1) - y);
    });
  }
  return Var<S>(&g, out);
}

// PReLU with a single learnable slope (1x1 parameter).
template <typename S>
Var<S> prelu(Var<S> x, Var<S> slope) {
  Graph<S>& g = *x.graph();
  const bool ng = x.needs_grad() || slope.needs_grad();
  const S a = slope.val()(0, 0);
  Mat<S> v = x.val().array().max(S(0)).matrix() + a * x.val().array().min(S(0)).matrix();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, slope, out] {
      const S aa = slope.val()(0, 0);
      const auto xin = x.val().array();
      const auto go = g.grad(out).array();
      if (x.needs_grad())
        g.grad(x.id()).array() += go * (xin > S(0)).template cast<S>() +
                                  go * aa * (xin <= S(0)).template cast<S>();
      if (slope.needs_grad())
        g.grad(slope.id())(0, 0) += (go * xin.min(S(0))).sum();
    });
  }
  return Var<S>(&g, out);
}

// Row-wise softmax with optional inverse temperature folded in by the caller.
template <typename S>
Var<S> softmax_rows(Var<S> x) {
  Graph<S>& g = *x.graph();
  const bool ng = x.needs_grad();
  Mat<S> v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.val().row(r).array();
    const S mx = row.maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (row - mx).exp();
    v.row(r) = (e / e.sum()).matrix();
  }
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, out] {
      const Mat<S>& y = g.value(out);
      const Mat<S>& go = g.grad(out);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S dotp = (go.row(r).array() * y.row(r).array()).sum();
        g.grad(x.id()).row(r).array() +=
            y.row(r).array() * (go.row(r).array() - dotp);
      }
    });
  }
  return Var<S>(&g, out);
}

// --- normalization ----------------------------------------------------------------

// Normalizes each channel group (rows within a group, all frames) to zero
// mean and unit variance. Affine gain/bias live outside as scale_rows/add_rows.
template <typename S>
Var<S> group_norm_core(Var<S> x, int groups, S eps = S(1e-5)) {
  Graph<S>& g = *x.graph();
  const Eigen::Index c = x.rows(), t = x.cols();
  if (groups < 1 || c % groups != 0)
    throw std::invalid_argument("group_norm_core: channel count not divisible by groups");
  const Eigen::Index per = c / groups;
  const bool ng = x.needs_grad();

  Mat<S> v(c, t);
  std::vector<S> inv_std(static_cast<size_t>(groups));
  for (int gr = 0; gr < groups; ++gr) {
    const auto block = x.val().middleRows(gr * per, per).array();
    const S n = static_cast<S>(per * t);
    const S mu = block.sum() / n;
    const S var = (block - mu).square().sum() / n;
    const S is = S(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(gr)] = is;
    v.middleRows(gr * per, per) = ((block - mu) * is).matrix();
  }
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, out, groups, per, t, inv_std] {
      const Mat<S>& y = g.value(out);
      const Mat<S>& go = g.grad(out);
      const S n = static_cast<S>(per * t);
      for (int gr = 0; gr < groups; ++gr) {
        const auto yb = y.middleRows(gr * per, per).array();
        const auto gob = go.middleRows(gr * per, per).array();
        const S mean_g = gob.sum() / n;
        const S mean_gy = (gob * yb).sum() / n;
        g.grad(x.id()).middleRows(gr * per, per).array() +=
            inv_std[static_cast<size_t>(gr)] * (gob - mean_g - yb * mean_gy);
      }
    });
  }
  return Var<S>(&g, out);
}

// --- reductions and scalar algebra ---------------------------------------------

template <typename S>
Var<S> sumsq(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = a.val().array().square().sum();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, out] {
      g.grad(a.id()) += S(2) * g.grad(out)(0, 0) * a.val();
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> dot(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = (a.val().array() * b.val().array()).sum();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      const S go = g.grad(out)(0, 0);
      if (a.needs_grad()) g.grad(a.id()) += go * b.val();
      if (b.needs_grad()) g.grad(b.id()) += go * a.val();
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = a.val().sum();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, out] {
      g.grad(a.id()).array() += g.grad(out)(0, 0);
    });
  }
  return Var<S>(&g, out);
}

// out = s * m, s a 1x1 var
template <typename S>
Var<S> scalar_times_mat(Var<S> s, Var<S> m) {
  Graph<S>& g = *s.graph();
  const bool ng = s.needs_grad() || m.needs_grad();
  const int out = g.add_node(s.val()(0, 0) * m.val(), ng);
  if (ng) {
    g.add_backward([&g, s, m, out] {
      const Mat<S>& go = g.grad(out);
      if (s.needs_grad()) g.grad(s.id())(0, 0) += (go.array() * m.val().array()).sum();
      if (m.needs_grad()) g.grad(m.id()) += s.val()(0, 0) * go;
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> s_mul(Var<S> a, Var<S> b) {
  return scalar_times_mat(a, b);
}

template <typename S>
Var<S> s_div(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad() || b.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = a.val()(0, 0) / b.val()(0, 0);
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, b, out] {
      const S go = g.grad(out)(0, 0);
      const S bv = b.val()(0, 0);
      if (a.needs_grad()) g.grad(a.id())(0, 0) += go / bv;
      if (b.needs_grad()) g.grad(b.id())(0, 0) -= go * a.val()(0, 0) / (bv * bv);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> s_log(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = std::log(a.val()(0, 0));
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, out] {
      g.grad(a.id())(0, 0) += g.grad(out)(0, 0) / a.val()(0, 0);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> s_sqrt(Var<S> a) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v(1, 1);
  v(0, 0) = std::sqrt(a.val()(0, 0));
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, out] {
      g.grad(a.id())(0, 0) += g.grad(out)(0, 0) / (S(2) * g.value(out)(0, 0));
    });
  }
  return Var<S>(&g, out);
}

// --- convolutions -----------------------------------------------------------------

struct Conv1dSpec {
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int pad_left = 0;
  int pad_right = 0;

  Eigen::Index out_length(Eigen::Index t) const {
    const Eigen::Index eff = static_cast<Eigen::Index>(dilation) * (kernel - 1) + 1;
    const Eigen::Index padded = t + pad_left + pad_right;
    if (padded < eff) return 0;
    return (padded - eff) / stride + 1;
  }

  static Conv1dSpec same(int kernel, int dilation = 1) {
    Conv1dSpec s;
    s.kernel = kernel;
    s.dilation = dilation;
    const int eff = dilation * (kernel - 1);
    s.pad_left = eff / 2;
    s.pad_right = eff - eff / 2;
    return s;
  }
};

namespace detail {

template <typename S>
Mat<S> im2col(const Mat<S>& x, const Conv1dSpec& sp) {
  const Eigen::Index cin = x.rows(), t = x.cols();
  const Eigen::Index t_out = sp.out_length(t);
  Mat<S> cols = Mat<S>::Zero(cin * sp.kernel, t_out);
  for (Eigen::Index j = 0; j < sp.kernel; ++j) {
    for (Eigen::Index o = 0; o < t_out; ++o) {
      const Eigen::Index src = o * sp.stride + j * sp.dilation - sp.pad_left;
      if (src >= 0 && src < t) cols.block(j * cin, o, cin, 1) = x.col(src);
    }
  }
  return cols;
}

template <typename S>
void col2im_add(Mat<S>& dx, const Mat<S>& dcols, const Conv1dSpec& sp) {
  const Eigen::Index cin = dx.rows(), t = dx.cols();
  const Eigen::Index t_out = dcols.cols();
  for (Eigen::Index j = 0; j < sp.kernel; ++j) {
    for (Eigen::Index o = 0; o < t_out; ++o) {
      const Eigen::Index src = o * sp.stride + j * sp.dilation - sp.pad_left;
      if (src >= 0 && src < t) dx.col(src) += dcols.block(j * cin, o, cin, 1);
    }
  }
}

}  // namespace detail

// Standard 1D convolution. x: Cin x T, w: Cout x (Cin*kernel) with the
// kernel tap as the outer index (tap-major blocks of Cin), bias: Cout x 1.
template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> bias, const Conv1dSpec& sp) {
  Graph<S>& g = *x.graph();
  const Eigen::Index t_out = sp.out_length(x.cols());
  if (t_out <= 0) throw std::invalid_argument("conv1d: input shorter than one window");
  auto cols = std::make_shared<Mat<S>>(detail::im2col(x.val(), sp));
  Mat<S> v;
  v.noalias() = w.val() * (*cols);
  v.array().colwise() += bias.val().col(0).array();
  const bool ng = x.needs_grad() || w.needs_grad() || bias.needs_grad();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, w, bias, out, cols, sp] {
      const Mat<S>& go = g.grad(out);
      if (bias.needs_grad()) g.grad(bias.id()).col(0) += go.rowwise().sum();
      if (w.needs_grad()) g.grad(w.id()).noalias() += go * cols->transpose();
      if (x.needs_grad()) {
        Mat<S> dcols;
        dcols.noalias() = w.val().transpose() * go;
        detail::col2im_add(g.grad(x.id()), dcols, sp);
      }
    });
  }
  return Var<S>(&g, out);
}

// Transposed 1D convolution (adjoint of conv1d over the same spec).
// x: Cin x T, w: (Cout*kernel) x Cin, bias: Cout x 1. Output length is
// (T-1)*stride + kernel - pad_left - pad_right.
template <typename S>
Var<S> tconv1d(Var<S> x, Var<S> w, Var<S> bias, const Conv1dSpec& sp) {
  Graph<S>& g = *x.graph();
  const Eigen::Index t = x.cols();
  const Eigen::Index cout = bias.rows();
  const Eigen::Index full_len = (t - 1) * sp.stride + sp.kernel;
  const Eigen::Index out_len = full_len - sp.pad_left - sp.pad_right;
  if (out_len <= 0) throw std::invalid_argument("tconv1d: empty output");

  Mat<S> cols;
  cols.noalias() = w.val() * x.val();  // (Cout*kernel) x T
  Mat<S> full = Mat<S>::Zero(cout, full_len);
  for (Eigen::Index j = 0; j < sp.kernel; ++j)
    for (Eigen::Index i = 0; i < t; ++i)
      full.col(i * sp.stride + j) += cols.block(j * cout, i, cout, 1);
  Mat<S> v = full.middleCols(sp.pad_left, out_len);
  v.array().colwise() += bias.val().col(0).array();
  const bool ng = x.needs_grad() || w.needs_grad() || bias.needs_grad();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, w, bias, out, sp, cout, full_len, t] {
      const Mat<S>& go = g.grad(out);
      if (bias.needs_grad()) g.grad(bias.id()).col(0) += go.rowwise().sum();
      Mat<S> dfull = Mat<S>::Zero(cout, full_len);
      dfull.middleCols(sp.pad_left, go.cols()) = go;
      Mat<S> dcols(cout * sp.kernel, t);
      for (Eigen::Index j = 0; j < sp.kernel; ++j)
        for (Eigen::Index i = 0; i < t; ++i)
          dcols.block(j * cout, i, cout, 1) = dfull.col(i * sp.stride + j);
      if (w.needs_grad()) g.grad(w.id()).noalias() += dcols * x.val().transpose();
      if (x.needs_grad()) g.grad(x.id()).noalias() += w.val().transpose() * dcols;
    });
  }
  return Var<S>(&g, out);
}

// Depthwise 1D convolution: each channel filtered by its own kernel row.
// x: C x T, w: C x kernel, bias: C x 1. Stride 1 only.
template <typename S>
Var<S> depthwise_conv1d(Var<S> x, Var<S> w, Var<S> bias, const Conv1dSpec& sp) {
  Graph<S>& g = *x.graph();
  if (sp.stride != 1)
    throw std::invalid_argument("depthwise_conv1d: stride must be 1");
  const Eigen::Index c = x.rows(), t = x.cols();
  const Eigen::Index t_out = sp.out_length(t);
  if (t_out <= 0) throw std::invalid_argument("depthwise_conv1d: input shorter than one window");
  Mat<S> v = Mat<S>::Zero(c, t_out);
  for (Eigen::Index j = 0; j < sp.kernel; ++j) {
    const Eigen::Index shift = j * sp.dilation - sp.pad_left;
    const Eigen::Index o_lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index o_hi = std::min<Eigen::Index>(t_out, t - shift);
    if (o_hi <= o_lo) continue;
    v.middleCols(o_lo, o_hi - o_lo).array() +=
        x.val().middleCols(o_lo + shift, o_hi - o_lo).array().colwise() *
        w.val().col(j).array();
  }
  v.array().colwise() += bias.val().col(0).array();
  const bool ng = x.needs_grad() || w.needs_grad() || bias.needs_grad();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, w, bias, out, sp, c, t, t_out] {
      const Mat<S>& go = g.grad(out);
      if (bias.needs_grad()) g.grad(bias.id()).col(0) += go.rowwise().sum();
      for (Eigen::Index j = 0; j < sp.kernel; ++j) {
        const Eigen::Index shift = j * sp.dilation - sp.pad_left;
        const Eigen::Index o_lo = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index o_hi = std::min<Eigen::Index>(t_out, t - shift);
        if (o_hi <= o_lo) continue;
        if (w.needs_grad())
          g.grad(w.id()).col(j) +=
              (go.middleCols(o_lo, o_hi - o_lo).array() *
               x.val().middleCols(o_lo + shift, o_hi - o_lo).array())
                  .rowwise()
                  .sum()
                  .matrix();
        if (x.needs_grad())
          g.grad(x.id()).middleCols(o_lo + shift, o_hi - o_lo).array() +=
              go.middleCols(o_lo, o_hi - o_lo).array().colwise() * w.val().col(j).array();
      }
    });
  }
  return Var<S>(&g, out);
}

// MaxPool over time, kernel 2 stride 2, right-edge replicated to even length.
template <typename S>
Var<S> maxpool1d_halve(Var<S> x) {
  Graph<S>& g = *x.graph();
  const Eigen::Index c = x.rows(), t = x.cols();
  const Eigen::Index t_out = (t + 1) / 2;
  Mat<S> v(c, t_out);
  auto argmax = std::make_shared<Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>>(c, t_out);
  for (Eigen::Index o = 0; o < t_out; ++o) {
    const Eigen::Index i0 = 2 * o;
    const Eigen::Index i1 = std::min(i0 + 1, t - 1);
    for (Eigen::Index r = 0; r < c; ++r) {
      if (x.val()(r, i0) >= x.val()(r, i1)) {
        v(r, o) = x.val()(r, i0);
        (*argmax)(r, o) = i0;
      } else {
        v(r, o) = x.val()(r, i1);
        (*argmax)(r, o) = i1;
      }
    }
  }
  const bool ng = x.needs_grad();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, out, argmax] {
      const Mat<S>& go = g.grad(out);
      for (Eigen::Index o = 0; o < go.cols(); ++o)
        for (Eigen::Index r = 0; r < go.rows(); ++r)
          g.grad(x.id())(r, (*argmax)(r, o)) += go(r, o);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index c0, Eigen::Index ncols) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  const int out = g.add_node(a.val().middleCols(c0, ncols), ng);
  if (ng) {
    g.add_backward([&g, a, c0, ncols, out] {
      g.grad(a.id()).middleCols(c0, ncols) += g.grad(out);
    });
  }
  return Var<S>(&g, out);
}

template <typename S>
Var<S> pad_cols(Var<S> a, Eigen::Index left, Eigen::Index right) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v = Mat<S>::Zero(a.rows(), a.cols() + left + right);
  v.middleCols(left, a.cols()) = a.val();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, left, out] {
      g.grad(a.id()) += g.grad(out).middleCols(left, a.cols());
    });
  }
  return Var<S>(&g, out);
}

// Rows of `a` placed into a taller zero matrix starting at row r0.
template <typename S>
Var<S> pad_rows_to(Var<S> a, Eigen::Index total_rows, Eigen::Index r0) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v = Mat<S>::Zero(total_rows, a.cols());
  v.middleRows(r0, a.rows()) = a.val();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, r0, out] {
      g.grad(a.id()) += g.grad(out).middleRows(r0, a.rows());
    });
  }
  return Var<S>(&g, out);
}

// Rows of `a` scattered to arbitrary destination rows (duplicates accumulate).
template <typename S>
Var<S> scatter_rows_to(Var<S> a, Eigen::Index total_rows,
                       const std::vector<Eigen::Index>& dest) {
  Graph<S>& g = *a.graph();
  const bool ng = a.needs_grad();
  Mat<S> v = Mat<S>::Zero(total_rows, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) v.row(dest[static_cast<size_t>(r)]) += a.val().row(r);
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, a, dest, out] {
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        g.grad(a.id()).row(r) += g.grad(out).row(dest[static_cast<size_t>(r)]);
    });
  }
  return Var<S>(&g, out);
}

// Endpoint-aligned linear interpolation over the frame axis to f_out frames.
template <typename S>
Var<S> linear_resample_cols(Var<S> x, Eigen::Index f_out) {
  Graph<S>& g = *x.graph();
  const Eigen::Index f_in = x.cols();
  if (f_out < 1) throw std::invalid_argument("linear_resample_cols: f_out must be >= 1");
  Mat<S> v(x.rows(), f_out);
  auto plan = std::make_shared<std::vector<std::pair<Eigen::Index, S>>>();
  plan->reserve(static_cast<size_t>(f_out));
  const double step =
      f_out > 1 ? static_cast<double>(f_in - 1) / static_cast<double>(f_out - 1) : 0.0;
  for (Eigen::Index j = 0; j < f_out; ++j) {
    const double pos = step * static_cast<double>(j);
    Eigen::Index i = static_cast<Eigen::Index>(pos);
    if (i >= f_in - 1) i = f_in > 1 ? f_in - 2 : 0;
    const S wfrac = static_cast<S>(pos - static_cast<double>(i));
    plan->emplace_back(i, wfrac);
    if (f_in == 1) {
      v.col(j) = x.val().col(0);
    } else {
      v.col(j) = (S(1) - wfrac) * x.val().col(i) + wfrac * x.val().col(i + 1);
    }
  }
  const bool ng = x.needs_grad();
  const int out = g.add_node(std::move(v), ng);
  if (ng) {
    g.add_backward([&g, x, out, plan, f_in] {
      const Mat<S>& go = g.grad(out);
      for (Eigen::Index j = 0; j < go.cols(); ++j) {
        const auto [i, wfrac] = (*plan)[static_cast<size_t>(j)];
        if (f_in == 1) {
          g.grad(x.id()).col(0) += go.col(j);
        } else {
          g.grad(x.id()).col(i) += (S(1) - wfrac) * go.col(j);
          g.grad(x.id()).col(i + 1) += wfrac * go.col(j);
        }
      }
    });
  }
  return Var<S>(&g, out);
}

}  // namespace basen
