#pragma once

#include "basen/autodiff.hpp"
#include "basen/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace basen {

// Named parameter set with gradients and per-parameter freeze flags.
template <typename S>
class ParameterStore {
 public:
  int add(std::string name, Mat<S> init, bool trainable = true) {
    names_.push_back(std::move(name));
    grads_.push_back(Mat<S>::Zero(init.rows(), init.cols()));
    values_.push_back(std::move(init));
    trainable_.push_back(trainable);
    return static_cast<int>(values_.size()) - 1;
  }

  int count() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
  Mat<S>& value(int i) { return values_[static_cast<size_t>(i)]; }
  const Mat<S>& value(int i) const { return values_[static_cast<size_t>(i)]; }
  Mat<S>& grad(int i) { return grads_[static_cast<size_t>(i)]; }
  bool trainable(int i) const { return trainable_[static_cast<size_t>(i)]; }
  void set_trainable(int i, bool t) { trainable_[static_cast<size_t>(i)] = t; }

  void set_all_trainable(bool t) {
    for (auto&& f : trainable_) f = t;
  }

  // Freeze/unfreeze by name prefix; returns how many parameters matched.
  int set_trainable_by_prefix(const std::string& prefix, bool t) {
    int hits = 0;
    for (size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].rfind(prefix, 0) == 0) {
        trainable_[i] = t;
        ++hits;
      }
    }
    return hits;
  }

  void zero_grads() {
    for (auto& gmat : grads_) gmat.setZero();
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  int find(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<S>> values_;
  std::vector<Mat<S>> grads_;
  std::vector<bool> trainable_;
};

// Binds store parameters into a graph for one forward pass and routes leaf
// gradients back after backward().
template <typename S>
struct GraphContext {
  Graph<S>& g;
  ParameterStore<S>& params;
  std::vector<std::pair<int, int>> bindings;  // (node id, param index)
  bool inference = false;  // true drops gradient tracking entirely

  GraphContext(Graph<S>& graph, ParameterStore<S>& store) : g(graph), params(store) {}

  Var<S> use(int param_idx) {
    Var<S> v = leaf(g, params.value(param_idx), !inference && params.trainable(param_idx));
    bindings.emplace_back(v.id(), param_idx);
    return v;
  }

  void accumulate_param_grads() {
    for (auto [nid, pidx] : bindings)
      if (g.needs_grad(nid) && g.has_grad(nid)) params.grad(pidx) += g.grad(nid);
  }
};

// --- initialization ----------------------------------------------------------

template <typename S>
Mat<S> uniform_fan_in(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Mat<S> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
  return m;
}

// --- common layer parameter bundles -------------------------------------------

template <typename S>
struct ConvP {
  int w = -1, b = -1;
  Conv1dSpec spec;
};

template <typename S>
struct DenseP {
  int w = -1, b = -1;
};

template <typename S>
struct NormP {
  int gain = -1, bias = -1;
  int groups = 1;
};

template <typename S>
struct PReluP {
  int a = -1;
};

template <typename S>
ConvP<S> make_conv(ParameterStore<S>& ps, Rng& rng, const std::string& name, int cin, int cout,
                   const Conv1dSpec& spec) {
  ConvP<S> p;
  p.spec = spec;
  const Eigen::Index fan_in = static_cast<Eigen::Index>(cin) * spec.kernel;
  p.w = ps.add(name + ".w", uniform_fan_in<S>(rng, cout, fan_in, fan_in));
  p.b = ps.add(name + ".b", Mat<S>::Zero(cout, 1));
  return p;
}

// transposed conv: weight (cout*kernel) x cin
template <typename S>
ConvP<S> make_tconv(ParameterStore<S>& ps, Rng& rng, const std::string& name, int cin, int cout,
                    const Conv1dSpec& spec) {
  ConvP<S> p;
  p.spec = spec;
  p.w = ps.add(name + ".w",
               uniform_fan_in<S>(rng, static_cast<Eigen::Index>(cout) * spec.kernel, cin, cin));
  p.b = ps.add(name + ".b", Mat<S>::Zero(cout, 1));
  return p;
}

template <typename S>
ConvP<S> make_depthwise(ParameterStore<S>& ps, Rng& rng, const std::string& name, int channels,
                        const Conv1dSpec& spec) {
  ConvP<S> p;
  p.spec = spec;
  p.w = ps.add(name + ".w", uniform_fan_in<S>(rng, channels, spec.kernel, spec.kernel));
  p.b = ps.add(name + ".b", Mat<S>::Zero(channels, 1));
  return p;
}

// 1x1 convolution / per-frame linear map
template <typename S>
DenseP<S> make_dense(ParameterStore<S>& ps, Rng& rng, const std::string& name, int cin, int cout) {
  DenseP<S> p;
  p.w = ps.add(name + ".w", uniform_fan_in<S>(rng, cout, cin, cin));
  p.b = ps.add(name + ".b", Mat<S>::Zero(cout, 1));
  return p;
}

template <typename S>
NormP<S> make_norm(ParameterStore<S>& ps, const std::string& name, int channels, int groups) {
  NormP<S> p;
  p.groups = groups;
  p.gain = ps.add(name + ".gain", Mat<S>::Ones(channels, 1));
  p.bias = ps.add(name + ".bias", Mat<S>::Zero(channels, 1));
  return p;
}

template <typename S>
PReluP<S> make_prelu(ParameterStore<S>& ps, const std::string& name) {
  PReluP<S> p;
  p.a = ps.add(name + ".a", Mat<S>::Constant(1, 1, S(0.25)));
  return p;
}

// --- layer applications --------------------------------------------------------

template <typename S>
Var<S> apply_conv(GraphContext<S>& ctx, const ConvP<S>& p, Var<S> x) {
  return conv1d(x, ctx.use(p.w), ctx.use(p.b), p.spec);
}

template <typename S>
Var<S> apply_tconv(GraphContext<S>& ctx, const ConvP<S>& p, Var<S> x) {
  return tconv1d(x, ctx.use(p.w), ctx.use(p.b), p.spec);
}

template <typename S>
Var<S> apply_depthwise(GraphContext<S>& ctx, const ConvP<S>& p, Var<S> x) {
  return depthwise_conv1d(x, ctx.use(p.w), ctx.use(p.b), p.spec);
}

template <typename S>
Var<S> apply_dense(GraphContext<S>& ctx, const DenseP<S>& p, Var<S> x) {
  return add_rows(matmul(ctx.use(p.w), x), ctx.use(p.b));
}

template <typename S>
Var<S> apply_norm(GraphContext<S>& ctx, const NormP<S>& p, Var<S> x) {
  Var<S> core = group_norm_core(x, p.groups);
  return add_rows(scale_rows(core, ctx.use(p.gain)), ctx.use(p.bias));
}

template <typename S>
Var<S> apply_prelu(GraphContext<S>& ctx, const PReluP<S>& p, Var<S> x) {
  return prelu(x, ctx.use(p.a));
}

// --- optimizer -------------------------------------------------------------------

// Adaptive-moment gradient descent with bias correction and optional global
// gradient-norm clipping. Frozen parameters are skipped entirely.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(const ParameterStore<S>& ps, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(static_cast<size_t>(ps.count()));
    v_.reserve(static_cast<size_t>(ps.count()));
    for (int i = 0; i < ps.count(); ++i) {
      m_.push_back(Mat<S>::Zero(ps.value(i).rows(), ps.value(i).cols()));
      v_.push_back(Mat<S>::Zero(ps.value(i).rows(), ps.value(i).cols()));
    }
  }

  void step(ParameterStore<S>& ps, double lr, double clip_norm = 0.0) {
    ++t_;
    double scale_factor = 1.0;
    if (clip_norm > 0.0) {
      double sq = 0.0;
      for (int i = 0; i < ps.count(); ++i)
        if (ps.trainable(i)) sq += static_cast<double>(ps.grad(i).squaredNorm());
      const double norm = std::sqrt(sq);
      if (norm > clip_norm) scale_factor = clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (int i = 0; i < ps.count(); ++i) {
      if (!ps.trainable(i)) continue;
      auto& m = m_[static_cast<size_t>(i)];
      auto& v = v_[static_cast<size_t>(i)];
      const Mat<S> gmat = ps.grad(i) * static_cast<S>(scale_factor);
      m = static_cast<S>(beta1_) * m + static_cast<S>(1.0 - beta1_) * gmat;
      v = static_cast<S>(beta2_) * v +
          static_cast<S>(1.0 - beta2_) * gmat.array().square().matrix();
      const auto m_hat = m.array() / static_cast<S>(bc1);
      const auto v_hat = v.array() / static_cast<S>(bc2);
      ps.value(i).array() -=
          static_cast<S>(lr) * m_hat / (v_hat.sqrt() + static_cast<S>(eps_));
    }
  }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace basen
