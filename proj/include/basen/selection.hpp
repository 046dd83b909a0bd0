#pragma once

#include "basen/nn.hpp"
#include "basen/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace basen {

// Hard channel choice produced by any of the selection methods.
struct ChannelSubset {
  std::string method;          // "gcs" | "resgs" | "convrs"
  double gamma_or_k = 0.0;     // sparsity weight, or neuron count for Gumbel methods
  std::vector<int> indices;    // ordered; duplicates kept for Gumbel methods
  int duplicate_count = 0;
  std::vector<double> mean_probabilities;  // per-channel, length Q

  bool contains(int channel) const {
    for (int i : indices)
      if (i == channel) return true;
    return false;
  }
};

int count_duplicates(const std::vector<int>& indices);

std::string channel_subset_to_json(const ChannelSubset& subset);
ChannelSubset channel_subset_from_json(const std::string& text);

// Mean selection probability over a set of soft selection vectors, then an
// inclusive threshold. ConvRS subsets come out duplicate-free by construction.
ChannelSubset aggregate_selection(const std::vector<Eigen::VectorXd>& selection_vectors,
                                  double threshold = 0.5);

// --- Gumbel channel selection -------------------------------------------------

// K selection neurons over Q channels, each parametrized by a learnable score
// row; sampling w_k = softmax((log_alpha_k + G_k)/tau) with standard Gumbel
// noise G. alpha > 0 is maintained by learning log(alpha) directly.
template <typename S>
class GumbelSelector {
 public:
  // init_std > 0 breaks the neuron symmetry; with exactly equal scores every
  // neuron drifts in lockstep and collapses onto one channel.
  GumbelSelector(int k_neurons, int q_channels, uint64_t init_seed = 1, double init_std = 0.1)
      : k_(k_neurons), q_(q_channels) {
    if (k_ < 1) throw std::invalid_argument("GumbelSelector: K must be >= 1");
    if (k_ > q_) throw std::invalid_argument("GumbelSelector: K must be <= Q");
    Mat<S> init = Mat<S>::Zero(k_, q_);
    if (init_std > 0.0) {
      Rng rng(splitmix64(init_seed ^ 0x6763735fULL));
      for (Eigen::Index r = 0; r < k_; ++r)
        for (Eigen::Index c = 0; c < q_; ++c)
          init(r, c) = static_cast<S>(init_std * rng.normal());
    }
    log_alpha_ = params_.add("selector.log_alpha", std::move(init));
  }

  int k_neurons() const { return k_; }
  int q_channels() const { return q_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }
  int log_alpha_index() const { return log_alpha_; }

  Mat<S> draw_gumbel_noise(Rng& rng) const {
    Mat<S> g(k_, q_);
    for (Eigen::Index r = 0; r < k_; ++r)
      for (Eigen::Index c = 0; c < q_; ++c) g(r, c) = static_cast<S>(rng.gumbel());
    return g;
  }

  // Differentiable sampled weights; rows sum to 1.
  Var<S> sample_weights(GraphContext<S>& ctx, const Mat<S>& gumbel_noise, double tau) const {
    if (tau <= 0.0) throw std::invalid_argument("gumbel_sample_weights: tau must be > 0");
    Var<S> logits = add_const(ctx.use(log_alpha_), gumbel_noise);
    return softmax_rows(scale(logits, static_cast<S>(1.0 / tau)));
  }

  Mat<S> sample_weights_value(const Mat<S>& gumbel_noise, double tau) const {
    if (tau <= 0.0) throw std::invalid_argument("gumbel_sample_weights: tau must be > 0");
    Graph<S> g;
    ParameterStore<S>& ps = const_cast<ParameterStore<S>&>(params_);
    GraphContext<S> ctx(g, ps);
    return sample_weights(ctx, gumbel_noise, tau).val();
  }

  // Noise-free expected weights at temperature tau (used for validation).
  Mat<S> mean_weights(double tau) const {
    return sample_weights_value(Mat<S>::Zero(k_, q_), tau);
  }

  // p_nk = alpha_nk / sum_j alpha_jk; each neuron's row sums to 1.
  Mat<S> probabilities() const {
    Mat<S> p(k_, q_);
    const Mat<S>& la = params_.value(log_alpha_);
    for (Eigen::Index r = 0; r < k_; ++r) {
      const auto row = la.row(r).array();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
      p.row(r) = (e / e.sum()).matrix();
    }
    return p;
  }

  // Test-mode selection: argmax probability per neuron, ties to the lowest
  // channel index. Duplicates are counted, not removed.
  ChannelSubset test_select() const {
    const Mat<S> p = probabilities();
    ChannelSubset subset;
    subset.method = "gcs";
    subset.gamma_or_k = static_cast<double>(k_);
    subset.mean_probabilities.assign(static_cast<size_t>(q_), 0.0);
    for (Eigen::Index r = 0; r < k_; ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < q_; ++c)
        if (p(r, c) > p(r, best)) best = c;
      subset.indices.push_back(static_cast<int>(best));
      for (Eigen::Index c = 0; c < q_; ++c)
        subset.mean_probabilities[static_cast<size_t>(c)] +=
            static_cast<double>(p(r, c)) / static_cast<double>(k_);
    }
    subset.duplicate_count = count_duplicates(subset.indices);
    return subset;
  }

 private:
  int k_, q_;
  ParameterStore<S> params_;
  int log_alpha_ = -1;
};

// z_k = w_k^T e_t: weighted channel mixdown, one output channel per neuron.
template <typename S>
Mat<S> gcs_apply(const Mat<S>& weights, const Mat<S>& eeg) {
  if (weights.cols() != eeg.rows())
    throw std::invalid_argument("gcs_apply: weight columns must match EEG channels");
  return weights * eeg;
}

enum class ResgsPadding { leading, scatter };

// ebar = (1-a) e + a Padding(z). Leading placement puts z into channels
// 0..K-1; scatter places each neuron's output at its argmax channel.
template <typename S>
Mat<S> resgs_combine(const Mat<S>& eeg, const Mat<S>& z, double a,
                     ResgsPadding mode = ResgsPadding::leading,
                     const std::vector<int>* scatter_targets = nullptr) {
  if (z.rows() > eeg.rows())
    throw std::invalid_argument("resgs_combine: more neurons than channels");
  if (z.cols() != eeg.cols()) throw std::invalid_argument("resgs_combine: length mismatch");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("resgs_combine: a must be in [0,1]");
  Mat<S> padded = Mat<S>::Zero(eeg.rows(), eeg.cols());
  if (mode == ResgsPadding::leading) {
    padded.topRows(z.rows()) = z;
  } else {
    if (!scatter_targets || static_cast<Eigen::Index>(scatter_targets->size()) != z.rows())
      throw std::invalid_argument("resgs_combine: scatter mode needs one target per neuron");
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      padded.row((*scatter_targets)[static_cast<size_t>(r)]) += z.row(r);
  }
  return static_cast<S>(1.0 - a) * eeg + static_cast<S>(a) * padded;
}

// Graph version for training; eeg enters as a constant.
template <typename S>
Var<S> resgs_combine(GraphContext<S>& ctx, const Mat<S>& eeg, Var<S> z, double a,
                     ResgsPadding mode = ResgsPadding::leading,
                     const std::vector<int>* scatter_targets = nullptr) {
  (void)ctx;
  if (z.rows() > eeg.rows())
    throw std::invalid_argument("resgs_combine: more neurons than channels");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("resgs_combine: a must be in [0,1]");
  Var<S> padded;
  if (mode == ResgsPadding::leading) {
    padded = pad_rows_to(z, eeg.rows(), 0);
  } else {
    if (!scatter_targets || static_cast<Eigen::Index>(scatter_targets->size()) != z.rows())
      throw std::invalid_argument("resgs_combine: scatter mode needs one target per neuron");
    std::vector<Eigen::Index> dest(scatter_targets->begin(), scatter_targets->end());
    padded = scatter_rows_to(z, eeg.rows(), dest);
  }
  return add_const(scale(padded, static_cast<S>(a)), (static_cast<S>(1.0 - a) * eeg).eval());
}

// --- convolutional regularization selection -------------------------------------

// N1 blocks of MaxPool(pad(DepthConv1D(.))), each halving the time axis, then
// flatten -> linear -> PReLU -> sigmoid giving s in [0,1]^Q. The linear head
// is sized for a reference input length; any length that reduces to the same
// pooled width is accepted.
template <typename S>
class ConvRSelector {
 public:
  ConvRSelector(int q_channels, Eigen::Index input_len, int n1_blocks = 4,
                uint64_t init_seed = 1)
      : q_(q_channels), n1_(n1_blocks) {
    if (q_ < 1) throw std::invalid_argument("ConvRSelector: Q must be >= 1");
    if (n1_ < 1) throw std::invalid_argument("ConvRSelector: need at least one block");
    if (input_len < (Eigen::Index(1) << n1_))
      throw std::invalid_argument("ConvRSelector: input shorter than 2^N1");
    reduced_len_ = reduced_length(input_len);
    Rng rng(splitmix64(init_seed ^ 0x636f6e767273ULL));
    for (int i = 0; i < n1_; ++i) {
      const std::string name = "convrs.block" + std::to_string(i);
      depthwise_.push_back(make_depthwise(params_, rng, name + ".dw", q_, Conv1dSpec::same(3)));
      dw_act_.push_back(make_prelu(params_, name + ".dw_act"));
      pointwise_.push_back(make_dense(params_, rng, name + ".pw", q_, q_));
    }
    head_ = make_dense(params_, rng, "convrs.head",
                       static_cast<int>(q_ * reduced_len_), q_);
    head_act_ = make_prelu(params_, "convrs.head_act");
  }

  int q_channels() const { return q_; }
  int blocks() const { return n1_; }
  Eigen::Index reduced_len() const { return reduced_len_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }

  Eigen::Index reduced_length(Eigen::Index len) const {
    for (int i = 0; i < n1_; ++i) len = (len + 1) / 2;
    return len;
  }

  // e: Q x T -> selection vector Q x 1 in [0,1].
  Var<S> forward(GraphContext<S>& ctx, Var<S> e) const {
    if (e.rows() != q_) throw std::invalid_argument("convrs_forward: channel count mismatch");
    if (e.cols() < (Eigen::Index(1) << n1_))
      throw std::invalid_argument("convrs_forward: input shorter than 2^N1");
    if (reduced_length(e.cols()) != reduced_len_)
      throw std::invalid_argument("convrs_forward: input length incompatible with linear head");
    Var<S> h = e;
    for (int i = 0; i < n1_; ++i) {
      h = apply_depthwise(ctx, depthwise_[static_cast<size_t>(i)], h);
      h = apply_prelu(ctx, dw_act_[static_cast<size_t>(i)], h);
      h = apply_dense(ctx, pointwise_[static_cast<size_t>(i)], h);
      h = maxpool1d_halve(h);
    }
    Var<S> flat = flatten_to_col(h);
    Var<S> s = apply_dense(ctx, head_, flat);
    s = apply_prelu(ctx, head_act_, s);
    return sigmoid(s);
  }

  Eigen::VectorXd forward_value(const Mat<S>& e) const {
    Graph<S> g;
    ParameterStore<S>& ps = const_cast<ParameterStore<S>&>(params_);
    GraphContext<S> ctx(g, ps);
    Var<S> s = forward(ctx, constant(g, e));
    return s.val().col(0).template cast<double>();
  }

 private:
  int q_;
  int n1_;
  Eigen::Index reduced_len_ = 0;
  ParameterStore<S> params_;
  std::vector<ConvP<S>> depthwise_;
  std::vector<PReluP<S>> dw_act_;
  std::vector<DenseP<S>> pointwise_;
  DenseP<S> head_;
  PReluP<S> head_act_;
};

// e_ConvRS = e (.) expand(s): every channel scaled by its selection weight.
template <typename S>
Mat<S> convrs_apply(const Mat<S>& eeg, const Vec<S>& s) {
  if (s.size() != eeg.rows())
    throw std::invalid_argument("convrs_apply: selection length must equal channel count");
  return (eeg.array().colwise() * s.array()).matrix();
}

template <typename S>
Var<S> convrs_apply(GraphContext<S>& ctx, const Mat<S>& eeg, Var<S> s) {
  if (s.rows() != eeg.rows())
    throw std::invalid_argument("convrs_apply: selection length must equal channel count");
  return scale_rows(constant(ctx.g, eeg), s);
}

}  // namespace basen
