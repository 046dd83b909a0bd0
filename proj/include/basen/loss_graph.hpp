#pragma once

#include "basen/metrics.hpp"
#include "basen/nn.hpp"

namespace basen {

// Differentiable SI-SDR in dB of a 1xT estimate against a fixed reference.
// Same formula as the plain metric, with a denormal-guard inside the square
// roots so the gradient stays finite for vanishing projections.
template <typename S>
Var<S> si_sdr_graph(GraphContext<S>& ctx, Var<S> est, const Mat<S>& ref) {
  const double ref_energy = static_cast<double>(ref.squaredNorm());
  if (ref_energy <= 0.0) throw std::invalid_argument("si_sdr_graph: zero-norm reference");
  Var<S> ref_const = constant(ctx.g, ref);
  Var<S> proj = scale(dot(est, ref_const), static_cast<S>(1.0 / ref_energy));  // 1x1
  Var<S> x_target = scalar_times_mat(proj, ref_const);
  Var<S> x_res = sub(x_target, est);
  Var<S> nt = add_scalar(s_sqrt(add_scalar(sumsq(x_target), S(1e-24))), static_cast<S>(kSiSdrEpsilon));
  Var<S> nr = add_scalar(s_sqrt(add_scalar(sumsq(x_res), S(1e-24))), static_cast<S>(kSiSdrEpsilon));
  return scale(sub(s_log(nt), s_log(nr)), static_cast<S>(20.0 / std::log(10.0)));
}

// L_d = k1 (b - d'd / (Q B)), d = vec(S) - q; selection vectors are the rows.
template <typename S>
Var<S> discretization_loss_graph(Var<S> selection_batch, double k1, double b, double q) {
  const double qb = static_cast<double>(selection_batch.rows() * selection_batch.cols());
  Var<S> d = add_scalar(selection_batch, static_cast<S>(-q));
  Var<S> mean_sq = scale(sumsq(d), static_cast<S>(1.0 / qb));
  return scale(add_scalar(scale(mean_sq, S(-1)), static_cast<S>(b)), static_cast<S>(k1));
}

// L_reg = k2 * mean over rows of ||s||^2.
template <typename S>
Var<S> sparsity_loss_graph(Var<S> selection_batch, double k2) {
  const double batch = static_cast<double>(selection_batch.rows());
  return scale(sumsq(selection_batch), static_cast<S>(k2 / batch));
}

}  // namespace basen
