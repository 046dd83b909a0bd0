#include "basen/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace basen {

double si_sdr(const Eigen::ArrayXd& est, const Eigen::ArrayXd& ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: lengths differ");
  if (est.size() == 0) throw std::invalid_argument("si_sdr: empty input");
  const double ref_energy = ref.square().sum();
  if (ref_energy <= 0.0) throw std::invalid_argument("si_sdr: zero-norm reference");

  const double scale = (est * ref).sum() / ref_energy;
  const Eigen::ArrayXd x_target = scale * ref;
  const Eigen::ArrayXd x_res = x_target - est;
  const double nt = std::sqrt(x_target.square().sum()) + kSiSdrEpsilon;
  const double nr = std::sqrt(x_res.square().sum()) + kSiSdrEpsilon;
  return 20.0 * std::log10(nt / nr);
}

double si_sdr(const ArrF& est, const ArrF& ref) {
  return si_sdr(est.cast<double>().eval(), ref.cast<double>().eval());
}

double si_sdr(const AudioWaveform& est, const AudioWaveform& ref) {
  return si_sdr(est.samples, ref.samples);
}

double si_sdr_improvement(const AudioWaveform& est, const AudioWaveform& mixture,
                          const AudioWaveform& ref) {
  return si_sdr(est, ref) - si_sdr(mixture, ref);
}

double discretization_loss(const Eigen::MatrixXd& selection_batch, double k1, double b,
                           double q) {
  const auto batch = selection_batch.rows();
  const auto channels = selection_batch.cols();
  if (batch == 0 || channels == 0)
    throw std::invalid_argument("discretization_loss: empty batch");
  const Eigen::ArrayXXd d = selection_batch.array() - q;
  const double dtd = d.square().sum();
  return k1 * (b - dtd / static_cast<double>(channels * batch));
}

double sparsity_loss(const Eigen::MatrixXd& selection_batch, double k2) {
  const auto batch = selection_batch.rows();
  if (batch == 0) throw std::invalid_argument("sparsity_loss: empty batch");
  return k2 * selection_batch.array().square().sum() / static_cast<double>(batch);
}

LossBreakdown total_loss(double si_sdr_db, double l_d, double l_reg, const LossWeights& w) {
  w.validate("total_loss");
  LossBreakdown out;
  out.si_sdr_db = si_sdr_db;
  out.l_d = l_d;
  out.l_reg = l_reg;
  out.total = -w.alpha * si_sdr_db + w.beta * l_d + w.gamma * l_reg;
  return out;
}

}  // namespace basen
