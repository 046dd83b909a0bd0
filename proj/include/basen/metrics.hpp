#pragma once

#include "basen/types.hpp"

#include <functional>

namespace basen {

// Weights and constants of the training objective.
struct LossWeights {
  double alpha = 0.5;  // SI-SDR weight
  double beta = 0.5;   // discretization weight
  double gamma = 0.0;  // sparsity weight, swept over {0 .. 0.35}
  double k1 = 100.0;   // discretization scale
  double k2 = 0.25;    // sparsity scale
  double b = 0.25;     // discretization bias
  double q = 0.5;      // coin-toss midpoint the selection vector is pushed away from

  void validate(const char* where = "LossWeights") const {
    for (double v : {alpha, beta, gamma, k1, k2, b, q})
      if (v < 0.0) throw std::invalid_argument(std::string(where) + ": weights must be >= 0");
  }
};

struct LossBreakdown {
  double si_sdr_db = 0.0;
  double l_d = 0.0;
  double l_reg = 0.0;
  double total = 0.0;
};

inline constexpr double kSiSdrEpsilon = 1e-8;

// Scale-invariant SDR in dB:
//   x_target = (<est,ref>/||ref||^2) ref,  x_res = x_target - est,
//   20 log10((||x_target|| + eps) / (||x_res|| + eps)).
double si_sdr(const ArrF& est, const ArrF& ref);
double si_sdr(const Eigen::ArrayXd& est, const Eigen::ArrayXd& ref);
double si_sdr(const AudioWaveform& est, const AudioWaveform& ref);

// Improvement of an estimate over the unprocessed mixture.
double si_sdr_improvement(const AudioWaveform& est, const AudioWaveform& mixture,
                          const AudioWaveform& ref);

// L_d = k1 * (b - d'd/(Q*B)) with d = vec(S) - q; S holds one selection
// vector per row.
double discretization_loss(const Eigen::MatrixXd& selection_batch, double k1, double b, double q);

// L_reg = k2 * mean over the batch of ||s||_2^2.
double sparsity_loss(const Eigen::MatrixXd& selection_batch, double k2);

// total = -alpha * si_sdr + beta * l_d + gamma * l_reg
LossBreakdown total_loss(double si_sdr_db, double l_d, double l_reg, const LossWeights& w);

// Slot for external perceptual metrics (PESQ, STOI, ...): (est, ref, fs) -> score.
using ExternalMetricFn =
    std::function<double(const ArrF& est, const ArrF& ref, double fs)>;

}  // namespace basen
