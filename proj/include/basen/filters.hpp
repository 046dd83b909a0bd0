#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace basen {

// One biquad section, direct form II transposed.
struct BiquadSection {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;  // numerator
  double a1 = 0.0, a2 = 0.0;            // denominator (a0 normalized to 1)
};

using SosFilter = std::vector<BiquadSection>;

// Butterworth band-pass as cascaded biquads. `order` is the total pole count
// (even); the underlying low-pass prototype has order/2 poles.
SosFilter butter_bandpass_sos(int order, double lo_hz, double hi_hz, double fs);

// Steady-state DF2T state for a unit-step input, used to start filtering at
// the signal's local DC level instead of zero state.
std::array<double, 2> biquad_step_state(const BiquadSection& s);

double sos_dc_gain(const SosFilter& sos);

// Zero-phase forward-backward filtering with odd-reflection edge padding and
// steady-state initial conditions per pass. Output length equals input length.
Eigen::ArrayXd sosfiltfilt(const SosFilter& sos, const Eigen::ArrayXd& x);

// Samples required before sosfiltfilt can run (reflection pad length + 1).
Eigen::Index filtfilt_min_length(const SosFilter& sos);

}  // namespace basen
