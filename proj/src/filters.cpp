#include "basen/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace basen {

namespace {

using cd = std::complex<double>;

// Forward pass of one DF2T biquad over a buffer, with initial state zi.
void biquad_apply(const BiquadSection& s, Eigen::ArrayXd& x, std::array<double, 2> zi) {
  double z1 = zi[0], z2 = zi[1];
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double in = x[i];
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    x[i] = out;
  }
}

double biquad_dc_gain(const BiquadSection& s) {
  return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
}

// One filtering pass of the full cascade with per-section steady-state init
// scaled to the first sample of that section's input.
void sos_forward_with_zi(const SosFilter& sos, Eigen::ArrayXd& x) {
  double level = x.size() > 0 ? x[0] : 0.0;
  for (const auto& s : sos) {
    auto zi = biquad_step_state(s);
    biquad_apply(s, x, {zi[0] * level, zi[1] * level});
    level *= biquad_dc_gain(s);
  }
}

}  // namespace

SosFilter butter_bandpass_sos(int order, double lo_hz, double hi_hz, double fs) {
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("butter_bandpass_sos: order must be a positive even number");
  if (!(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0))
    throw std::invalid_argument("butter_bandpass_sos: need 0 <= lo < hi < fs/2");
  if (lo_hz <= 0.0)
    throw std::invalid_argument("butter_bandpass_sos: lo must be > 0 for a band-pass");

  const int n = order / 2;  // analog low-pass prototype order
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(M_PI * lo_hz / fs);
  const double w2 = fs2 * std::tan(M_PI * hi_hz / fs);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // prototype poles -> band-pass pole pairs -> bilinear transform
  std::vector<cd> digital_poles;
  digital_poles.reserve(static_cast<size_t>(2 * n));
  cd pole_prod_term(1.0, 0.0);  // prod(fs2 - p_analog)
  for (int k = 1; k <= n; ++k) {
    const double theta = M_PI * (2.0 * k + n - 1.0) / (2.0 * n);
    const cd p(std::cos(theta), std::sin(theta));
    const cd a = p * (bw / 2.0);
    const cd d = std::sqrt(a * a - w0 * w0);
    for (const cd& pa : {a + d, a - d}) {
      pole_prod_term *= (fs2 - pa);
      digital_poles.push_back((fs2 + pa) / (fs2 - pa));
    }
  }
  // analog zeros: n at s=0; gain k_analog = bw^n
  const double k_analog = std::pow(bw, n);
  const double k_digital = k_analog * (std::pow(fs2, n) / pole_prod_term).real();

  // Each section takes one digital zero at +1 and one at -1 (numerator
  // z^2 - 1) and a pole pair: a complex-conjugate pair, or two reals paired
  // by sorted position (real digital poles occur for wide bands at low
  // prototype order). Gain magnitude is spread evenly across sections, the
  // sign goes on the first.
  std::vector<std::array<double, 2>> denoms;  // {a1, a2}
  std::vector<cd> reals;
  for (const cd& p : digital_poles) {
    if (p.imag() > 1e-12) {
      denoms.push_back({-2.0 * p.real(), std::norm(p)});
    } else if (std::abs(p.imag()) <= 1e-12) {
      reals.push_back(p);
    }
  }
  std::sort(reals.begin(), reals.end(),
            [](const cd& a, const cd& b) { return a.real() < b.real(); });
  for (size_t i = 0; i + 1 < reals.size(); i += 2) {
    const double r1 = reals[i].real(), r2 = reals[i + 1].real();
    denoms.push_back({-(r1 + r2), r1 * r2});
  }
  if (static_cast<int>(denoms.size()) != n)
    throw std::runtime_error("butter_bandpass_sos: pole pairing failed");

  const double g = std::pow(std::abs(k_digital), 1.0 / static_cast<double>(n));
  SosFilter sos;
  sos.reserve(denoms.size());
  for (size_t i = 0; i < denoms.size(); ++i) {
    BiquadSection s;
    const double gg = (i == 0 && k_digital < 0.0) ? -g : g;
    s.b0 = gg;
    s.b1 = 0.0;
    s.b2 = -gg;
    s.a1 = denoms[i][0];
    s.a2 = denoms[i][1];
    sos.push_back(s);
  }
  return sos;
}

std::array<double, 2> biquad_step_state(const BiquadSection& s) {
  // Steady state of DF2T for constant unit input: y = H(1),
  // z1 = y - b0, z2 = b2 - a2*y.
  const double y = biquad_dc_gain(s);
  return {y - s.b0, s.b2 - s.a2 * y};
}

double sos_dc_gain(const SosFilter& sos) {
  double g = 1.0;
  for (const auto& s : sos) g *= biquad_dc_gain(s);
  return g;
}

Eigen::Index filtfilt_min_length(const SosFilter& sos) {
  return 3 * (2 * static_cast<Eigen::Index>(sos.size()) + 1) + 1;
}

// Reflection padding long enough for the slowest pole to ring down (to ~1e-4),
// clamped to the signal length. Slow poles near DC need pads of seconds.
static Eigen::Index settle_samples(const SosFilter& sos) {
  double r_max = 0.0;
  for (const auto& s : sos) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    if (disc < 0.0) {
      r_max = std::max(r_max, std::sqrt(std::max(0.0, s.a2)));
    } else {
      const double sq = std::sqrt(disc);
      r_max = std::max({r_max, std::abs((-s.a1 + sq) / 2.0), std::abs((-s.a1 - sq) / 2.0)});
    }
  }
  if (r_max <= 0.0 || r_max >= 1.0) return 4096;
  const double n = std::log(1e-4) / std::log(r_max);
  return std::min<Eigen::Index>(4096, static_cast<Eigen::Index>(std::ceil(n)));
}

Eigen::ArrayXd sosfiltfilt(const SosFilter& sos, const Eigen::ArrayXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::Index min_pad = 3 * (2 * static_cast<Eigen::Index>(sos.size()) + 1);
  if (n <= min_pad)
    throw std::invalid_argument("sosfiltfilt: input shorter than warm-up length " +
                                std::to_string(min_pad + 1));
  const Eigen::Index padlen = std::min(n - 1, std::max(min_pad, settle_samples(sos)));

  // odd reflection: 2*x[edge] - x[mirrored]
  Eigen::ArrayXd ext(n + 2 * padlen);
  for (Eigen::Index i = 0; i < padlen; ++i) ext[i] = 2.0 * x[0] - x[padlen - i];
  ext.segment(padlen, n) = x;
  for (Eigen::Index i = 0; i < padlen; ++i) ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  sos_forward_with_zi(sos, ext);
  ext.reverseInPlace();
  sos_forward_with_zi(sos, ext);
  ext.reverseInPlace();

  return ext.segment(padlen, n);
}

}  // namespace basen
