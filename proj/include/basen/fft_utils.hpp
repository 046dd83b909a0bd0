#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace basen {

// Complex FFT of a real sequence. Complex path so odd lengths work too.
inline std::vector<std::complex<double>> fft_complex(const Eigen::ArrayXd& x) {
  std::vector<std::complex<double>> in(static_cast<size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) in[static_cast<size_t>(i)] = {x[i], 0.0};
  std::vector<std::complex<double>> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  return out;
}

inline std::vector<std::complex<double>> ifft_complex(
    const std::vector<std::complex<double>>& spectrum) {
  std::vector<std::complex<double>> out;
  Eigen::FFT<double> fft;
  fft.inv(out, spectrum);
  return out;
}

// Analytic signal x + i*H{x} via the frequency-domain construction:
// double the positive frequencies, zero the negative ones. For even n the
// shared Nyquist bin stays unscaled.
inline std::vector<std::complex<double>> analytic_signal(const Eigen::ArrayXd& x) {
  const Eigen::Index n = x.size();
  auto spec = fft_complex(x);
  const Eigen::Index last_pos = (n % 2 == 0) ? n / 2 - 1 : n / 2;
  for (Eigen::Index k = 1; k <= last_pos; ++k) spec[static_cast<size_t>(k)] *= 2.0;
  const Eigen::Index first_neg = (n % 2 == 0) ? n / 2 + 1 : n / 2 + 1;
  for (Eigen::Index k = first_neg; k < n; ++k) spec[static_cast<size_t>(k)] = 0.0;
  return ifft_complex(spec);
}

// Magnitude of the FFT bin nearest to freq_hz; oracle helper for filter tests.
inline double fft_magnitude_at(const Eigen::ArrayXd& x, double fs, double freq_hz) {
  const auto spec = fft_complex(x);
  const Eigen::Index n = x.size();
  auto bin = static_cast<Eigen::Index>(std::llround(freq_hz / fs * static_cast<double>(n)));
  if (bin < 0) bin = 0;
  if (bin > n / 2) bin = n / 2;
  return std::abs(spec[static_cast<size_t>(bin)]) / static_cast<double>(n);
}

// Frequency (Hz) of the largest-magnitude bin in [0, fs/2].
inline double fft_peak_frequency(const Eigen::ArrayXd& x, double fs) {
  const auto spec = fft_complex(x);
  const Eigen::Index n = x.size();
  Eigen::Index best = 0;
  double best_mag = -1.0;
  for (Eigen::Index k = 0; k <= n / 2; ++k) {
    const double m = std::abs(spec[static_cast<size_t>(k)]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  return static_cast<double>(best) * fs / static_cast<double>(n);
}

}  // namespace basen
