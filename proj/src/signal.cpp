#include "basen/signal.hpp"

#include "basen/fft_utils.hpp"
#include "basen/filters.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace basen {

namespace {

Eigen::ArrayXd to_double(const ArrF& x) { return x.cast<double>(); }
ArrF to_float(const Eigen::ArrayXd& x) { return x.cast<float>(); }

// greatest common divisor for the rational resampling ratio
int64_t gcd64(int64_t a, int64_t b) {
  while (b != 0) {
    const int64_t t = a % b;
    a = b;
    b = t;
  }
  return a;
}

double kaiser_i0(double x) {
  // series expansion of the zeroth-order modified Bessel function
  double sum = 1.0, term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

}  // namespace

Eigen::ArrayXd bandpass(const Eigen::ArrayXd& x, const BandSpec& band, double fs) {
  band.validate(fs, "bandpass");
  const SosFilter sos = butter_bandpass_sos(band.order, band.lo_hz, band.hi_hz, fs);
  if (x.size() < filtfilt_min_length(sos))
    throw std::invalid_argument("bandpass: input shorter than filter warm-up length " +
                                std::to_string(filtfilt_min_length(sos)));
  return sosfiltfilt(sos, x);
}

ArrF bandpass(const ArrF& x, const BandSpec& band, double fs) {
  return to_float(bandpass(to_double(x), band, fs));
}

EEGTrial bandpass(const EEGTrial& e, const BandSpec& band) {
  e.validate("bandpass");
  EEGTrial out = e;
  for (Eigen::Index c = 0; c < e.data.rows(); ++c) {
    const Eigen::ArrayXd row = e.data.row(c).transpose().array().cast<double>();
    out.data.row(c) = bandpass(row, band, e.fs).cast<float>().matrix().transpose();
  }
  out.stage = EEGStage::filtered;
  return out;
}

MuaResult compute_mua(const EEGTrial& e, double a_gamma, double a_delta) {
  e.validate("compute_mua");
  if (e.stage != EEGStage::filtered)
    throw std::invalid_argument("compute_mua: expects a filtered trial (run bandpass first)");

  MuaResult result;
  result.trial = e;
  result.trial.stage = EEGStage::mua;

  const BandSpec gamma = gamma_band();
  const BandSpec delta = delta_band();

  for (Eigen::Index c = 0; c < e.data.rows(); ++c) {
    const Eigen::ArrayXd row = e.data.row(c).transpose().array().cast<double>();
    const double row_rms = rms(row);

    const Eigen::ArrayXd delta_row = bandpass(row, delta, e.fs);
    const double delta_rms = rms(delta_row);
    if (delta_rms <= 1e-10 * std::max(row_rms, 1e-30)) {
      result.trial.data.row(c).setZero();
      result.undefined_phase_channels.push_back(c);
      continue;
    }

    const Eigen::ArrayXd gamma_row = bandpass(row, gamma, e.fs);
    const auto gamma_analytic = analytic_signal(gamma_row);
    const auto delta_analytic = analytic_signal(delta_row);

    for (Eigen::Index t = 0; t < row.size(); ++t) {
      const double envelope = std::abs(gamma_analytic[static_cast<size_t>(t)]);
      const double phase = std::arg(delta_analytic[static_cast<size_t>(t)]);
      result.trial.data(c, t) = static_cast<float>(a_gamma * envelope + a_delta * phase);
    }
  }
  return result;
}

double rms(const ArrF& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.cast<double>().square().sum() / static_cast<double>(x.size()));
}

double rms(const Eigen::ArrayXd& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.square().sum() / static_cast<double>(x.size()));
}

MixResult mix_at_snr(const AudioWaveform& s1, const AudioWaveform& s2, double snr_db) {
  s1.validate("mix_at_snr: s1");
  s2.validate("mix_at_snr: s2");
  if (s1.samples.size() != s2.samples.size())
    throw std::invalid_argument("mix_at_snr: lengths differ");
  if (s1.fs != s2.fs) throw std::invalid_argument("mix_at_snr: sample rates differ");

  const double r1 = rms(s1.samples);
  const double r2 = rms(s2.samples);
  if (r1 <= 0.0 || r2 <= 0.0)
    throw std::invalid_argument("mix_at_snr: degenerate zero-RMS source");

  constexpr double kRefRms = 0.1;
  const double target_rms = kRefRms * std::pow(10.0, snr_db / 20.0);

  MixResult out;
  out.target.fs = s1.fs;
  out.interferer.fs = s1.fs;
  out.mixture.fs = s1.fs;
  out.target.samples = s1.samples * static_cast<float>(target_rms / r1);
  out.interferer.samples = s2.samples * static_cast<float>(kRefRms / r2);
  out.mixture.samples = out.target.samples + out.interferer.samples;
  return out;
}

namespace {

template <typename T>
std::vector<T> segment_impl(const T& whole, double fs, Eigen::Index total, double seg_len_s,
                            double hop_s, bool* warned,
                            T (*slice)(const T&, Eigen::Index, Eigen::Index)) {
  if (seg_len_s <= 0.0) throw std::invalid_argument("segment: seg_len_s must be > 0");
  if (hop_s <= 0.0) throw std::invalid_argument("segment: hop_s must be > 0");
  const auto seg_len = static_cast<Eigen::Index>(std::llround(seg_len_s * fs));
  std::vector<T> segments;
  if (warned) *warned = false;
  if (seg_len > total) {
    if (warned) *warned = true;
    return segments;
  }
  for (Eigen::Index i = 0;; ++i) {
    const auto start = static_cast<Eigen::Index>(std::llround(static_cast<double>(i) * hop_s * fs));
    if (start + seg_len > total) break;
    segments.push_back(slice(whole, start, seg_len));
  }
  return segments;
}

AudioWaveform slice_audio(const AudioWaveform& x, Eigen::Index start, Eigen::Index len) {
  AudioWaveform s;
  s.fs = x.fs;
  s.samples = x.samples.segment(start, len);
  return s;
}

EEGTrial slice_eeg(const EEGTrial& e, Eigen::Index start, Eigen::Index len) {
  EEGTrial s = e;
  s.data = e.data.middleCols(start, len);
  return s;
}

}  // namespace

std::vector<AudioWaveform> segment(const AudioWaveform& x, double seg_len_s, double hop_s,
                                   bool* warned_too_short) {
  x.validate("segment");
  return segment_impl<AudioWaveform>(x, x.fs, x.samples.size(), seg_len_s, hop_s,
                                     warned_too_short, &slice_audio);
}

std::vector<EEGTrial> segment(const EEGTrial& e, double seg_len_s, double hop_s,
                              bool* warned_too_short) {
  e.validate("segment");
  return segment_impl<EEGTrial>(e, e.fs, e.data.cols(), seg_len_s, hop_s, warned_too_short,
                                &slice_eeg);
}

std::vector<std::pair<AudioWaveform, EEGTrial>> segment_synchronized(
    const AudioWaveform& x, const EEGTrial& e, double seg_len_s, double hop_s,
    bool* warned_too_short) {
  x.validate("segment_synchronized");
  e.validate("segment_synchronized");
  const auto audio_len = static_cast<Eigen::Index>(std::llround(seg_len_s * x.fs));
  const auto eeg_len = static_cast<Eigen::Index>(std::llround(seg_len_s * e.fs));
  std::vector<std::pair<AudioWaveform, EEGTrial>> segments;
  if (warned_too_short) *warned_too_short = false;
  if (audio_len > x.samples.size() || eeg_len > e.data.cols()) {
    if (warned_too_short) *warned_too_short = true;
    return segments;
  }
  for (Eigen::Index i = 0;; ++i) {
    const double t0 = static_cast<double>(i) * hop_s;
    const auto a0 = static_cast<Eigen::Index>(std::llround(t0 * x.fs));
    const auto e0 = static_cast<Eigen::Index>(std::llround(t0 * e.fs));
    if (a0 + audio_len > x.samples.size() || e0 + eeg_len > e.data.cols()) break;
    segments.emplace_back(slice_audio(x, a0, audio_len), slice_eeg(e, e0, eeg_len));
  }
  return segments;
}

Eigen::ArrayXd resample_sequence(const Eigen::ArrayXd& x, double fs, double to_fs) {
  if (fs <= 0.0 || to_fs <= 0.0) throw std::invalid_argument("resample: rates must be > 0");
  if (fs == to_fs) return x;

  // rational ratio up/down; sample rates are integral in practice, scale
  // fractional rates into integers first
  double a = to_fs, b = fs;
  while (a != std::floor(a) || b != std::floor(b)) {
    a *= 10.0;
    b *= 10.0;
    if (a > 1e12 || b > 1e12)
      throw std::invalid_argument("resample: cannot express rate ratio as a small fraction");
  }
  auto up = static_cast<int64_t>(a);
  auto down = static_cast<int64_t>(b);
  const int64_t g = gcd64(up, down);
  up /= g;
  down /= g;

  // Kaiser-windowed sinc low-pass at the tighter Nyquist
  const double cutoff = 0.5 / static_cast<double>(std::max(up, down));  // cycles/upsampled-sample
  constexpr int kHalfWidthZeroes = 10;  // zero crossings per side
  constexpr double kKaiserBeta = 8.555; // ~90 dB stop-band
  const auto half = static_cast<int64_t>(kHalfWidthZeroes * std::max(up, down));
  const int64_t taps = 2 * half + 1;
  Eigen::ArrayXd kernel(taps);
  const double i0_beta = kaiser_i0(kKaiserBeta);
  for (int64_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i - half);
    const double sinc_arg = 2.0 * cutoff * t;
    const double sinc = sinc_arg == 0.0 ? 1.0 : std::sin(M_PI * sinc_arg) / (M_PI * sinc_arg);
    const double w_arg = static_cast<double>(i) / static_cast<double>(taps - 1) * 2.0 - 1.0;
    const double window = kaiser_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - w_arg * w_arg))) / i0_beta;
    kernel[i] = 2.0 * cutoff * static_cast<double>(up) * sinc * window;
  }

  const Eigen::Index n_in = x.size();
  const auto n_out = static_cast<Eigen::Index>(
      (static_cast<int64_t>(n_in) * up + down - 1) / down);  // ceil(n*up/down)
  Eigen::ArrayXd y(n_out);
  for (Eigen::Index m = 0; m < n_out; ++m) {
    // output sample m sits at upsampled index m*down; convolve against the
    // kernel centered there, walking only existing input samples
    const int64_t center = static_cast<int64_t>(m) * down;
    double acc = 0.0;
    const int64_t j_lo = (center - half + up - 1) / up < 0 ? 0 : (center - half + up - 1) / up;
    const int64_t j_hi = std::min<int64_t>(n_in - 1, (center + half) / up);
    for (int64_t j = j_lo; j <= j_hi; ++j) {
      const int64_t k = center - j * up;  // kernel offset
      acc += x[static_cast<Eigen::Index>(j)] * kernel[static_cast<Eigen::Index>(k + half)];
    }
    y[m] = acc;
  }
  return y;
}

AudioWaveform resample(const AudioWaveform& x, double to_fs) {
  x.validate("resample");
  if (to_fs <= 0.0) throw std::invalid_argument("resample: to_fs must be > 0");
  AudioWaveform out;
  out.fs = to_fs;
  if (to_fs == x.fs) {
    out.samples = x.samples;
    return out;
  }
  out.samples = to_float(resample_sequence(to_double(x.samples), x.fs, to_fs));
  return out;
}

}  // namespace basen
