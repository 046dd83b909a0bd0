#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "basen/fft_utils.hpp"
#include "basen/filters.hpp"
#include "basen/metrics.hpp"
#include "basen/rng.hpp"
#include "basen/signal.hpp"

#include <cmath>

using namespace basen;

namespace {

Eigen::ArrayXd sine(double freq, double fs, Eigen::Index n, double amp = 1.0, double phase = 0.0) {
  Eigen::ArrayXd x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / fs + phase);
  return x;
}

Eigen::ArrayXd white_noise(Rng& rng, Eigen::Index n) {
  Eigen::ArrayXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
  return x;
}

double wrap_to_pi(double x) {
  while (x > M_PI) x -= 2.0 * M_PI;
  while (x < -M_PI) x += 2.0 * M_PI;
  return x;
}

}  // namespace

TEST_CASE("bandpass: DC is rejected by the broadband EEG filter") {
  const Eigen::Index n = 512;
  Eigen::ArrayXd x = Eigen::ArrayXd::Constant(n, 3.5);
  Eigen::ArrayXd y = bandpass(x, eeg_broadband(), 128.0);
  const double in_energy = x.square().sum();
  const double out_energy = y.square().sum();
  CHECK(out_energy < 0.01 * in_energy);
}

TEST_CASE("bandpass: 10 Hz tone passes within 1 dB (FFT-magnitude oracle)") {
  const double fs = 128.0;
  const Eigen::Index n = 1024;
  Eigen::ArrayXd x = sine(10.0, fs, n);
  Eigen::ArrayXd y = bandpass(x, eeg_broadband(), fs);
  const double in_mag = fft_magnitude_at(x, fs, 10.0);
  const double out_mag = fft_magnitude_at(y, fs, 10.0);
  const double gain_db = 20.0 * std::log10(out_mag / in_mag);
  CHECK(std::abs(gain_db) < 1.0);
}

TEST_CASE("bandpass: 60 Hz tone attenuated by at least 20 dB") {
  const double fs = 128.0;
  const Eigen::Index n = 1024;
  Eigen::ArrayXd x = sine(60.0, fs, n);
  Eigen::ArrayXd y = bandpass(x, eeg_broadband(), fs);
  const double in_mag = fft_magnitude_at(x, fs, 60.0);
  const double out_mag = fft_magnitude_at(y, fs, 60.0);
  CHECK(20.0 * std::log10(in_mag / out_mag) >= 20.0);
}

TEST_CASE("bandpass: invalid band errors") {
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(256);
  CHECK_THROWS_AS(bandpass(x, BandSpec{0.1, 70.0, 4}, 128.0), std::invalid_argument);
  CHECK_THROWS_AS(bandpass(x, BandSpec{45.0, 0.1, 4}, 128.0), std::invalid_argument);
}

TEST_CASE("bandpass: too-short input errors") {
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(8);
  CHECK_THROWS_AS(bandpass(x, eeg_broadband(), 128.0), std::invalid_argument);
}

TEST_CASE("bandpass is linear") {
  Rng rng(11);
  const Eigen::Index n = 400;
  Eigen::ArrayXd x = white_noise(rng, n);
  Eigen::ArrayXd y = white_noise(rng, n);
  const double a = 1.7, b = -0.6;
  Eigen::ArrayXd lhs = bandpass((a * x + b * y).eval(), eeg_broadband(), 128.0);
  Eigen::ArrayXd rhs = a * bandpass(x, eeg_broadband(), 128.0) +
                       b * bandpass(y, eeg_broadband(), 128.0);
  const double rel = std::sqrt((lhs - rhs).square().sum() / rhs.square().sum());
  CHECK(rel < 1e-6);
}

TEST_CASE("compute_mua: all-zero trial gives all-zero output and a warning") {
  EEGTrial e;
  e.fs = 128.0;
  e.data = MatF::Zero(3, 512);
  e.stage = EEGStage::filtered;
  const MuaResult r = compute_mua(e);
  CHECK(r.trial.stage == EEGStage::mua);
  CHECK(r.trial.data.isZero(0.0f));
  CHECK(r.undefined_phase_channels.size() == 3);
}

TEST_CASE("compute_mua: requires a filtered trial") {
  EEGTrial e;
  e.fs = 128.0;
  e.data = MatF::Random(2, 512);
  e.stage = EEGStage::raw;
  CHECK_THROWS_AS(compute_mua(e), std::invalid_argument);
}

TEST_CASE("compute_mua: 2 Hz sinusoid gives the delta-phase ramp (analytic oracle)") {
  const double fs = 128.0;
  const Eigen::Index n = 1024;
  EEGTrial e;
  e.fs = fs;
  e.data.resize(1, n);
  e.data.row(0) = sine(2.0, fs, n).cast<float>().matrix().transpose();
  e.stage = EEGStage::filtered;
  const MuaResult r = compute_mua(e);
  REQUIRE(r.undefined_phase_channels.empty());

  // analytic phase of sin(theta) is theta - pi/2
  double sq_err = 0.0;
  Eigen::Index count = 0;
  const Eigen::Index margin = 128;
  for (Eigen::Index t = margin; t < n - margin; ++t) {
    const double theta = 2.0 * M_PI * 2.0 * static_cast<double>(t) / fs - M_PI / 2.0;
    const double expected = 0.5 * wrap_to_pi(theta);  // a_delta = 0.5, gamma term ~ 0
    const double diff = wrap_to_pi((static_cast<double>(r.trial.data(0, t)) - expected) / 0.5) * 0.5;
    sq_err += diff * diff;
    ++count;
  }
  const double rmse_rad = std::sqrt(sq_err / static_cast<double>(count)) / 0.5;
  CHECK(rmse_rad < 0.1);
}

TEST_CASE("compute_mua: 35 Hz sinusoid gives the gamma envelope (constant-envelope oracle)") {
  const double fs = 128.0;
  const Eigen::Index n = 1024;
  const double amp = 2.0;
  EEGTrial e;
  e.fs = fs;
  e.data.resize(1, n);
  e.data.row(0) = sine(35.0, fs, n, amp).cast<float>().matrix().transpose();
  e.stage = EEGStage::filtered;
  const MuaResult r = compute_mua(e);
  REQUIRE(r.undefined_phase_channels.empty());
  // interior mean of U: 0.5 * A from the gamma envelope, delta phase averages out
  const Eigen::Index margin = 128;
  double mean_u = 0.0;
  for (Eigen::Index t = margin; t < n - margin; ++t) mean_u += r.trial.data(0, t);
  mean_u /= static_cast<double>(n - 2 * margin);
  CHECK(mean_u == doctest::Approx(0.5 * amp).epsilon(0.10));
}

TEST_CASE("compute_mua: delta-phase contribution bounded by pi/2 at a_delta = 0.5") {
  Rng rng(5);
  EEGTrial e;
  e.fs = 128.0;
  const Eigen::Index n = 512;
  e.data.resize(2, n);
  for (Eigen::Index c = 0; c < 2; ++c)
    e.data.row(c) = white_noise(rng, n).cast<float>().matrix().transpose();
  e.stage = EEGStage::filtered;
  // zero gamma coefficient isolates the phase term
  const MuaResult r = compute_mua(e, 0.0, 0.5);
  CHECK((r.trial.data.array().abs() <= static_cast<float>(M_PI / 2.0) + 1e-6f).all());
}

TEST_CASE("mix_at_snr: identical inputs at 0 dB give twice the normalized source") {
  AudioWaveform s;
  s.fs = 1000.0;
  Rng rng(3);
  s.samples = white_noise(rng, 500).cast<float>();
  const MixResult m = mix_at_snr(s, s, 0.0);
  CHECK(((m.mixture.samples - 2.0f * m.target.samples).abs().maxCoeff()) < 1e-6f);
}

TEST_CASE("mix_at_snr: RMS ratios realize the requested SNR (direct RMS oracle)") {
  Rng rng(7);
  AudioWaveform s1, s2;
  s1.fs = s2.fs = 1000.0;
  s1.samples = white_noise(rng, 2000).cast<float>();
  s2.samples = white_noise(rng, 2000).cast<float>();

  const MixResult m0 = mix_at_snr(s1, s2, 0.0);
  CHECK(rms(m0.target.samples) / rms(m0.interferer.samples) == doctest::Approx(1.0).epsilon(1e-6));

  const MixResult m6 = mix_at_snr(s1, s2, 6.0);
  CHECK(rms(m6.target.samples) / rms(m6.interferer.samples) ==
        doctest::Approx(std::pow(10.0, 6.0 / 20.0)).epsilon(1e-6));
}

TEST_CASE("mix_at_snr: zero-RMS source errors") {
  AudioWaveform s1, s2;
  s1.fs = s2.fs = 1000.0;
  s1.samples = ArrF::Zero(100);
  s2.samples = ArrF::Ones(100);
  CHECK_THROWS_AS(mix_at_snr(s1, s2, 0.0), std::invalid_argument);
}

TEST_CASE("mix_at_snr: SI-SDR of mixture vs target near 0 dB for equal-RMS noise") {
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    AudioWaveform s1, s2;
    s1.fs = s2.fs = 1000.0;
    s1.samples = white_noise(rng, 4000).cast<float>();
    s2.samples = white_noise(rng, 4000).cast<float>();
    const MixResult m = mix_at_snr(s1, s2, 0.0);
    CHECK(std::abs(si_sdr(m.mixture, m.target)) < 1.0);
  }
}

TEST_CASE("segment: counts match the trial protocol") {
  AudioWaveform x;
  x.fs = 100.0;
  x.samples = ArrF::Ones(6000);  // 60 s
  CHECK(segment(x, 2.0, 2.0).size() == 30);
  CHECK(segment(x, 20.0, 20.0).size() == 3);
}

TEST_CASE("segment: trial shorter than one segment yields empty list plus warning") {
  AudioWaveform x;
  x.fs = 100.0;
  x.samples = ArrF::Ones(100);  // 1 s
  bool warned = false;
  CHECK(segment(x, 2.0, 2.0, &warned).empty());
  CHECK(warned);
}

TEST_CASE("segment/concat round-trip is bit-exact") {
  Rng rng(21);
  AudioWaveform x;
  x.fs = 100.0;
  x.samples = white_noise(rng, 1050).cast<float>();  // 10.5 s, remainder dropped
  const auto segs = segment(x, 2.0, 2.0);
  REQUIRE(segs.size() == 5);
  Eigen::Index pos = 0;
  for (const auto& s : segs) {
    for (Eigen::Index i = 0; i < s.samples.size(); ++i)
      CHECK(s.samples[i] == x.samples[pos + i]);
    pos += s.samples.size();
  }
}

TEST_CASE("segment_synchronized: audio and EEG boundaries share wall-clock instants") {
  AudioWaveform x;
  x.fs = 1000.0;
  x.samples = ArrF::Ones(5000);
  EEGTrial e;
  e.fs = 128.0;
  e.data = MatF::Ones(2, 640);
  const auto segs = segment_synchronized(x, e, 2.0, 2.0);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].first.samples.size() == 2000);
  CHECK(segs[0].second.data.cols() == 256);
}

TEST_CASE("resample: identity at equal rates") {
  AudioWaveform x;
  x.fs = 14700.0;
  Rng rng(2);
  x.samples = white_noise(rng, 1000).cast<float>();
  const AudioWaveform y = resample(x, 14700.0);
  CHECK(y.samples.size() == x.samples.size());
  for (Eigen::Index i = 0; i < x.samples.size(); ++i) CHECK(y.samples[i] == x.samples[i]);
}

TEST_CASE("resample: 44100 -> 14700 gives ceil(len/3) samples") {
  AudioWaveform x;
  x.fs = 44100.0;
  Rng rng(13);
  x.samples = white_noise(rng, 4411).cast<float>();
  const AudioWaveform y = resample(x, 14700.0);
  CHECK(y.samples.size() == (4411 + 2) / 3);
  CHECK(y.fs == 14700.0);
}

TEST_CASE("resample: 1 kHz tone keeps its FFT peak (peak-frequency oracle)") {
  AudioWaveform x;
  x.fs = 44100.0;
  const Eigen::Index n = 44100 / 2;
  x.samples = sine(1000.0, x.fs, n).cast<float>();
  const AudioWaveform y = resample(x, 14700.0);
  const double peak = fft_peak_frequency(y.samples.cast<double>(), y.fs);
  CHECK(peak == doctest::Approx(1000.0).epsilon(0.01));
}
