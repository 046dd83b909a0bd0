#include "basen/corpus.hpp"

#include "basen/fft_utils.hpp"
#include "basen/signal.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian float32");

namespace fs = std::filesystem;

namespace basen {

namespace {

// Band-limited Gaussian noise built in the frequency domain: unit-variance
// complex coefficients on the in-band bins, hermitian-symmetrized.
Eigen::ArrayXd band_noise(Rng& rng, Eigen::Index n, double fs, double lo_hz, double hi_hz) {
  std::vector<std::complex<double>> spec(static_cast<size_t>(n), {0.0, 0.0});
  const auto k_lo = static_cast<Eigen::Index>(std::ceil(lo_hz / fs * static_cast<double>(n)));
  const auto k_hi = static_cast<Eigen::Index>(std::floor(hi_hz / fs * static_cast<double>(n)));
  for (Eigen::Index k = std::max<Eigen::Index>(k_lo, 1); k <= std::min(k_hi, n / 2); ++k) {
    const std::complex<double> c(rng.normal(), rng.normal());
    spec[static_cast<size_t>(k)] = c;
    if (k != n - k && n - k < n) spec[static_cast<size_t>(n - k)] = std::conj(c);
  }
  const auto time = ifft_complex(spec);
  Eigen::ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = time[static_cast<size_t>(i)].real();
  return out;
}

// Raised-cosine modulator in [floor, 1].
Eigen::ArrayXd modulator(Eigen::Index n, double fs, double rate_hz, double phase, double floor_v) {
  Eigen::ArrayXd env(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    env[i] = floor_v + (1.0 - floor_v) * 0.5 * (1.0 + std::cos(2.0 * M_PI * rate_hz * t + phase));
  }
  return env;
}

struct SourceArchetype {
  double band_lo, band_hi;  // Hz
  double rate_hz;
};

struct ExamplePlan {
  SourceArchetype target_arch, interferer_arch;
  double target_phase, interferer_phase;
};

ExamplePlan plan_example(const SynthConfig& cfg, Rng& rng) {
  const double nyq = cfg.fs_audio / 2.0;
  const SourceArchetype a{cfg.band_a_lo * nyq, cfg.band_a_hi * nyq, cfg.env_rate_a_hz};
  const SourceArchetype b{cfg.band_b_lo * nyq, cfg.band_b_hi * nyq, cfg.env_rate_b_hz};
  ExamplePlan plan;
  const bool flip = rng.uniform() < 0.5;
  plan.target_arch = flip ? b : a;
  plan.interferer_arch = flip ? a : b;
  plan.target_phase = rng.uniform(0.0, 2.0 * M_PI);
  plan.interferer_phase = rng.uniform(0.0, 2.0 * M_PI);
  return plan;
}

std::string default_example_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ex%06d", index);
  return buf;
}

void write_f32(const fs::path& path, const float* data, size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  if (!out) throw std::runtime_error("write_dataset: short write to " + path.string());
}

std::vector<float> read_f32(const fs::path& path, size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path.string());
  const auto bytes = static_cast<size_t>(in.tellg());
  if (bytes != expected_count * 4)
    throw std::runtime_error("read_dataset: " + path.string() + " holds " +
                             std::to_string(bytes) + " bytes, expected " +
                             std::to_string(expected_count * 4));
  std::vector<float> data(expected_count);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("read_dataset: short read from " + path.string());
  return data;
}

}  // namespace

void SynthConfig::validate(const char* where) const {
  auto fail = [&](const std::string& m) {
    throw std::invalid_argument(std::string(where) + ": " + m);
  };
  if (q_channels < 1) fail("q_channels must be >= 1");
  for (int c : informative_channels)
    if (c < 0 || c >= q_channels) fail("informative channel index out of range");
  if (n_examples < 1) fail("n_examples must be >= 1");
  if (seg_len_s <= 0.0) fail("seg_len_s must be > 0");
  if (fs_audio <= 0.0 || fs_eeg <= 0.0) fail("sample rates must be > 0");
  if (n_subjects < 1) fail("n_subjects must be >= 1");
  if (!(env_floor > 0.0 && env_floor < 1.0)) fail("env_floor must be in (0,1)");
  if (!(band_a_lo > 0.0 && band_a_lo < band_a_hi && band_a_hi < 1.0))
    fail("band_a must satisfy 0 < lo < hi < 1 (fractions of Nyquist)");
  if (!(band_b_lo > 0.0 && band_b_lo < band_b_hi && band_b_hi < 1.0))
    fail("band_b must satisfy 0 < lo < hi < 1 (fractions of Nyquist)");
}

MixtureExample generate_example(const SynthConfig& cfg, Rng& rng,
                                const std::string& example_id, const std::string& subject_id) {
  cfg.validate("generate_example");
  const auto n_audio = static_cast<Eigen::Index>(std::llround(cfg.seg_len_s * cfg.fs_audio));
  const auto n_eeg = static_cast<Eigen::Index>(std::llround(cfg.seg_len_s * cfg.fs_eeg));

  const ExamplePlan plan = plan_example(cfg, rng);

  auto make_source = [&](const SourceArchetype& arch, double phase) {
    const Eigen::ArrayXd carrier =
        band_noise(rng, n_audio, cfg.fs_audio, arch.band_lo, arch.band_hi);
    const Eigen::ArrayXd env = modulator(n_audio, cfg.fs_audio, arch.rate_hz, phase, cfg.env_floor);
    AudioWaveform w;
    w.fs = cfg.fs_audio;
    w.samples = (carrier * env).cast<float>();
    return w;
  };

  const AudioWaveform target_raw = make_source(plan.target_arch, plan.target_phase);
  const AudioWaveform interferer_raw = make_source(plan.interferer_arch, plan.interferer_phase);
  MixResult mixed = mix_at_snr(target_raw, interferer_raw, 0.0);

  // EEG: informative channels carry the delta-filtered target modulator at
  // eeg_snr_db; all others are Gaussian noise of matched total variance.
  const Eigen::ArrayXd env_eeg =
      modulator(n_eeg, cfg.fs_eeg, plan.target_arch.rate_hz, plan.target_phase, cfg.env_floor);
  const Eigen::ArrayXd planted = bandpass(env_eeg, delta_band(), cfg.fs_eeg);
  const double sig_rms = rms(planted);
  const double noise_std =
      std::isinf(cfg.eeg_snr_db) ? 0.0 : sig_rms * std::pow(10.0, -cfg.eeg_snr_db / 20.0);
  const double matched_std = std::sqrt(sig_rms * sig_rms + noise_std * noise_std);

  EEGTrial eeg;
  eeg.fs = cfg.fs_eeg;
  eeg.stage = EEGStage::raw;
  eeg.channel_labels = default_channel_labels(cfg.q_channels);
  eeg.data.resize(cfg.q_channels, n_eeg);
  std::vector<bool> informative(static_cast<size_t>(cfg.q_channels), false);
  for (int c : cfg.informative_channels) informative[static_cast<size_t>(c)] = true;
  for (int c = 0; c < cfg.q_channels; ++c) {
    if (informative[static_cast<size_t>(c)]) {
      for (Eigen::Index t = 0; t < n_eeg; ++t)
        eeg.data(c, t) = static_cast<float>(planted[t] + noise_std * rng.normal());
    } else {
      for (Eigen::Index t = 0; t < n_eeg; ++t)
        eeg.data(c, t) = static_cast<float>(matched_std * rng.normal());
    }
  }

  MixtureExample ex;
  ex.mixture = std::move(mixed.mixture);
  ex.target = std::move(mixed.target);
  ex.interferer = std::move(mixed.interferer);
  ex.eeg = std::move(eeg);
  ex.example_id = example_id;
  ex.subject_id = subject_id;
  return ex;
}

MixtureExample generate_example(const SynthConfig& cfg, int example_index) {
  const std::string id = default_example_id(example_index);
  Rng rng = derive_rng(cfg.seed, id);
  const std::string subject =
      "S" + std::to_string(example_index % std::max(cfg.n_subjects, 1) + 1);
  return generate_example(cfg, rng, id, subject);
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate("generate_dataset");
  Dataset ds;
  ds.reserve(static_cast<size_t>(cfg.n_examples));
  for (int i = 0; i < cfg.n_examples; ++i) ds.push_back(generate_example(cfg, i));
  return ds;
}

Eigen::ArrayXd planted_eeg_signal(const SynthConfig& cfg, int example_index) {
  const std::string id = default_example_id(example_index);
  Rng rng = derive_rng(cfg.seed, id);
  const ExamplePlan plan = plan_example(cfg, rng);
  const auto n_eeg = static_cast<Eigen::Index>(std::llround(cfg.seg_len_s * cfg.fs_eeg));
  const Eigen::ArrayXd env_eeg =
      modulator(n_eeg, cfg.fs_eeg, plan.target_arch.rate_hz, plan.target_phase, cfg.env_floor);
  return bandpass(env_eeg, delta_band(), cfg.fs_eeg);
}

void write_dataset(const Dataset& ds, const std::string& dir,
                   const std::vector<int>* informative_channels) {
  fs::create_directories(dir);
  for (const auto& ex : ds) {
    const fs::path exdir = fs::path(dir) / ex.example_id;
    fs::create_directories(exdir);
    write_f32(exdir / "audio_mix.f32", ex.mixture.samples.data(),
              static_cast<size_t>(ex.mixture.samples.size()));
    write_f32(exdir / "audio_target.f32", ex.target.samples.data(),
              static_cast<size_t>(ex.target.samples.size()));
    write_f32(exdir / "audio_interf.f32", ex.interferer.samples.data(),
              static_cast<size_t>(ex.interferer.samples.size()));
    // channel-major: each row contiguous
    std::vector<float> eeg_flat(static_cast<size_t>(ex.eeg.data.size()));
    for (Eigen::Index c = 0; c < ex.eeg.data.rows(); ++c)
      for (Eigen::Index t = 0; t < ex.eeg.data.cols(); ++t)
        eeg_flat[static_cast<size_t>(c * ex.eeg.data.cols() + t)] = ex.eeg.data(c, t);
    write_f32(exdir / "eeg.f32", eeg_flat.data(), eeg_flat.size());

    nlohmann::ordered_json meta;
    meta["example_id"] = ex.example_id;
    meta["subject_id"] = ex.subject_id;
    meta["fs_audio"] = ex.mixture.fs;
    meta["fs_eeg"] = ex.eeg.fs;
    meta["q_channels"] = ex.eeg.data.rows();
    meta["n_samples_audio"] = ex.mixture.samples.size();
    meta["n_samples_eeg"] = ex.eeg.data.cols();
    meta["stage"] = to_string(ex.eeg.stage);
    if (informative_channels) meta["informative_channels"] = *informative_channels;
    std::ofstream mf(exdir / "meta.json");
    if (!mf) throw std::runtime_error("write_dataset: cannot write " + (exdir / "meta.json").string());
    mf << meta.dump(2) << "\n";
  }
}

Dataset read_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("read_dataset: not a directory: " + dir);
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());

  Dataset ds;
  ds.reserve(subdirs.size());
  for (const auto& exdir : subdirs) {
    const fs::path meta_path = exdir / "meta.json";
    nlohmann::json meta;
    {
      std::ifstream mf(meta_path);
      if (!mf) throw std::runtime_error("read_dataset: cannot open " + meta_path.string());
      try {
        mf >> meta;
      } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("read_dataset: malformed " + meta_path.string() + ": " + e.what());
      }
    }
    MixtureExample ex;
    try {
      ex.example_id = meta.at("example_id").get<std::string>();
      ex.subject_id = meta.at("subject_id").get<std::string>();
      const double fs_audio = meta.at("fs_audio").get<double>();
      const double fs_eeg = meta.at("fs_eeg").get<double>();
      const auto q = meta.at("q_channels").get<Eigen::Index>();
      const auto n_audio = meta.at("n_samples_audio").get<Eigen::Index>();
      const auto n_eeg = meta.at("n_samples_eeg").get<Eigen::Index>();
      const EEGStage stage = eeg_stage_from_string(meta.at("stage").get<std::string>());

      auto load_audio = [&](const char* name) {
        const auto data = read_f32(exdir / name, static_cast<size_t>(n_audio));
        AudioWaveform w;
        w.fs = fs_audio;
        w.samples = Eigen::Map<const ArrF>(data.data(), n_audio);
        return w;
      };
      ex.mixture = load_audio("audio_mix.f32");
      ex.target = load_audio("audio_target.f32");
      ex.interferer = load_audio("audio_interf.f32");

      const auto eeg_flat = read_f32(exdir / "eeg.f32", static_cast<size_t>(q * n_eeg));
      ex.eeg.fs = fs_eeg;
      ex.eeg.stage = stage;
      ex.eeg.channel_labels = default_channel_labels(q);
      ex.eeg.data.resize(q, n_eeg);
      for (Eigen::Index c = 0; c < q; ++c)
        for (Eigen::Index t = 0; t < n_eeg; ++t)
          ex.eeg.data(c, t) = eeg_flat[static_cast<size_t>(c * n_eeg + t)];
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("read_dataset: malformed " + meta_path.string() + ": " + e.what());
    }
    ds.push_back(std::move(ex));
  }
  return ds;
}

DataSplit split_dataset(const Dataset& ds, double val_fraction, double test_fraction) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
    throw std::invalid_argument("split_dataset: fractions must be >= 0 and sum below 1");
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto n_test = static_cast<Eigen::Index>(std::floor(test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<Eigen::Index>(std::floor(val_fraction * static_cast<double>(n)));
  DataSplit split;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i >= n - n_test)
      split.test.push_back(ds[static_cast<size_t>(i)]);
    else if (i >= n - n_test - n_val)
      split.val.push_back(ds[static_cast<size_t>(i)]);
    else
      split.train.push_back(ds[static_cast<size_t>(i)]);
  }
  return split;
}

double envelope_decoder_mse(const Dataset& ds, const std::vector<int>& channels, int lags) {
  if (ds.empty()) throw std::invalid_argument("envelope_decoder_mse: empty dataset");
  if (channels.empty()) throw std::invalid_argument("envelope_decoder_mse: empty channel set");

  // Regression target: delta-band envelope of the target waveform, resampled
  // to the EEG rate. Derived from the waveform, not from generator internals.
  std::vector<Eigen::ArrayXd> targets;
  std::vector<Eigen::MatrixXd> eegs;
  Eigen::Index rows_total = 0;
  for (const auto& ex : ds) {
    const Eigen::ArrayXd audio = ex.target.samples.cast<double>();
    const auto analytic = analytic_signal(audio);
    Eigen::ArrayXd env(audio.size());
    for (Eigen::Index i = 0; i < audio.size(); ++i)
      env[i] = std::abs(analytic[static_cast<size_t>(i)]);
    Eigen::ArrayXd env_eeg = resample_sequence(env, ex.target.fs, ex.eeg.fs);
    const Eigen::Index n = std::min<Eigen::Index>(env_eeg.size(), ex.eeg.data.cols());
    Eigen::ArrayXd filtered = bandpass(env_eeg.head(n).eval(), delta_band(), ex.eeg.fs);
    targets.push_back(filtered);
    eegs.push_back(ex.eeg.data.cast<double>());
    rows_total += n - lags + 1;
  }

  const auto dim = static_cast<Eigen::Index>(channels.size()) * lags + 1;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(dim);
  auto fill_row = [&](const Eigen::MatrixXd& eeg, Eigen::Index t, Eigen::VectorXd& row) {
    Eigen::Index k = 0;
    for (int c : channels)
      for (int l = 0; l < lags; ++l) row[k++] = eeg(c, t - l);
    row[k] = 1.0;  // intercept
  };
  // skip the filter-transient edges of each window
  auto trim_of = [](Eigen::Index n) { return std::min<Eigen::Index>(32, n / 8); };
  Eigen::VectorXd row(dim);
  for (size_t e = 0; e < targets.size(); ++e) {
    const Eigen::Index n = targets[e].size();
    const Eigen::Index trim = trim_of(n);
    for (Eigen::Index t = std::max<Eigen::Index>(lags - 1, trim); t < n - trim; ++t) {
      fill_row(eegs[e], t, row);
      xtx.noalias() += row * row.transpose();
      xty.noalias() += row * targets[e][t];
    }
  }
  xtx.diagonal().array() += 1e-8 * xtx.trace() / static_cast<double>(dim);
  const Eigen::VectorXd w = xtx.ldlt().solve(xty);

  double sse = 0.0;
  Eigen::Index count = 0;
  for (size_t e = 0; e < targets.size(); ++e) {
    const Eigen::Index n = targets[e].size();
    const Eigen::Index trim = trim_of(n);
    for (Eigen::Index t = std::max<Eigen::Index>(lags - 1, trim); t < n - trim; ++t) {
      fill_row(eegs[e], t, row);
      const double err = targets[e][t] - w.dot(row);
      sse += err * err;
      ++count;
    }
  }
  return sse / static_cast<double>(count);
}

}  // namespace basen
