#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "basen/corpus.hpp"
#include "basen/fft_utils.hpp"
#include "basen/metrics.hpp"
#include "basen/signal.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace basen;
namespace fs = std::filesystem;

namespace {

double pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  const Eigen::ArrayXd ac = a - a.mean();
  const Eigen::ArrayXd bc = b - b.mean();
  return (ac * bc).sum() / std::sqrt(ac.square().sum() * bc.square().sum());
}

// Envelope oracle: |analytic(target)| resampled to the EEG rate, delta-band
// filtered, edges trimmed (the filter transient is a measurement artifact).
// Uses only the stored waveform, not generator internals.
constexpr Eigen::Index kEdgeTrim = 32;

Eigen::ArrayXd envelope_oracle(const MixtureExample& ex) {
  const Eigen::ArrayXd audio = ex.target.samples.cast<double>();
  const auto analytic = analytic_signal(audio);
  Eigen::ArrayXd env(audio.size());
  for (Eigen::Index i = 0; i < audio.size(); ++i)
    env[i] = std::abs(analytic[static_cast<size_t>(i)]);
  Eigen::ArrayXd env_eeg = resample_sequence(env, ex.target.fs, ex.eeg.fs);
  env_eeg.conservativeResize(std::min<Eigen::Index>(env_eeg.size(), ex.eeg.data.cols()));
  const Eigen::ArrayXd filtered = bandpass(env_eeg, delta_band(), ex.eeg.fs);
  return filtered.segment(kEdgeTrim, filtered.size() - 2 * kEdgeTrim);
}

Eigen::ArrayXd interior(const Eigen::ArrayXd& x) {
  return x.segment(kEdgeTrim, x.size() - 2 * kEdgeTrim);
}

SynthConfig desk_config(int n_examples, uint64_t seed) {
  SynthConfig cfg;
  cfg.n_examples = n_examples;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("generate_example: noise-free informative channels track the target envelope") {
  SynthConfig cfg = desk_config(8, 42);
  cfg.seg_len_s = 4.0;  // longer window tightens the sampling noise of the oracle
  cfg.eeg_snr_db = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.n_examples; ++i) {
    const MixtureExample ex = generate_example(cfg, i);
    const Eigen::ArrayXd oracle = envelope_oracle(ex);
    for (int c = 0; c < cfg.q_channels; ++c) {
      const Eigen::ArrayXd full = ex.eeg.data.row(c).transpose().array().cast<double>();
      const double corr = pearson(interior(full).head(oracle.size()), oracle);
      const bool informative =
          std::find(cfg.informative_channels.begin(), cfg.informative_channels.end(), c) !=
          cfg.informative_channels.end();
      if (informative) {
        CHECK(corr > 0.9);
      } else {
        CHECK(std::abs(corr) < 0.2);
      }
    }
  }
}

TEST_CASE("generate_example: same seed twice is bit-identical") {
  const SynthConfig cfg = desk_config(3, 7);
  for (int i = 0; i < 3; ++i) {
    const MixtureExample a = generate_example(cfg, i);
    const MixtureExample b = generate_example(cfg, i);
    CHECK((a.mixture.samples == b.mixture.samples).all());
    CHECK((a.target.samples == b.target.samples).all());
    CHECK(a.eeg.data == b.eeg.data);
    CHECK(a.example_id == b.example_id);
  }
}

TEST_CASE("generate_example: empty informative set leaves every channel uncorrelated") {
  SynthConfig cfg = desk_config(4, 11);
  cfg.seg_len_s = 4.0;
  cfg.informative_channels.clear();
  for (int i = 0; i < cfg.n_examples; ++i) {
    const MixtureExample ex = generate_example(cfg, i);
    const Eigen::ArrayXd oracle = envelope_oracle(ex);
    for (int c = 0; c < cfg.q_channels; ++c) {
      const Eigen::ArrayXd full = ex.eeg.data.row(c).transpose().array().cast<double>();
      CHECK(std::abs(pearson(interior(full).head(oracle.size()), oracle)) < 0.2);
    }
  }
}

TEST_CASE("generate_example: mixture is the sample-wise sum at 0 dB") {
  const SynthConfig cfg = desk_config(6, 3);
  for (int i = 0; i < cfg.n_examples; ++i) {
    const MixtureExample ex = generate_example(cfg, i);
    CHECK((ex.mixture.samples - ex.target.samples - ex.interferer.samples).abs().maxCoeff() <
          1e-6f);
    CHECK(std::abs(si_sdr(ex.mixture, ex.target)) < 1.5);
    // eeg duration within one EEG sample of the audio duration
    CHECK(std::abs(ex.eeg.duration_s() - ex.mixture.duration_s()) <= 1.0 / ex.eeg.fs);
  }
}

TEST_CASE("planted-channel identifiability: informative decoder beats a random subset 5x") {
  SynthConfig cfg = desk_config(16, 99);
  cfg.seg_len_s = 4.0;  // filter transients eat too much of a 2 s window
  const Dataset ds = generate_dataset(cfg);
  const double mse_info = envelope_decoder_mse(ds, cfg.informative_channels);
  const double mse_rand = envelope_decoder_mse(ds, {0, 4, 8, 12});
  CHECK(mse_rand / mse_info >= 5.0);
}

TEST_CASE("write/read round-trip is elementwise identical") {
  const SynthConfig cfg = desk_config(10, 5);
  const Dataset ds = generate_dataset(cfg);
  const std::string dir = (fs::temp_directory_path() / "basen_corpus_rt").string();
  fs::remove_all(dir);
  write_dataset(ds, dir, &cfg.informative_channels);
  const Dataset back = read_dataset(dir);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].example_id == ds[i].example_id);
    CHECK(back[i].subject_id == ds[i].subject_id);
    CHECK((back[i].mixture.samples == ds[i].mixture.samples).all());
    CHECK((back[i].target.samples == ds[i].target.samples).all());
    CHECK((back[i].interferer.samples == ds[i].interferer.samples).all());
    CHECK(back[i].eeg.data == ds[i].eeg.data);
    CHECK(back[i].eeg.stage == ds[i].eeg.stage);
    CHECK(back[i].mixture.fs == ds[i].mixture.fs);
    CHECK(back[i].eeg.fs == ds[i].eeg.fs);
  }
  fs::remove_all(dir);
}

TEST_CASE("read_dataset: truncated payload names the file and byte counts") {
  const SynthConfig cfg = desk_config(1, 8);
  const Dataset ds = generate_dataset(cfg);
  const std::string dir = (fs::temp_directory_path() / "basen_corpus_trunc").string();
  fs::remove_all(dir);
  write_dataset(ds, dir);
  const fs::path victim = fs::path(dir) / ds[0].example_id / "eeg.f32";
  fs::resize_file(victim, 17);
  try {
    read_dataset(dir);
    FAIL("expected a format error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("eeg.f32") != std::string::npos);
    CHECK(msg.find("17") != std::string::npos);        // actual bytes
    CHECK(msg.find("expected") != std::string::npos);  // expected bytes named
  }
  fs::remove_all(dir);
}

TEST_CASE("read_dataset: empty directory gives an empty list") {
  const std::string dir = (fs::temp_directory_path() / "basen_corpus_empty").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK(read_dataset(dir).empty());
  fs::remove_all(dir);
}

TEST_CASE("read_dataset: malformed meta.json names the file") {
  const SynthConfig cfg = desk_config(1, 8);
  const Dataset ds = generate_dataset(cfg);
  const std::string dir = (fs::temp_directory_path() / "basen_corpus_badmeta").string();
  fs::remove_all(dir);
  write_dataset(ds, dir);
  {
    std::ofstream bad(fs::path(dir) / ds[0].example_id / "meta.json");
    bad << "{not json";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("meta.json"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("split_dataset is deterministic and partitions") {
  const SynthConfig cfg = desk_config(20, 31);
  const Dataset ds = generate_dataset(cfg);
  const DataSplit split = split_dataset(ds, 0.1, 0.1);
  CHECK(split.train.size() == 16);
  CHECK(split.val.size() == 2);
  CHECK(split.test.size() == 2);
}

TEST_CASE("SynthConfig validation rejects bad settings") {
  SynthConfig cfg;
  cfg.informative_channels = {99};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.n_examples = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
