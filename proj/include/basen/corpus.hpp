#pragma once

#include "basen/rng.hpp"
#include "basen/types.hpp"

#include <string>
#include <vector>

namespace basen {

// One paired audio/EEG example. mixture = target + interferer sample-wise.
struct MixtureExample {
  AudioWaveform mixture;
  AudioWaveform target;
  AudioWaveform interferer;
  EEGTrial eeg;
  std::string subject_id;
  std::string example_id;
};

using Dataset = std::vector<MixtureExample>;

// Synthetic corpus: two amplitude-modulated band-noise sources in distinct
// carrier bands with distinct modulation rates, mixed at 0 dB. Which source
// is the attended target flips randomly per example, so the mixture alone is
// ambiguous; the informative EEG channels carry the delta-band-filtered
// envelope of the target (plus noise at eeg_snr_db) and resolve it.
struct SynthConfig {
  int q_channels = 16;
  std::vector<int> informative_channels = {1, 5, 9, 13};
  double eeg_snr_db = 0.0;  // +inf disables EEG noise
  double seg_len_s = 2.0;
  int n_examples = 1;
  uint64_t seed = 0;

  double fs_audio = 1000.0;
  double fs_eeg = 128.0;
  int n_subjects = 4;
  // modulator rates of the two source archetypes
  double env_rate_a_hz = 2.0;
  double env_rate_b_hz = 3.5;
  double env_floor = 0.15;  // modulation trough, in (0,1)
  // carrier bands as fractions of the audio Nyquist
  double band_a_lo = 0.10, band_a_hi = 0.35;
  double band_b_lo = 0.45, band_b_hi = 0.90;

  void validate(const char* where = "SynthConfig") const;
};

// Deterministic per-example generation; the RNG stream is derived from
// (cfg.seed, example_id), so generation order does not matter.
MixtureExample generate_example(const SynthConfig& cfg, int example_index);
MixtureExample generate_example(const SynthConfig& cfg, Rng& rng, const std::string& example_id,
                                const std::string& subject_id);

Dataset generate_dataset(const SynthConfig& cfg);

// The clean modulation envelope of the target, sampled at the EEG rate and
// delta-band filtered; what the informative channels carry before noise.
Eigen::ArrayXd planted_eeg_signal(const SynthConfig& cfg, int example_index);

// --- on-disk format ----------------------------------------------------------
// One subdirectory per example: audio_mix.f32, audio_target.f32,
// audio_interf.f32, eeg.f32 (raw little-endian float32, EEG channel-major)
// and meta.json. Round-trips are bit-exact.

void write_dataset(const Dataset& ds, const std::string& dir,
                   const std::vector<int>* informative_channels = nullptr);
Dataset read_dataset(const std::string& dir);

// Deterministic split by example index: test takes the tail, validation the
// slice before it.
struct DataSplit {
  Dataset train, val, test;
};
DataSplit split_dataset(const Dataset& ds, double val_fraction, double test_fraction);

// Identifiability check: MSE of a lagged linear decoder reconstructing the
// target envelope from the given channels (lower = more informative).
double envelope_decoder_mse(const Dataset& ds, const std::vector<int>& channels, int lags = 8);

}  // namespace basen
