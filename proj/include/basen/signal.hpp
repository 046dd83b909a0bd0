#pragma once

#include "basen/types.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace basen {

// --- band-pass -------------------------------------------------------------

// Zero-phase band-pass of a single sequence. Output length equals input
// length; pass-band gain is flat within a fraction of a dB.
Eigen::ArrayXd bandpass(const Eigen::ArrayXd& x, const BandSpec& band, double fs);
ArrF bandpass(const ArrF& x, const BandSpec& band, double fs);

// Per-channel band-pass of an EEG trial; stage becomes `filtered`.
EEGTrial bandpass(const EEGTrial& e, const BandSpec& band);

inline BandSpec eeg_broadband() { return BandSpec{0.1, 45.0, 4}; }
inline BandSpec gamma_band() { return BandSpec{30.0, 45.0, 4}; }
inline BandSpec delta_band() { return BandSpec{0.5, 4.0, 4}; }

// --- MUA -------------------------------------------------------------------

struct MuaResult {
  EEGTrial trial;  // stage = mua
  // channels whose delta band carried no energy; their output rows are zero
  std::vector<Eigen::Index> undefined_phase_channels;
};

// Multi-unit neural activity surrogate per channel:
//   U(t) = a_gamma * gamma-band amplitude envelope + a_delta * delta-band
//   instantaneous phase (radians, [-pi, pi]).
// Envelope and phase come from the analytic signal of the band-passed row.
MuaResult compute_mua(const EEGTrial& e, double a_gamma = 0.5, double a_delta = 0.5);

// --- mixing ----------------------------------------------------------------

struct MixResult {
  AudioWaveform mixture;     // target + interferer, sample-wise
  AudioWaveform target;      // s1 rescaled
  AudioWaveform interferer;  // s2 rescaled
};

// Rescale s1/s2 so their RMS ratio realizes snr_db, then add. The interferer
// lands at a fixed reference RMS and the target at ref * 10^(snr/20).
MixResult mix_at_snr(const AudioWaveform& s1, const AudioWaveform& s2, double snr_db);

double rms(const ArrF& x);
double rms(const Eigen::ArrayXd& x);

// --- segmentation ----------------------------------------------------------

// Cut into equal-length segments; a trailing remainder shorter than
// seg_len_s is dropped. Returns an empty list (and sets *warned_too_short)
// when the input is shorter than one segment.
std::vector<AudioWaveform> segment(const AudioWaveform& x, double seg_len_s, double hop_s,
                                   bool* warned_too_short = nullptr);
std::vector<EEGTrial> segment(const EEGTrial& e, double seg_len_s, double hop_s,
                              bool* warned_too_short = nullptr);

// Segment boundaries shared between an audio stream and an EEG stream: the
// i-th segment of each starts at the same wall-clock instant.
std::vector<std::pair<AudioWaveform, EEGTrial>> segment_synchronized(
    const AudioWaveform& x, const EEGTrial& e, double seg_len_s, double hop_s,
    bool* warned_too_short = nullptr);

// --- resampling ------------------------------------------------------------

// Polyphase rational resampling with a Kaiser-windowed sinc anti-aliasing
// kernel. Output length is ceil(len * to_fs / fs).
AudioWaveform resample(const AudioWaveform& x, double to_fs);
Eigen::ArrayXd resample_sequence(const Eigen::ArrayXd& x, double fs, double to_fs);

}  // namespace basen
