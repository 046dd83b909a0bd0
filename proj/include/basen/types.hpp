#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace basen {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using VecF = Vec<float>;
using ArrF = Eigen::ArrayXf;
using ArrD = Eigen::ArrayXd;

// Mono sample sequence. Sources, mixtures and estimates all use this.
struct AudioWaveform {
  ArrF samples;       // unitless amplitude
  double fs = 14700;  // samples/second

  Eigen::Index length() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / fs; }

  void validate(const char* where = "AudioWaveform") const {
    if (fs <= 0.0) throw std::invalid_argument(std::string(where) + ": fs must be > 0");
    if (samples.size() < 1) throw std::invalid_argument(std::string(where) + ": length must be >= 1");
    if (!samples.allFinite()) throw std::invalid_argument(std::string(where) + ": non-finite samples");
  }
};

enum class EEGStage { raw, filtered, mua };

inline const char* to_string(EEGStage s) {
  switch (s) {
    case EEGStage::raw: return "raw";
    case EEGStage::filtered: return "filtered";
    case EEGStage::mua: return "mua";
  }
  return "raw";
}

inline EEGStage eeg_stage_from_string(const std::string& s) {
  if (s == "raw") return EEGStage::raw;
  if (s == "filtered") return EEGStage::filtered;
  if (s == "mua") return EEGStage::mua;
  throw std::invalid_argument("eeg_stage_from_string: unknown stage '" + s + "'");
}

// Q-channel EEG trial, channel-major (row = channel).
struct EEGTrial {
  MatF data;          // Q x T
  double fs = 128;    // samples/second
  std::vector<std::string> channel_labels;
  EEGStage stage = EEGStage::raw;

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index length() const { return data.cols(); }
  double duration_s() const { return static_cast<double>(data.cols()) / fs; }

  void validate(const char* where = "EEGTrial") const {
    if (fs <= 0.0) throw std::invalid_argument(std::string(where) + ": fs must be > 0");
    if (data.rows() < 1) throw std::invalid_argument(std::string(where) + ": needs Q >= 1 channels");
    if (!data.allFinite()) throw std::invalid_argument(std::string(where) + ": non-finite values");
    if (!channel_labels.empty() &&
        static_cast<Eigen::Index>(channel_labels.size()) != data.rows())
      throw std::invalid_argument(std::string(where) + ": label count != channel count");
  }
};

inline std::vector<std::string> default_channel_labels(Eigen::Index q) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) labels.push_back("ch" + std::to_string(i));
  return labels;
}

// Passband of a band-pass filter, plus its realized order (pole count).
struct BandSpec {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
  int order = 4;  // total pole count of the band-pass realization; must be even

  void validate(double fs, const char* where = "BandSpec") const {
    if (!(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0))
      throw std::invalid_argument(std::string(where) +
                                  ": band must satisfy 0 <= lo < hi < fs/2 (lo=" +
                                  std::to_string(lo_hz) + ", hi=" + std::to_string(hi_hz) +
                                  ", fs=" + std::to_string(fs) + ")");
    if (order < 2 || order % 2 != 0)
      throw std::invalid_argument(std::string(where) + ": order must be a positive even number");
  }
};

}  // namespace basen
