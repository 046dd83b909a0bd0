#pragma once

#include "basen/corpus.hpp"
#include "basen/metrics.hpp"
#include "basen/model.hpp"
#include "basen/training.hpp"

#include <string>
#include <vector>

namespace basen {

struct PreprocessConfig {
  double band_lo_hz = 0.1;
  double band_hi_hz = 45.0;
  int filter_order = 4;
  double a_gamma = 0.5;
  double a_delta = 0.5;
  double seg_len_s = 2.0;
  double hop_s = 2.0;
  double audio_fs = 0.0;  // 0 keeps the stored rate
};

struct TrainSectionConfig {
  std::string method = "basen";  // basen | resgs | convrs | gcs
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  bool zero_eeg = false;
  bool aux_interferer_loss = false;
  double grad_clip_norm = 5.0;
  double selector_lr_mult = 1.0;
  int k_neurons = 4;
  double resgs_a = 0.1;
  int resgs_stage1_epochs = 5;
  int resgs_stage2_epochs = 60;
  std::string resgs_padding = "leading";  // leading | scatter
  std::vector<double> gamma_list = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35};
  int convrs_n1_blocks = 4;
  double convrs_threshold = 0.5;
  int convrs_gamma0_epochs = 60;
  int convrs_stage1_epochs = 5;
  int convrs_stage2_epochs = 60;
  double convrs_stage1_max_lr = 0.005;
  double convrs_stage2_max_lr = 0.0002;
};

struct PathsConfig {
  std::string dataset;
  std::string run_dir;
  std::string pretrained;  // BASEN checkpoint for ResGS
  std::string layout_csv;  // channel map coordinates, optional
};

// Whole-run configuration: one JSON document, unknown keys rejected, every
// default explicit after load.
struct RunConfig {
  uint64_t seed = 0;
  SynthConfig synth;
  PreprocessConfig preprocess;
  ModelConfig model;
  LossWeights loss;
  ScheduleConfig schedule;
  TemperatureSchedule temperature;
  TrainSectionConfig train;
  PathsConfig paths;
};

// Throws std::invalid_argument listing every offending key.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

// Applies "section.key=value" overrides (value parsed as JSON when possible).
std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides);

}  // namespace basen
