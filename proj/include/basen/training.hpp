#pragma once

#include "basen/checkpoint.hpp"
#include "basen/corpus.hpp"
#include "basen/metrics.hpp"
#include "basen/model.hpp"
#include "basen/selection.hpp"

#include <optional>
#include <string>
#include <vector>

namespace basen {

// Linear warmup into cosine annealing, both ends pinned (0 at step 0 and at
// the final step, max_lr at the warmup boundary).
struct ScheduleConfig {
  double max_lr = 2e-4;
  double warmup_ratio = 0.05;
  int total_epochs = 60;
  int batch_size = 8;
  double beta1 = 0.9;  // first-moment decay
  double beta2 = 0.999;

  void validate(const char* where = "ScheduleConfig") const {
    if (!(warmup_ratio > 0.0 && warmup_ratio < 1.0))
      throw std::invalid_argument(std::string(where) + ": warmup_ratio must be in (0,1)");
    if (max_lr <= 0.0) throw std::invalid_argument(std::string(where) + ": max_lr must be > 0");
    if (total_epochs < 1) throw std::invalid_argument(std::string(where) + ": total_epochs >= 1");
    if (batch_size < 1) throw std::invalid_argument(std::string(where) + ": batch_size >= 1");
  }
};

double lr_at(int64_t step, int64_t total_steps, const ScheduleConfig& sched);

// Geometric decay between the configured endpoints.
struct TemperatureSchedule {
  double tau_start = 10.0;
  double tau_end = 0.1;
  int total_epochs = 60;

  void validate(const char* where = "TemperatureSchedule") const {
    if (!(tau_start > tau_end && tau_end > 0.0))
      throw std::invalid_argument(std::string(where) + ": need tau_start > tau_end > 0");
    if (total_epochs < 1)
      throw std::invalid_argument(std::string(where) + ": total_epochs >= 1");
  }
};

double tau_at(double epoch, const TemperatureSchedule& sched);

// --- run logging ------------------------------------------------------------

struct StepLog {
  int64_t step = 0;
  double si_sdr_db = 0.0, l_d = 0.0, l_reg = 0.0, total = 0.0, lr = 0.0, tau = 0.0;
};

struct EpochLog {
  int epoch = 0;  // 0 is the pre-training state; epoch e is after e epochs
  double val_total = 0.0, val_si_sdr = 0.0, val_l_d = 0.0, val_l_reg = 0.0;
  double mean_abs_dev = 0.0;  // mean |s - q| of selection vectors, ConvRS only
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  bool aborted_nan = false;
  std::string abort_reason;

  std::vector<double> val_curve() const {
    std::vector<double> v;
    v.reserve(epochs.size());
    for (const auto& e : epochs) v.push_back(e.val_total);
    return v;
  }
};

// Appends one JSON line per step to <run_dir>/metrics.jsonl and snapshots
// configs/checkpoints alongside. A null logger (empty dir) keeps everything
// in memory only.
class RunLogger {
 public:
  explicit RunLogger(std::string run_dir);
  bool active() const { return !dir_.empty(); }
  const std::string& dir() const { return dir_; }
  void write_text(const std::string& filename, const std::string& content) const;
  void append_step(const StepLog& s, const std::string& stage) const;
  void save_checkpoint(const std::string& filename, const Checkpoint& ckpt) const;

 private:
  std::string dir_;
};

// --- pipelines ---------------------------------------------------------------

struct TrainOptions {
  ScheduleConfig sched;
  LossWeights loss;
  TemperatureSchedule temp;
  uint64_t seed = 0;
  std::string run_dir;  // empty = no artifacts on disk
  bool zero_eeg = false;
  double grad_clip_norm = 5.0;
  bool aux_interferer_loss = false;  // adds SI-SDR of mask 1 vs (mixture - target)
  double selector_lr_mult = 1.0;
};

struct BasenTrainResult {
  TrainLog log;
  Checkpoint checkpoint;
  double final_val_total = 0.0;
};

BasenTrainResult train_basen(const Dataset& train, const Dataset& val, const ModelConfig& mc,
                             const TrainOptions& opt);

// Plain GCS + BASEN trained jointly from scratch: the selector feeds its K
// sampled mixdown channels straight into a K-input BASEN. The unstable
// baseline the residual method exists to fix.
struct GcsOptions {
  int k_neurons = 4;
  double selector_init_std = 0.1;
};

struct GcsTrainResult {
  TrainLog log;
  ChannelSubset subset;
  Checkpoint checkpoint;
  double final_val_total = 0.0;
};

GcsTrainResult train_gcs(const Dataset& train, const Dataset& val, const ModelConfig& mc,
                         const GcsOptions& gopt, const TrainOptions& opt);

// Residual Gumbel selection on top of a pre-trained BASEN. Stage 1 blends the
// padded selector output into the raw EEG under temperature annealing; stage 2
// freezes the selector, keeps only the hard-selected channels (others zeroed)
// and fine-tunes BASEN.
struct ResgsOptions {
  int k_neurons = 4;
  double residual_weight = 0.1;  // a
  int stage1_epochs = 5;
  int stage2_epochs = 60;
  ResgsPadding padding = ResgsPadding::leading;
  double selector_init_std = 0.1;  // score spread at init; breaks neuron symmetry
};

struct ResgsTrainResult {
  TrainLog stage1, stage2;
  ChannelSubset subset;
  Checkpoint checkpoint;
  double final_val_total = 0.0;
};

ResgsTrainResult train_resgs(const Dataset& train, const Dataset& val,
                             const Checkpoint& pretrained_basen, const ResgsOptions& ropt,
                             const TrainOptions& opt);

// Progressive ConvRS sweep: gamma = 0 trains selector+BASEN jointly from
// scratch; every following gamma warm-starts from the previous model, trains
// the selector with BASEN frozen, then fine-tunes BASEN with the selector
// frozen.
struct ConvrsOptions {
  int n1_blocks = 4;
  double select_threshold = 0.5;
  int gamma0_epochs = 60;
  int stage1_epochs = 5;
  int stage2_epochs = 60;
  double stage1_max_lr = 0.005;
  double stage2_max_lr = 0.0002;
};

struct ConvrsGammaResult {
  double gamma = 0.0;
  TrainLog stage1, stage2;  // for gamma = 0 only stage2 is filled (joint run)
  ChannelSubset subset;
  Checkpoint checkpoint;
  double final_val_total = 0.0;
};

std::vector<ConvrsGammaResult> train_convrs_progressive(const Dataset& train, const Dataset& val,
                                                        const ModelConfig& mc,
                                                        const std::vector<double>& gamma_list,
                                                        const ConvrsOptions& copt,
                                                        const TrainOptions& opt);

}  // namespace basen
