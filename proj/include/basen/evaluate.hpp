#pragma once

#include "basen/checkpoint.hpp"
#include "basen/corpus.hpp"
#include "basen/metrics.hpp"
#include "basen/selection.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace basen {

struct Aggregates {
  double mean = 0.0, median = 0.0, q1 = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
};

Aggregates aggregate(std::vector<double> values);

struct EvalSummary {
  struct PerExample {
    std::string example_id, subject_id;
    double si_sdr = 0.0;          // estimate vs target
    double si_sdr_mixture = 0.0;  // unprocessed mixture vs target
    double si_sdri = 0.0;         // improvement
    std::map<std::string, double> extra;  // external metric adapters
  };
  std::vector<PerExample> examples;
  Aggregates si_sdr, si_sdri;
  std::map<std::string, Aggregates> per_subject_si_sdri;
};

std::string eval_summary_to_json(const EvalSummary& summary);

// Runs a checkpointed model over a dataset. If a subset is given, all
// non-selected EEG channels are zeroed before inference, keeping the model
// shape-compatible with full-Q checkpoints.
EvalSummary evaluate(const Checkpoint& ckpt, const Dataset& ds,
                     const std::optional<ChannelSubset>& selection = std::nullopt,
                     const std::map<std::string, ExternalMetricFn>& extra_metrics = {});

// Same protocol with an arbitrary estimator, for oracle stubs in tests.
using InferenceFn = std::function<AudioWaveform(const MixtureExample&)>;
EvalSummary evaluate_with(const InferenceFn& infer, const Dataset& ds,
                          const std::map<std::string, ExternalMetricFn>& extra_metrics = {});

// Single-example inference through a checkpoint (target estimate).
AudioWaveform run_inference(const Checkpoint& ckpt, const MixtureExample& ex,
                            const std::optional<ChannelSubset>& selection = std::nullopt);

// Partition a subset's indices by multiplicity.
struct DuplicateReport {
  std::vector<int> unique;
  std::vector<int> duplicated;
};
DuplicateReport duplicate_report(const ChannelSubset& subset);

// --- channel maps -----------------------------------------------------------

struct ChannelPosition {
  int index = 0;
  std::string label;
  double x = 0.0, y = 0.0;  // in [-1, 1]
};
using ChannelLayout = std::vector<ChannelPosition>;

// Bundled synthetic layout: a centered grid inside the unit square.
ChannelLayout synthetic_grid_layout(int q_channels);

// CSV rows: channel_index,label,x,y  with x, y in [-1, 1].
ChannelLayout load_layout_csv(const std::string& path);

// Writes an SVG channel map (hollow = unselected, filled = unique selection,
// distinct fill = duplicated) plus a sidecar JSON with the same data at
// <out_path>.json.
void render_channel_map(const ChannelSubset& subset, const ChannelLayout& layout,
                        const std::string& out_path);

}  // namespace basen
