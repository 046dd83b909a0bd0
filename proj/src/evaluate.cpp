#include "basen/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace basen {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

MatF audio_row(const AudioWaveform& w) {
  return Eigen::Map<const MatF>(w.samples.data(), 1, w.samples.size());
}

MatF apply_selection(const MatF& eeg, const std::optional<ChannelSubset>& selection) {
  if (!selection) return eeg;
  for (int idx : selection->indices)
    if (idx < 0 || idx >= eeg.rows())
      throw std::invalid_argument("evaluate: subset index " + std::to_string(idx) +
                                  " out of range for Q=" + std::to_string(eeg.rows()));
  MatF masked = MatF::Zero(eeg.rows(), eeg.cols());
  for (int idx : selection->indices) masked.row(idx) = eeg.row(idx);
  return masked;
}

nlohmann::ordered_json agg_json(const Aggregates& a) {
  return {{"mean", a.mean}, {"median", a.median}, {"q1", a.q1},
          {"q3", a.q3},     {"min", a.min},       {"max", a.max}};
}

}  // namespace

Aggregates aggregate(std::vector<double> values) {
  Aggregates a;
  if (values.empty()) return a;
  std::sort(values.begin(), values.end());
  a.min = values.front();
  a.max = values.back();
  a.median = quantile_sorted(values, 0.5);
  a.q1 = quantile_sorted(values, 0.25);
  a.q3 = quantile_sorted(values, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  return a;
}

AudioWaveform run_inference(const Checkpoint& ckpt, const MixtureExample& ex,
                            const std::optional<ChannelSubset>& selection) {
  int q = 0;
  std::string method;
  const ModelConfig mc = model_config_from_json(ckpt.config_json, &q, &method);

  MatF eeg_in;
  if (method == "gcs") {
    // test-mode selector: each neuron contributes its argmax channel
    const MatF* la = ckpt.find("selector.log_alpha");
    if (!la) throw std::runtime_error("run_inference: gcs checkpoint lacks selector.log_alpha");
    if (la->cols() != ex.eeg.data.rows())
      throw std::runtime_error("run_inference: checkpoint Q does not match example");
    eeg_in.resize(la->rows(), ex.eeg.data.cols());
    for (Eigen::Index k = 0; k < la->rows(); ++k) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < la->cols(); ++c)
        if ((*la)(k, c) > (*la)(k, best)) best = c;
      eeg_in.row(k) = ex.eeg.data.row(best);
    }
  } else {
    if (q != ex.eeg.data.rows())
      throw std::runtime_error("run_inference: checkpoint Q=" + std::to_string(q) +
                               " does not match example Q=" + std::to_string(ex.eeg.data.rows()));
    eeg_in = apply_selection(ex.eeg.data, selection);
  }

  BasenModel<float> model(mc, method == "gcs" ? static_cast<int>(eeg_in.rows()) : q);
  load_into_store(ckpt, model.params());

  Graph<float> g;
  GraphContext<float> ctx(g, model.params());
  ctx.inference = true;
  auto fwd = model.forward(ctx, audio_row(ex.mixture), eeg_in);
  AudioWaveform est;
  est.fs = ex.mixture.fs;
  est.samples = fwd.est_target.val().row(0).transpose().array();
  return est;
}

EvalSummary evaluate_with(const InferenceFn& infer, const Dataset& ds,
                          const std::map<std::string, ExternalMetricFn>& extra_metrics) {
  EvalSummary summary;
  std::vector<double> si_values, sii_values;
  std::map<std::string, std::vector<double>> subject_sii;
  for (const auto& ex : ds) {
    const AudioWaveform est = infer(ex);
    EvalSummary::PerExample pe;
    pe.example_id = ex.example_id;
    pe.subject_id = ex.subject_id;
    pe.si_sdr = si_sdr(est, ex.target);
    pe.si_sdr_mixture = si_sdr(ex.mixture, ex.target);
    pe.si_sdri = pe.si_sdr - pe.si_sdr_mixture;
    for (const auto& [name, fn] : extra_metrics)
      pe.extra[name] = fn(est.samples, ex.target.samples, ex.target.fs);
    si_values.push_back(pe.si_sdr);
    sii_values.push_back(pe.si_sdri);
    subject_sii[pe.subject_id].push_back(pe.si_sdri);
    summary.examples.push_back(std::move(pe));
  }
  summary.si_sdr = aggregate(si_values);
  summary.si_sdri = aggregate(sii_values);
  for (auto& [subject, values] : subject_sii)
    summary.per_subject_si_sdri[subject] = aggregate(values);
  return summary;
}

EvalSummary evaluate(const Checkpoint& ckpt, const Dataset& ds,
                     const std::optional<ChannelSubset>& selection,
                     const std::map<std::string, ExternalMetricFn>& extra_metrics) {
  // model rebuilt once; run_inference per example would re-load parameters
  int q = 0;
  std::string method;
  const ModelConfig mc = model_config_from_json(ckpt.config_json, &q, &method);
  if (method == "gcs") {
    return evaluate_with(
        [&](const MixtureExample& ex) { return run_inference(ckpt, ex, selection); }, ds,
        extra_metrics);
  }
  BasenModel<float> model(mc, q);
  load_into_store(ckpt, model.params());
  return evaluate_with(
      [&](const MixtureExample& ex) {
        if (ex.eeg.data.rows() != q)
          throw std::runtime_error("evaluate: example Q does not match checkpoint");
        Graph<float> g;
        GraphContext<float> ctx(g, model.params());
        ctx.inference = true;
        auto fwd = model.forward(ctx, audio_row(ex.mixture),
                                 apply_selection(ex.eeg.data, selection));
        AudioWaveform est;
        est.fs = ex.mixture.fs;
        est.samples = fwd.est_target.val().row(0).transpose().array();
        return est;
      },
      ds, extra_metrics);
}

std::string eval_summary_to_json(const EvalSummary& summary) {
  nlohmann::ordered_json j;
  j["si_sdr"] = agg_json(summary.si_sdr);
  j["si_sdri"] = agg_json(summary.si_sdri);
  nlohmann::ordered_json subjects;
  for (const auto& [name, agg] : summary.per_subject_si_sdri) subjects[name] = agg_json(agg);
  j["per_subject_si_sdri"] = subjects;
  nlohmann::ordered_json examples = nlohmann::ordered_json::array();
  for (const auto& pe : summary.examples) {
    nlohmann::ordered_json e;
    e["example_id"] = pe.example_id;
    e["subject_id"] = pe.subject_id;
    e["si_sdr"] = pe.si_sdr;
    e["si_sdr_mixture"] = pe.si_sdr_mixture;
    e["si_sdri"] = pe.si_sdri;
    for (const auto& [name, v] : pe.extra) e[name] = v;
    examples.push_back(e);
  }
  j["examples"] = examples;
  return j.dump(2) + "\n";
}

DuplicateReport duplicate_report(const ChannelSubset& subset) {
  std::map<int, int> counts;
  for (int idx : subset.indices) counts[idx]++;
  DuplicateReport report;
  for (const auto& [idx, n] : counts) {
    if (n == 1)
      report.unique.push_back(idx);
    else
      report.duplicated.push_back(idx);
  }
  return report;
}

ChannelLayout synthetic_grid_layout(int q_channels) {
  if (q_channels < 1) throw std::invalid_argument("synthetic_grid_layout: Q must be >= 1");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(q_channels))));
  const int rows = (q_channels + cols - 1) / cols;
  ChannelLayout layout;
  layout.reserve(static_cast<size_t>(q_channels));
  for (int i = 0; i < q_channels; ++i) {
    const int r = i / cols, c = i % cols;
    ChannelPosition p;
    p.index = i;
    p.label = "ch" + std::to_string(i);
    p.x = cols == 1 ? 0.0 : -0.9 + 1.8 * static_cast<double>(c) / static_cast<double>(cols - 1);
    p.y = rows == 1 ? 0.0 : 0.9 - 1.8 * static_cast<double>(r) / static_cast<double>(rows - 1);
    layout.push_back(p);
  }
  return layout;
}

ChannelLayout load_layout_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_layout_csv: cannot open " + path);
  ChannelLayout layout;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx_s, label, x_s, y_s;
    if (!std::getline(ss, idx_s, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, x_s, ',') || !std::getline(ss, y_s))
      throw std::runtime_error("load_layout_csv: malformed row '" + line + "'");
    if (first && idx_s == "channel_index") {  // header row
      first = false;
      continue;
    }
    first = false;
    ChannelPosition p;
    p.index = std::stoi(idx_s);
    p.label = label;
    p.x = std::stod(x_s);
    p.y = std::stod(y_s);
    if (p.x < -1.0 || p.x > 1.0 || p.y < -1.0 || p.y > 1.0)
      throw std::runtime_error("load_layout_csv: coordinates must lie in [-1,1]");
    layout.push_back(p);
  }
  return layout;
}

void render_channel_map(const ChannelSubset& subset, const ChannelLayout& layout,
                        const std::string& out_path) {
  const DuplicateReport report = duplicate_report(subset);
  auto contains = [](const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  for (int idx : subset.indices) {
    const bool found = std::any_of(layout.begin(), layout.end(),
                                   [idx](const ChannelPosition& p) { return p.index == idx; });
    if (!found)
      throw std::invalid_argument("render_channel_map: no coordinates for channel " +
                                  std::to_string(idx));
  }

  auto px = [](double v) { return 200.0 + 180.0 * v; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" "
         "viewBox=\"0 0 400 400\">\n";
  svg << "  <circle cx=\"200\" cy=\"200\" r=\"190\" fill=\"none\" stroke=\"#cccccc\"/>\n";
  nlohmann::ordered_json channels = nlohmann::ordered_json::array();
  for (const auto& p : layout) {
    std::string cls = "unselected";
    std::string fill = "none";
    if (contains(report.duplicated, p.index)) {
      cls = "duplicated";
      fill = "#d62728";
    } else if (contains(report.unique, p.index)) {
      cls = "unique";
      fill = "#1f77b4";
    }
    svg << "  <circle cx=\"" << px(p.x) << "\" cy=\"" << px(-p.y) << "\" r=\"8\" fill=\"" << fill
        << "\" stroke=\"#333333\"/>\n";
    channels.push_back({{"index", p.index},
                        {"label", p.label},
                        {"x", p.x},
                        {"y", p.y},
                        {"class", cls}});
  }
  svg << "</svg>\n";

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("render_channel_map: cannot write " + out_path);
  out << svg.str();

  nlohmann::ordered_json sidecar;
  sidecar["method"] = subset.method;
  sidecar["gamma_or_K"] = subset.gamma_or_k;
  sidecar["duplicate_count"] = subset.duplicate_count;
  sidecar["channels"] = channels;
  std::ofstream side(out_path + ".json");
  if (!side) throw std::runtime_error("render_channel_map: cannot write " + out_path + ".json");
  side << sidecar.dump(2) << "\n";
}

}  // namespace basen
