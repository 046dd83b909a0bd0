// Operator entry point: synth -> preprocess -> train -> select/eval/report.
#include "basen/evaluate.hpp"
#include "basen/runconfig.hpp"
#include "basen/signal.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace basen;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides,
                      uint64_t* seed_flag) {
  std::string text = config_path.empty() ? std::string("{}") : read_file(config_path);
  if (seed_flag) {
    // explicit --seed wins over both the file and --set
    text = apply_config_overrides(text, overrides);
    text = apply_config_overrides(text, {"seed=" + std::to_string(*seed_flag)});
  } else {
    text = apply_config_overrides(text, overrides);
  }
  return run_config_from_json(text);
}

std::string resolve_run_dir(const RunConfig& cfg) {
  if (!cfg.paths.run_dir.empty()) return cfg.paths.run_dir;
  const char* root = std::getenv("BASEN_RUN_ROOT");
  if (root && *root)
    return (fs::path(root) / ("run_" + cfg.train.method + "_seed" + std::to_string(cfg.seed)))
        .string();
  return "";
}

TrainOptions make_train_options(const RunConfig& cfg, const std::string& run_dir) {
  TrainOptions opt;
  opt.sched = cfg.schedule;
  opt.loss = cfg.loss;
  opt.temp = cfg.temperature;
  opt.temp.total_epochs = cfg.schedule.total_epochs;
  opt.seed = cfg.seed;
  opt.run_dir = run_dir;
  opt.zero_eeg = cfg.train.zero_eeg;
  opt.grad_clip_norm = cfg.train.grad_clip_norm;
  opt.aux_interferer_loss = cfg.train.aux_interferer_loss;
  opt.selector_lr_mult = cfg.train.selector_lr_mult;
  return opt;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  if (out_dir.empty()) throw std::runtime_error("synth: --out (or paths.dataset) is required");
  const Dataset ds = generate_dataset(cfg.synth);
  write_dataset(ds, out_dir, &cfg.synth.informative_channels);

  // identifiability sanity check alongside the data
  nlohmann::ordered_json report;
  report["n_examples"] = ds.size();
  if (!cfg.synth.informative_channels.empty() &&
      static_cast<int>(cfg.synth.informative_channels.size()) < cfg.synth.q_channels) {
    std::vector<int> random_subset;
    Rng rng = derive_rng(cfg.seed, "oracle.subset");
    std::vector<int> pool;
    for (int c = 0; c < cfg.synth.q_channels; ++c) {
      bool informative = false;
      for (int ic : cfg.synth.informative_channels) informative |= (ic == c);
      if (!informative) pool.push_back(c);
    }
    rng.shuffle(pool.begin(), pool.end());
    for (size_t i = 0; i < cfg.synth.informative_channels.size() && i < pool.size(); ++i)
      random_subset.push_back(pool[i]);
    const size_t probe = std::min<size_t>(ds.size(), 16);
    const Dataset probe_ds(ds.begin(), ds.begin() + static_cast<std::ptrdiff_t>(probe));
    const double mse_info = envelope_decoder_mse(probe_ds, cfg.synth.informative_channels);
    const double mse_rand = envelope_decoder_mse(probe_ds, random_subset);
    report["decoder_mse_informative"] = mse_info;
    report["decoder_mse_random"] = mse_rand;
    report["identifiability_ratio"] = mse_rand / mse_info;
  }
  std::ofstream rep(fs::path(out_dir) / "corpus_report.json");
  rep << report.dump(2) << "\n";
  std::cout << "wrote " << ds.size() << " examples to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const RunConfig& cfg, const std::string& in_dir, const std::string& out_dir) {
  if (in_dir.empty() || out_dir.empty())
    throw std::runtime_error("preprocess: --in and --out are required");
  const Dataset ds = read_dataset(in_dir);
  const BandSpec band{cfg.preprocess.band_lo_hz, cfg.preprocess.band_hi_hz,
                      cfg.preprocess.filter_order};
  Dataset out;
  int warned = 0;
  for (const auto& ex : ds) {
    EEGTrial filtered = bandpass(ex.eeg, band);
    MuaResult mua = compute_mua(filtered, cfg.preprocess.a_gamma, cfg.preprocess.a_delta);
    warned += static_cast<int>(mua.undefined_phase_channels.size());

    AudioWaveform mix = ex.mixture, target = ex.target, interferer = ex.interferer;
    if (cfg.preprocess.audio_fs > 0.0 && cfg.preprocess.audio_fs != mix.fs) {
      mix = resample(mix, cfg.preprocess.audio_fs);
      target = resample(target, cfg.preprocess.audio_fs);
      interferer = resample(interferer, cfg.preprocess.audio_fs);
    }

    bool too_short = false;
    const auto segments = segment_synchronized(mix, mua.trial, cfg.preprocess.seg_len_s,
                                               cfg.preprocess.hop_s, &too_short);
    const auto target_segs = segment(target, cfg.preprocess.seg_len_s, cfg.preprocess.hop_s);
    const auto interf_segs = segment(interferer, cfg.preprocess.seg_len_s, cfg.preprocess.hop_s);
    if (too_short)
      std::cerr << "warning: " << ex.example_id << " shorter than one segment, skipped\n";
    for (size_t i = 0; i < segments.size(); ++i) {
      MixtureExample seg;
      seg.mixture = segments[i].first;
      seg.eeg = segments[i].second;
      seg.target = target_segs[i];
      seg.interferer = interf_segs[i];
      seg.subject_id = ex.subject_id;
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_s%03zu", i);
      seg.example_id = ex.example_id + suffix;
      out.push_back(std::move(seg));
    }
  }
  write_dataset(out, out_dir);
  std::cout << "wrote " << out.size() << " segments to " << out_dir;
  if (warned > 0) std::cout << " (" << warned << " channels had undefined delta phase)";
  std::cout << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& method_flag) {
  RunConfig run = cfg;
  if (!method_flag.empty()) run.train.method = method_flag;
  if (run.paths.dataset.empty()) throw std::runtime_error("train: paths.dataset is required");
  const std::string run_dir = resolve_run_dir(run);
  if (run_dir.empty())
    throw std::runtime_error("train: set paths.run_dir or BASEN_RUN_ROOT");

  const Dataset all = read_dataset(run.paths.dataset);
  const DataSplit split = split_dataset(all, run.train.val_fraction, run.train.test_fraction);
  if (split.train.empty() || split.val.empty())
    throw std::runtime_error("train: dataset too small for the requested split");

  RunLogger logger(run_dir);
  logger.write_text("config.json", run_config_to_json(run));
  TrainOptions opt = make_train_options(run, run_dir);

  if (run.train.method == "basen") {
    auto result = train_basen(split.train, split.val, run.model, opt);
    if (result.log.aborted_nan) throw std::runtime_error(result.log.abort_reason);
    std::cout << "final val total " << result.final_val_total << "\n";
  } else if (run.train.method == "gcs") {
    auto result = train_gcs(split.train, split.val, run.model, GcsOptions{run.train.k_neurons},
                            opt);
    if (result.log.aborted_nan) throw std::runtime_error(result.log.abort_reason);
    std::cout << "final val total " << result.final_val_total << "\n";
  } else if (run.train.method == "resgs") {
    if (run.paths.pretrained.empty())
      throw std::runtime_error("train resgs: paths.pretrained (BASEN checkpoint) is required");
    ResgsOptions ropt;
    ropt.k_neurons = run.train.k_neurons;
    ropt.residual_weight = run.train.resgs_a;
    ropt.stage1_epochs = run.train.resgs_stage1_epochs;
    ropt.stage2_epochs = run.train.resgs_stage2_epochs;
    ropt.padding = run.train.resgs_padding == "scatter" ? ResgsPadding::scatter
                                                        : ResgsPadding::leading;
    auto result = train_resgs(split.train, split.val, load_checkpoint(run.paths.pretrained),
                              ropt, opt);
    if (result.stage1.aborted_nan || result.stage2.aborted_nan)
      throw std::runtime_error("resgs training aborted on non-finite loss");
    std::cout << "selected " << result.subset.indices.size() << " channels ("
              << result.subset.duplicate_count << " duplicated), final val total "
              << result.final_val_total << "\n";
  } else {  // convrs
    ConvrsOptions copt;
    copt.n1_blocks = run.train.convrs_n1_blocks;
    copt.select_threshold = run.train.convrs_threshold;
    copt.gamma0_epochs = run.train.convrs_gamma0_epochs;
    copt.stage1_epochs = run.train.convrs_stage1_epochs;
    copt.stage2_epochs = run.train.convrs_stage2_epochs;
    copt.stage1_max_lr = run.train.convrs_stage1_max_lr;
    copt.stage2_max_lr = run.train.convrs_stage2_max_lr;
    auto results = train_convrs_progressive(split.train, split.val, run.model,
                                            run.train.gamma_list, copt, opt);
    nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
    for (const auto& r : results) {
      sweep.push_back({{"gamma", r.gamma},
                       {"subset_size", r.subset.indices.size()},
                       {"final_val_total", r.final_val_total}});
      if (r.stage2.aborted_nan) throw std::runtime_error("convrs training aborted: " +
                                                         r.stage2.abort_reason);
    }
    logger.write_text("gamma_sweep.json", sweep.dump(2) + "\n");
    // the run-level selection is the last (sparsest) subset
    logger.write_text("selection.json", channel_subset_to_json(results.back().subset));
    std::cout << "swept " << results.size() << " gamma values\n";
  }
  std::cout << "run artifacts in " << run_dir << "\n";
  return 0;
}

int cmd_select(const std::string& run_dir, const std::string& out_path) {
  const fs::path sel = fs::path(run_dir) / "selection.json";
  if (!fs::exists(sel))
    throw std::runtime_error("select: " + sel.string() + " not found (run not finished?)");
  const std::string text = read_file(sel.string());
  channel_subset_from_json(text);  // validate
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    out << text;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& subset_path, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset ds = read_dataset(dataset_dir);
  std::optional<ChannelSubset> subset;
  if (!subset_path.empty()) subset = channel_subset_from_json(read_file(subset_path));
  const EvalSummary summary = evaluate(ckpt, ds, subset);
  const std::string text = eval_summary_to_json(summary);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    out << text;
  }
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& run_dir) {
  const fs::path sel_path = fs::path(run_dir) / "selection.json";
  if (!fs::exists(sel_path))
    throw std::runtime_error("report: " + sel_path.string() + " not found");
  const ChannelSubset subset = channel_subset_from_json(read_file(sel_path.string()));
  const int q = static_cast<int>(subset.mean_probabilities.size());
  const ChannelLayout layout = cfg.paths.layout_csv.empty()
                                   ? synthetic_grid_layout(q)
                                   : load_layout_csv(cfg.paths.layout_csv);
  render_channel_map(subset, layout, (fs::path(run_dir) / "channel_map.svg").string());

  const DuplicateReport dup = duplicate_report(subset);
  nlohmann::ordered_json j;
  j["method"] = subset.method;
  j["gamma_or_K"] = subset.gamma_or_k;
  j["selected"] = subset.indices;
  j["unique"] = dup.unique;
  j["duplicated"] = dup.duplicated;
  std::ofstream out(fs::path(run_dir) / "duplicate_report.json");
  out << j.dump(2) << "\n";
  std::cout << "wrote channel_map.svg, channel_map.svg.json, duplicate_report.json to "
            << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brain-assisted speech enhancement toolkit with EEG channel selection"};
  app.require_subcommand(1);
  app.footer(
      "Run directories default to $BASEN_RUN_ROOT/run_<method>_seed<seed> when paths.run_dir\n"
      "is unset. Configuration keys and their defaults:\n" +
      run_config_to_json(RunConfig{}));

  std::string config_path, out_dir, in_dir, method, run_dir, ckpt_path, dataset_dir, subset_path,
      out_path;
  std::vector<std::string> overrides;
  uint64_t seed_flag = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration JSON file");
    sub->add_option("--set", overrides,
                    "override a config key, e.g. --set synth.n_examples=20 "
                    "(precedence: defaults < file < --set < --seed)");
    sub->add_option("--seed", seed_flag, "override the run seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_dir, "output dataset directory");

  CLI::App* preprocess =
      app.add_subcommand("preprocess", "band-pass + MUA + segment a dataset into a new directory");
  add_common(preprocess);
  preprocess->add_option("--in", in_dir, "input dataset directory")->required();
  preprocess->add_option("--out", out_dir, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train basen|resgs|convrs|gcs");
  add_common(train);
  train->add_option("--method", method, "training method (overrides train.method)");
  train->add_option("--dataset", dataset_dir, "dataset directory (overrides paths.dataset)");
  train->add_option("--run-dir", run_dir, "run directory (overrides paths.run_dir)");
  train->add_option("--pretrained", ckpt_path,
                    "pre-trained BASEN checkpoint (resgs; overrides paths.pretrained)");

  CLI::App* select = app.add_subcommand("select", "extract the ChannelSubset from a finished run");
  select->add_option("--run-dir", run_dir, "run directory")->required();
  select->add_option("--out", out_path, "write the subset JSON here instead of stdout");

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint over a dataset");
  evalc->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  evalc->add_option("--dataset", dataset_dir, "dataset directory")->required();
  evalc->add_option("--subset", subset_path, "ChannelSubset JSON; non-selected channels zeroed");
  evalc->add_option("--out", out_path, "write the EvalSummary JSON here instead of stdout");

  CLI::App* report = app.add_subcommand("report", "channel map + duplicate report for a run");
  add_common(report);
  report->add_option("--run-dir", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path, overrides, seed_set ? &seed_flag : nullptr);
    if (synth->parsed()) {
      if (out_dir.empty()) out_dir = cfg.paths.dataset;
      return cmd_synth(cfg, out_dir);
    }
    if (preprocess->parsed()) return cmd_preprocess(cfg, in_dir, out_dir);
    if (train->parsed()) {
      if (!dataset_dir.empty()) cfg.paths.dataset = dataset_dir;
      if (!run_dir.empty()) cfg.paths.run_dir = run_dir;
      if (!ckpt_path.empty()) cfg.paths.pretrained = ckpt_path;
      return cmd_train(cfg, method);
    }
    if (select->parsed()) return cmd_select(run_dir, out_path);
    if (evalc->parsed()) return cmd_eval(ckpt_path, dataset_dir, subset_path, out_path);
    if (report->parsed()) return cmd_report(cfg, run_dir);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
