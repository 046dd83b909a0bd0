#include "basen/runconfig.hpp"

#include <json.hpp>

#include <set>
#include <sstream>
#include <stdexcept>

namespace basen {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Collects unknown-key complaints across the whole document so the error
// names every offender at once.
struct KeyChecker {
  std::vector<std::string> unknown;

  void check(const json& obj, const std::string& section,
             const std::set<std::string>& allowed) {
    if (!obj.is_object()) return;
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key()))
        unknown.push_back(section.empty() ? it.key() : section + "." + it.key());
  }

  void raise_if_any() const {
    if (unknown.empty()) return;
    std::ostringstream msg;
    msg << "unknown config keys:";
    for (const auto& k : unknown) msg << " " << k;
    throw std::invalid_argument(msg.str());
  }
};

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");

  KeyChecker keys;
  keys.check(j, "", {"seed", "synth", "preprocess", "model", "loss", "schedule", "temperature",
                     "train", "paths"});

  RunConfig cfg;
  get_if(j, "seed", cfg.seed);

  if (j.contains("synth")) {
    const json& s = j["synth"];
    keys.check(s, "synth",
               {"q_channels", "informative_channels", "eeg_snr_db", "seg_len_s", "n_examples",
                "fs_audio", "fs_eeg", "n_subjects", "env_rate_a_hz", "env_rate_b_hz", "env_floor",
                "band_a_lo", "band_a_hi", "band_b_lo", "band_b_hi"});
    get_if(s, "q_channels", cfg.synth.q_channels);
    get_if(s, "informative_channels", cfg.synth.informative_channels);
    get_if(s, "eeg_snr_db", cfg.synth.eeg_snr_db);
    get_if(s, "seg_len_s", cfg.synth.seg_len_s);
    get_if(s, "n_examples", cfg.synth.n_examples);
    get_if(s, "fs_audio", cfg.synth.fs_audio);
    get_if(s, "fs_eeg", cfg.synth.fs_eeg);
    get_if(s, "n_subjects", cfg.synth.n_subjects);
    get_if(s, "env_rate_a_hz", cfg.synth.env_rate_a_hz);
    get_if(s, "env_rate_b_hz", cfg.synth.env_rate_b_hz);
    get_if(s, "env_floor", cfg.synth.env_floor);
    get_if(s, "band_a_lo", cfg.synth.band_a_lo);
    get_if(s, "band_a_hi", cfg.synth.band_a_hi);
    get_if(s, "band_b_lo", cfg.synth.band_b_lo);
    get_if(s, "band_b_hi", cfg.synth.band_b_hi);
  }

  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    keys.check(p, "preprocess",
               {"band_lo_hz", "band_hi_hz", "filter_order", "a_gamma", "a_delta", "seg_len_s",
                "hop_s", "audio_fs"});
    get_if(p, "band_lo_hz", cfg.preprocess.band_lo_hz);
    get_if(p, "band_hi_hz", cfg.preprocess.band_hi_hz);
    get_if(p, "filter_order", cfg.preprocess.filter_order);
    get_if(p, "a_gamma", cfg.preprocess.a_gamma);
    get_if(p, "a_delta", cfg.preprocess.a_delta);
    get_if(p, "seg_len_s", cfg.preprocess.seg_len_s);
    get_if(p, "hop_s", cfg.preprocess.hop_s);
    get_if(p, "audio_fs", cfg.preprocess.audio_fs);
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    keys.check(m, "model",
               {"embed_dim", "audio_kernel", "audio_strides", "eeg_kernel", "eeg_stride",
                "eeg_tcn_layers", "cmca_layers", "attention_heads", "separator_blocks",
                "separator_repeats", "tcn_hidden", "tcn_kernel", "n_sources", "groupnorm_groups",
                "init_seed"});
    get_if(m, "embed_dim", cfg.model.embed_dim);
    get_if(m, "audio_kernel", cfg.model.audio_kernel);
    get_if(m, "audio_strides", cfg.model.audio_strides);
    get_if(m, "eeg_kernel", cfg.model.eeg_kernel);
    get_if(m, "eeg_stride", cfg.model.eeg_stride);
    get_if(m, "eeg_tcn_layers", cfg.model.eeg_tcn_layers);
    get_if(m, "cmca_layers", cfg.model.cmca_layers);
    get_if(m, "attention_heads", cfg.model.attention_heads);
    get_if(m, "separator_blocks", cfg.model.separator_blocks);
    get_if(m, "separator_repeats", cfg.model.separator_repeats);
    get_if(m, "tcn_hidden", cfg.model.tcn_hidden);
    get_if(m, "tcn_kernel", cfg.model.tcn_kernel);
    get_if(m, "n_sources", cfg.model.n_sources);
    get_if(m, "groupnorm_groups", cfg.model.groupnorm_groups);
    get_if(m, "init_seed", cfg.model.init_seed);
  }

  if (j.contains("loss")) {
    const json& l = j["loss"];
    keys.check(l, "loss", {"alpha", "beta", "gamma", "k1", "k2", "b", "q"});
    get_if(l, "alpha", cfg.loss.alpha);
    get_if(l, "beta", cfg.loss.beta);
    get_if(l, "gamma", cfg.loss.gamma);
    get_if(l, "k1", cfg.loss.k1);
    get_if(l, "k2", cfg.loss.k2);
    get_if(l, "b", cfg.loss.b);
    get_if(l, "q", cfg.loss.q);
  }

  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    keys.check(s, "schedule",
               {"max_lr", "warmup_ratio", "total_epochs", "batch_size", "beta1", "beta2"});
    get_if(s, "max_lr", cfg.schedule.max_lr);
    get_if(s, "warmup_ratio", cfg.schedule.warmup_ratio);
    get_if(s, "total_epochs", cfg.schedule.total_epochs);
    get_if(s, "batch_size", cfg.schedule.batch_size);
    get_if(s, "beta1", cfg.schedule.beta1);
    get_if(s, "beta2", cfg.schedule.beta2);
  }

  if (j.contains("temperature")) {
    const json& t = j["temperature"];
    keys.check(t, "temperature", {"tau_start", "tau_end"});
    get_if(t, "tau_start", cfg.temperature.tau_start);
    get_if(t, "tau_end", cfg.temperature.tau_end);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    keys.check(t, "train",
               {"method", "val_fraction", "test_fraction", "zero_eeg", "aux_interferer_loss",
                "grad_clip_norm", "selector_lr_mult", "k_neurons", "resgs_a",
                "resgs_stage1_epochs", "resgs_stage2_epochs", "resgs_padding", "gamma_list",
                "convrs_n1_blocks", "convrs_threshold", "convrs_gamma0_epochs",
                "convrs_stage1_epochs", "convrs_stage2_epochs", "convrs_stage1_max_lr",
                "convrs_stage2_max_lr"});
    get_if(t, "method", cfg.train.method);
    get_if(t, "val_fraction", cfg.train.val_fraction);
    get_if(t, "test_fraction", cfg.train.test_fraction);
    get_if(t, "zero_eeg", cfg.train.zero_eeg);
    get_if(t, "aux_interferer_loss", cfg.train.aux_interferer_loss);
    get_if(t, "grad_clip_norm", cfg.train.grad_clip_norm);
    get_if(t, "selector_lr_mult", cfg.train.selector_lr_mult);
    get_if(t, "k_neurons", cfg.train.k_neurons);
    get_if(t, "resgs_a", cfg.train.resgs_a);
    get_if(t, "resgs_stage1_epochs", cfg.train.resgs_stage1_epochs);
    get_if(t, "resgs_stage2_epochs", cfg.train.resgs_stage2_epochs);
    get_if(t, "resgs_padding", cfg.train.resgs_padding);
    get_if(t, "gamma_list", cfg.train.gamma_list);
    get_if(t, "convrs_n1_blocks", cfg.train.convrs_n1_blocks);
    get_if(t, "convrs_threshold", cfg.train.convrs_threshold);
    get_if(t, "convrs_gamma0_epochs", cfg.train.convrs_gamma0_epochs);
    get_if(t, "convrs_stage1_epochs", cfg.train.convrs_stage1_epochs);
    get_if(t, "convrs_stage2_epochs", cfg.train.convrs_stage2_epochs);
    get_if(t, "convrs_stage1_max_lr", cfg.train.convrs_stage1_max_lr);
    get_if(t, "convrs_stage2_max_lr", cfg.train.convrs_stage2_max_lr);
  }

  if (j.contains("paths")) {
    const json& p = j["paths"];
    keys.check(p, "paths", {"dataset", "run_dir", "pretrained", "layout_csv"});
    get_if(p, "dataset", cfg.paths.dataset);
    get_if(p, "run_dir", cfg.paths.run_dir);
    get_if(p, "pretrained", cfg.paths.pretrained);
    get_if(p, "layout_csv", cfg.paths.layout_csv);
  }

  keys.raise_if_any();

  cfg.synth.seed = cfg.seed;
  cfg.synth.validate("config.synth");
  cfg.model.validate("config.model");
  cfg.loss.validate("config.loss");
  cfg.schedule.validate("config.schedule");
  cfg.temperature.validate("config.temperature");
  if (cfg.train.method != "basen" && cfg.train.method != "resgs" && cfg.train.method != "convrs" &&
      cfg.train.method != "gcs")
    throw std::invalid_argument("config.train.method must be basen|resgs|convrs|gcs");
  if (cfg.train.resgs_padding != "leading" && cfg.train.resgs_padding != "scatter")
    throw std::invalid_argument("config.train.resgs_padding must be leading|scatter");
  if (cfg.train.gamma_list.empty() || cfg.train.gamma_list.front() != 0.0)
    throw std::invalid_argument("config.train.gamma_list must start at 0");
  for (size_t i = 1; i < cfg.train.gamma_list.size(); ++i)
    if (cfg.train.gamma_list[i] <= cfg.train.gamma_list[i - 1])
      throw std::invalid_argument("config.train.gamma_list must be sorted ascending");
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["synth"] = {{"q_channels", cfg.synth.q_channels},
                {"informative_channels", cfg.synth.informative_channels},
                {"eeg_snr_db", cfg.synth.eeg_snr_db},
                {"seg_len_s", cfg.synth.seg_len_s},
                {"n_examples", cfg.synth.n_examples},
                {"fs_audio", cfg.synth.fs_audio},
                {"fs_eeg", cfg.synth.fs_eeg},
                {"n_subjects", cfg.synth.n_subjects},
                {"env_rate_a_hz", cfg.synth.env_rate_a_hz},
                {"env_rate_b_hz", cfg.synth.env_rate_b_hz},
                {"env_floor", cfg.synth.env_floor},
                {"band_a_lo", cfg.synth.band_a_lo},
                {"band_a_hi", cfg.synth.band_a_hi},
                {"band_b_lo", cfg.synth.band_b_lo},
                {"band_b_hi", cfg.synth.band_b_hi}};
  j["preprocess"] = {{"band_lo_hz", cfg.preprocess.band_lo_hz},
                     {"band_hi_hz", cfg.preprocess.band_hi_hz},
                     {"filter_order", cfg.preprocess.filter_order},
                     {"a_gamma", cfg.preprocess.a_gamma},
                     {"a_delta", cfg.preprocess.a_delta},
                     {"seg_len_s", cfg.preprocess.seg_len_s},
                     {"hop_s", cfg.preprocess.hop_s},
                     {"audio_fs", cfg.preprocess.audio_fs}};
  j["model"] = {{"embed_dim", cfg.model.embed_dim},
                {"audio_kernel", cfg.model.audio_kernel},
                {"audio_strides", cfg.model.audio_strides},
                {"eeg_kernel", cfg.model.eeg_kernel},
                {"eeg_stride", cfg.model.eeg_stride},
                {"eeg_tcn_layers", cfg.model.eeg_tcn_layers},
                {"cmca_layers", cfg.model.cmca_layers},
                {"attention_heads", cfg.model.attention_heads},
                {"separator_blocks", cfg.model.separator_blocks},
                {"separator_repeats", cfg.model.separator_repeats},
                {"tcn_hidden", cfg.model.tcn_hidden},
                {"tcn_kernel", cfg.model.tcn_kernel},
                {"n_sources", cfg.model.n_sources},
                {"groupnorm_groups", cfg.model.groupnorm_groups},
                {"init_seed", cfg.model.init_seed}};
  j["loss"] = {{"alpha", cfg.loss.alpha}, {"beta", cfg.loss.beta}, {"gamma", cfg.loss.gamma},
               {"k1", cfg.loss.k1},       {"k2", cfg.loss.k2},     {"b", cfg.loss.b},
               {"q", cfg.loss.q}};
  j["schedule"] = {{"max_lr", cfg.schedule.max_lr},
                   {"warmup_ratio", cfg.schedule.warmup_ratio},
                   {"total_epochs", cfg.schedule.total_epochs},
                   {"batch_size", cfg.schedule.batch_size},
                   {"beta1", cfg.schedule.beta1},
                   {"beta2", cfg.schedule.beta2}};
  j["temperature"] = {{"tau_start", cfg.temperature.tau_start},
                      {"tau_end", cfg.temperature.tau_end}};
  j["train"] = {{"method", cfg.train.method},
                {"val_fraction", cfg.train.val_fraction},
                {"test_fraction", cfg.train.test_fraction},
                {"zero_eeg", cfg.train.zero_eeg},
                {"aux_interferer_loss", cfg.train.aux_interferer_loss},
                {"grad_clip_norm", cfg.train.grad_clip_norm},
                {"selector_lr_mult", cfg.train.selector_lr_mult},
                {"k_neurons", cfg.train.k_neurons},
                {"resgs_a", cfg.train.resgs_a},
                {"resgs_stage1_epochs", cfg.train.resgs_stage1_epochs},
                {"resgs_stage2_epochs", cfg.train.resgs_stage2_epochs},
                {"resgs_padding", cfg.train.resgs_padding},
                {"gamma_list", cfg.train.gamma_list},
                {"convrs_n1_blocks", cfg.train.convrs_n1_blocks},
                {"convrs_threshold", cfg.train.convrs_threshold},
                {"convrs_gamma0_epochs", cfg.train.convrs_gamma0_epochs},
                {"convrs_stage1_epochs", cfg.train.convrs_stage1_epochs},
                {"convrs_stage2_epochs", cfg.train.convrs_stage2_epochs},
                {"convrs_stage1_max_lr", cfg.train.convrs_stage1_max_lr},
                {"convrs_stage2_max_lr", cfg.train.convrs_stage2_max_lr}};
  j["paths"] = {{"dataset", cfg.paths.dataset},
                {"run_dir", cfg.paths.run_dir},
                {"pretrained", cfg.paths.pretrained},
                {"layout_csv", cfg.paths.layout_csv}};
  return j.dump(2) + "\n";
}

std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must look like section.key=value: " + ov);
    const std::string path = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // plain string
    }
    json* node = &j;
    size_t start = 0;
    while (true) {
      const auto dotpos = path.find('.', start);
      const std::string key = path.substr(start, dotpos - start);
      if (key.empty()) throw std::invalid_argument("bad override path: " + path);
      if (dotpos == std::string::npos) {
        (*node)[key] = parsed;
        break;
      }
      node = &(*node)[key];
      start = dotpos + 1;
    }
  }
  return j.dump();
}

}  // namespace basen
