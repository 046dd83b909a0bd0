#include "basen/checkpoint.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace basen {

namespace {
constexpr char kMagic[8] = {'B', 'A', 'S', 'E', 'N', 'C', 'K', '1'};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  try {
    header["config"] = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("save_checkpoint: bad config JSON: ") + e.what());
  }
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto& [name, m] : ckpt.tensors)
    manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = manifest;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const auto len = static_cast<uint64_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(m.size())));
  }
  if (!out) throw std::runtime_error("save_checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed header in " + path + ": " + e.what());
  }
  Checkpoint ckpt;
  ckpt.config_json = header.at("config").dump();
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    MatF m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(m.size())));
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated tensor '" + name + "' in " + path);
    ckpt.tensors.emplace_back(name, std::move(m));
  }
  return ckpt;
}

std::string model_config_to_json(const ModelConfig& cfg, int q_channels,
                                 const std::string& method) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["q_channels"] = q_channels;
  j["model"] = {{"embed_dim", cfg.embed_dim},
                {"audio_kernel", cfg.audio_kernel},
                {"audio_strides", cfg.audio_strides},
                {"eeg_kernel", cfg.eeg_kernel},
                {"eeg_stride", cfg.eeg_stride},
                {"eeg_tcn_layers", cfg.eeg_tcn_layers},
                {"cmca_layers", cfg.cmca_layers},
                {"attention_heads", cfg.attention_heads},
                {"separator_blocks", cfg.separator_blocks},
                {"separator_repeats", cfg.separator_repeats},
                {"tcn_hidden", cfg.tcn_hidden},
                {"tcn_kernel", cfg.tcn_kernel},
                {"n_sources", cfg.n_sources},
                {"groupnorm_groups", cfg.groupnorm_groups},
                {"init_seed", cfg.init_seed}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text, int* q_channels,
                                   std::string* method) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model_config_from_json: ") + e.what());
  }
  ModelConfig cfg;
  try {
    if (q_channels) *q_channels = j.at("q_channels").get<int>();
    if (method) *method = j.value("method", std::string("basen"));
    const auto& m = j.at("model");
    cfg.embed_dim = m.at("embed_dim").get<int>();
    cfg.audio_kernel = m.at("audio_kernel").get<int>();
    cfg.audio_strides = m.at("audio_strides").get<std::vector<int>>();
    cfg.eeg_kernel = m.at("eeg_kernel").get<int>();
    cfg.eeg_stride = m.at("eeg_stride").get<int>();
    cfg.eeg_tcn_layers = m.at("eeg_tcn_layers").get<int>();
    cfg.cmca_layers = m.at("cmca_layers").get<int>();
    cfg.attention_heads = m.at("attention_heads").get<int>();
    cfg.separator_blocks = m.at("separator_blocks").get<int>();
    cfg.separator_repeats = m.at("separator_repeats").get<int>();
    cfg.tcn_hidden = m.at("tcn_hidden").get<int>();
    cfg.tcn_kernel = m.at("tcn_kernel").get<int>();
    cfg.n_sources = m.at("n_sources").get<int>();
    cfg.groupnorm_groups = m.at("groupnorm_groups").get<int>();
    cfg.init_seed = m.at("init_seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model_config_from_json: missing field: ") + e.what());
  }
  cfg.validate("model_config_from_json");
  return cfg;
}

Checkpoint checkpoint_from_store(const ParameterStore<float>& store, std::string config_json) {
  Checkpoint ckpt;
  ckpt.config_json = std::move(config_json);
  ckpt.tensors.reserve(static_cast<size_t>(store.count()));
  for (int i = 0; i < store.count(); ++i)
    ckpt.tensors.emplace_back(store.name(i), store.value(i));
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParameterStore<float>& store,
                     const std::string& name_prefix) {
  for (int i = 0; i < store.count(); ++i) {
    const std::string wanted = name_prefix + store.name(i);
    const MatF* m = ckpt.find(wanted);
    if (!m) throw std::runtime_error("load_into_store: checkpoint lacks tensor '" + wanted + "'");
    if (m->rows() != store.value(i).rows() || m->cols() != store.value(i).cols())
      throw std::runtime_error("load_into_store: shape mismatch for '" + wanted + "'");
    store.value(i) = *m;
  }
}

}  // namespace basen
