#pragma once

#include "basen/model.hpp"
#include "basen/nn.hpp"

#include <string>
#include <utility>
#include <vector>

namespace basen {

// Parameters plus their full configuration, serialized together. The binary
// layout is a magic tag, a JSON header (config + tensor manifest) and raw
// little-endian float32 data in manifest order.
struct Checkpoint {
  std::string config_json;  // model config plus method metadata
  std::vector<std::pair<std::string, MatF>> tensors;

  const MatF* find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg, int q_channels,
                                 const std::string& method);
ModelConfig model_config_from_json(const std::string& text, int* q_channels = nullptr,
                                   std::string* method = nullptr);

Checkpoint checkpoint_from_store(const ParameterStore<float>& store, std::string config_json);

// Loads tensors by name into an existing store; every store parameter must be
// present with matching shape.
void load_into_store(const Checkpoint& ckpt, ParameterStore<float>& store,
                     const std::string& name_prefix = "");

}  // namespace basen
