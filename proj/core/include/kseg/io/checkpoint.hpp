#pragma once

#include <filesystem>
#include <string>

#include "kseg/io/config_tree.hpp"
#include "kseg/models.hpp"

namespace kseg {

/// Model configuration <-> flat config keys (prefix "model.").
ConfigTree model_config_to_tree(const ModelConfig& cfg);
ModelConfig model_config_from_tree(const ConfigTree& tree);

/// Binary checkpoint: magic "KSCK1\0" | format u32 | config-hash u64 |
/// embedded config text (u32 + bytes, includes the model config and
/// provenance keys) | tensor count u32 | per tensor: name (u16 + bytes),
/// ndims u8, dims u32 each, float32 row-major values (u64 count + data).
void save_checkpoint(const std::filesystem::path& path, SegmentationModel<float>& model,
                     uint64_t experiment_config_hash, const std::string& tool_version);

struct LoadedCheckpoint {
    SegmentationModel<float> model;
    uint64_t experiment_config_hash = 0;
    std::string tool_version;
    ConfigTree embedded;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace kseg
