#pragma once

// Binary checkpoint: "VSRCKPT1", u32 config length, compact JSON model
// config, u32 parameter count, then per parameter (sorted by name) u32 name
// length, name bytes and a .vten tensor body. All integers little-endian.

#include <filesystem>
#include <string>

#include "vsr/model.hpp"

namespace vsr {

inline constexpr char kCheckpointMagic[8] = {'V', 'S', 'R', 'C', 'K', 'P', 'T', '1'};

struct ModelCheckpoint {
    ModelConfig config;
    ParamMap params;
};

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
// DataError on bad magic, truncation, trailing bytes, or parameters that do
// not match the names and shapes the embedded config requires.
ModelCheckpoint deserialize_checkpoint(const std::string& bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// Names and shapes init_model() would create for config; DataError naming
// the first difference otherwise.
void check_params_match(const ModelConfig& config, const ParamMap& params, const std::string& what);

}  // namespace vsr
