#pragma once

// Run configuration as one JSON document. Every section is optional and
// starts from the toy defaults; unknown keys and ill-typed values raise
// ConfigError naming the key path.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vsr/decoding.hpp"
#include "vsr/model.hpp"
#include "vsr/rover.hpp"
#include "vsr/train.hpp"
#include "vsr/video.hpp"

namespace vsr {

struct DataConfig {
    std::vector<std::string> characters{"a", "b", "c", "d", "e", "f", "g", "h"};
    std::size_t train_count = 200;
    std::size_t dev_count = 50;
    std::size_t min_tokens = 3;
    std::size_t max_tokens = 6;
    SynthOptions synth;

    void validate() const;
    Vocabulary vocab() const { return Vocabulary::from_characters(characters); }
};

struct AugmentConfig {
    std::vector<double> speed_rates{0.9, 1.0, 1.1};
    // Per-clip rotation/flip/color policy; identity unless configured.
    AugmentPolicy policy = AugmentPolicy::identity();

    void validate() const;
};

struct RunConfig {
    std::uint64_t seed = 1;
    DataConfig data;
    AugmentConfig augment;
    ModelConfig model;
    TrainConfig train;
    DecodeParams decode;
    RoverOptions rover;

    RunConfig();
    // Module checks plus the couplings: the model vocabulary is the data
    // vocabulary and the crop fits the rendered frames.
    void validate() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical text: sorted keys, two-space indent, trailing newline.
std::string run_config_to_json(const RunConfig& config);

// Compact canonical text of the architecture alone (embedded in checkpoints).
std::string model_config_to_json(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view json_text);

}  // namespace vsr
