#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"
#include "vsr/text.hpp"

namespace vsr {

// Lip-region clip: frames [T,H,W,C] with pixels in [0,1].
struct VideoTensor {
    Tensor frames;
    double frame_rate = 25.0;

    std::size_t length() const { return frames.dim(0); }
    std::size_t height() const { return frames.dim(1); }
    std::size_t width() const { return frames.dim(2); }
    std::size_t channels() const { return frames.dim(3); }
};

// Validates rank, channel count and pixel range; throws DataError.
void validate_video(const VideoTensor& video);

// Spatial centre N x N crop; the extra pixel for odd margins goes to the
// bottom/right (the crop origin rounds toward the top-left).
VideoTensor center_crop(const VideoTensor& video, std::size_t side);

// Output frame j = input frame floor(j * rate), j in [0, ceil(T / rate)).
VideoTensor speed_perturb(const VideoTensor& video, double rate);
std::size_t speed_perturbed_length(std::size_t frames, double rate);

struct AugmentPolicy {
    double rotation_max_deg = 10.0;
    double hflip_prob = 0.5;
    std::pair<double, double> brightness_range{0.7, 1.3};
    std::pair<double, double> contrast_range{0.7, 1.3};
    std::uint64_t rng_seed = 0;

    void validate() const;
    static AugmentPolicy identity();
};

// Per-clip sampling: one angle, one flip decision, one brightness and one
// contrast factor shared by every frame. Draw order is fixed
// (angle, flip, brightness, contrast).
VideoTensor augment(const VideoTensor& video, const AugmentPolicy& policy, Rng& rng);

// Deterministic building blocks of augment().
VideoTensor rotate(const VideoTensor& video, double degrees);
VideoTensor hflip(const VideoTensor& video);
VideoTensor adjust_color(const VideoTensor& video, double brightness, double contrast);

struct SynthOptions {
    std::size_t side = 32;
    std::size_t frames_per_token = 4;
    std::size_t channels = 1;
    double noise_sigma = 0.05;
};

// Renders each regular token as a horizontal stripe pattern whose stripe
// frequency and brightness encode the token's rank, held for
// frames_per_token frames, plus Gaussian pixel noise.
std::pair<VideoTensor, std::string> synth_generate(std::span<const int> tokens, const Vocabulary& vocab,
                                                   const SynthOptions& options, Rng& rng);

// Noise-free pattern for one token (shape [side, side]).
Tensor synth_token_pattern(int token, const Vocabulary& vocab, std::size_t side);

// .vten stores frames only; frame_rate is not persisted.
void save_video(const std::filesystem::path& path, const VideoTensor& video);
VideoTensor load_video(const std::filesystem::path& path);

// Model input layout [C,T,H,W] from frames [T,H,W,C].
Tensor to_channels_first(const VideoTensor& video);

struct ManifestEntry {
    std::string id;
    std::filesystem::path path;  // resolved against the manifest directory
    std::string transcript;
};

// Lines "utterance_id<TAB>vten_path<TAB>transcript". Relative paths resolve
// against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
// Paths are written as given (callers pass paths relative to the manifest).
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace vsr
