#pragma once

// 3D-convolutional residual frontend: stem conv, L residual blocks each
// followed by 2x2 spatial max-pooling, then spatial average pooling. Time
// length is preserved.

#include <string>
#include <vector>

#include "vsr/nn.hpp"

namespace vsr {

struct FrontendConfig {
    std::vector<std::size_t> block_channels{32, 64, 64, 128, 256};
    std::size_t num_blocks = 5;
    std::size_t kernel = 3;
    std::size_t input_channels = 1;
    real norm_eps = 1e-5f;

    void validate() const;
    std::size_t output_dim() const { return block_channels.back(); }
    // Frames lost to zero padding at each end: the stem plus two convs per block.
    std::size_t boundary_frames() const { return 1 + 2 * num_blocks; }
    // Spatial side after the stem and after each block's pool; throws
    // ConfigError naming the block whose output would be empty.
    std::vector<std::size_t> spatial_trajectory(std::size_t side) const;
};

// Parameters under "<prefix>.stem", "<prefix>.blocks.<i>.{conv1,norm1,conv2,norm2,proj}".
// Convs followed by a norm carry no bias.
void init_frontend(ParamMap& params, const FrontendConfig& config, Rng& rng, const std::string& prefix = "frontend");

// video [C,T,N,N] -> features [T, block_channels[L-1]].
ad::Var frontend_forward(const ParamView& params, const FrontendConfig& config, const ad::Var& video,
                         const std::string& prefix = "frontend");
Tensor frontend_forward(const ParamMap& params, const FrontendConfig& config, const Tensor& video,
                        const std::string& prefix = "frontend");

// True iff shifting the input s frames later shifts interior output frames by
// s. Frames within boundary_frames() of either end (of either clip) are
// excluded. Throws UsageError when no interior frame remains.
bool frontend_receptive_shift_check(const ParamMap& params, const FrontendConfig& config, const Tensor& video,
                                    std::size_t shift, const std::string& prefix = "frontend");

}  // namespace vsr
