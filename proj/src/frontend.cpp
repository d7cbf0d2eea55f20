#include "vsr/frontend.hpp"

#include "vsr/error.hpp"

namespace vsr {

void FrontendConfig::validate() const {
    if (block_channels.size() != num_blocks)
        throw ConfigError("frontend: block_channels has " + std::to_string(block_channels.size()) +
                          " entries but num_blocks is " + std::to_string(num_blocks));
    if (num_blocks == 0) throw ConfigError("frontend: num_blocks must be at least 1");
    for (std::size_t c : block_channels)
        if (c == 0) throw ConfigError("frontend: block channels must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("frontend: kernel must be odd");
    if (input_channels == 0) throw ConfigError("frontend: input_channels must be positive");
    if (!(norm_eps > 0.0f)) throw ConfigError("frontend: norm_eps must be positive");
}

std::vector<std::size_t> FrontendConfig::spatial_trajectory(std::size_t side) const {
    validate();
    if (side == 0) throw ConfigError("frontend: empty input frame");
    std::vector<std::size_t> out{side};
    for (std::size_t i = 0; i < num_blocks; ++i) {
        side /= 2;
        if (side == 0)
            throw ConfigError("frontend: spatial size reaches 0 at block " + std::to_string(i) + " (input " +
                              std::to_string(out.front()) + ")");
        out.push_back(side);
    }
    return out;
}

namespace {

std::string block_name(const std::string& prefix, std::size_t i) { return prefix + ".blocks." + std::to_string(i); }

Conv3dParams same_padding(std::size_t k) {
    Conv3dParams p;
    p.padding = {k / 2, k / 2, k / 2};
    return p;
}

}  // namespace

void init_frontend(ParamMap& params, const FrontendConfig& config, Rng& rng, const std::string& prefix) {
    config.validate();
    ParamInit init(params, rng);
    init.conv3d(prefix + ".stem.conv", config.input_channels, config.block_channels[0], config.kernel, false);
    init.norm(prefix + ".stem.norm", config.block_channels[0]);
    for (std::size_t i = 0; i < config.num_blocks; ++i) {
        const std::size_t in = i == 0 ? config.block_channels[0] : config.block_channels[i - 1];
        const std::size_t out = config.block_channels[i];
        const std::string b = block_name(prefix, i);
        init.conv3d(b + ".conv1", in, out, config.kernel, false);
        init.norm(b + ".norm1", out);
        init.conv3d(b + ".conv2", out, out, config.kernel, false);
        init.norm(b + ".norm2", out);
        if (in != out) init.conv3d(b + ".proj", in, out, 1);
    }
}

ad::Var frontend_forward(const ParamView& p, const FrontendConfig& config, const ad::Var& video,
                         const std::string& prefix) {
    config.validate();
    const Shape& s = video.shape();
    if (s.size() != 4) throw DimensionError("frontend: expected video [C,T,H,W], got " + shape_str(s));
    if (s[0] != config.input_channels)
        throw DimensionError("frontend: expected " + std::to_string(config.input_channels) + " input channels, got " +
                             std::to_string(s[0]));
    if (s[2] != s[3]) throw DimensionError("frontend: frames must be square, got " + shape_str(s));
    config.spatial_trajectory(s[2]);

    const Conv3dParams same = same_padding(config.kernel);
    auto conv = [&](const ad::Var& x, const std::string& name, const Conv3dParams& cp) {
        const std::string b = name + ".b";
        return ad::conv3d(x, p(name + ".w"), p.contains(b) ? p(b) : ad::Var(), cp);
    };
    auto inorm = [&](const ad::Var& x, const std::string& name) {
        return ad::instance_norm_frame(x, p(name + ".gamma"), p(name + ".beta"), config.norm_eps);
    };

    ad::Var x = ad::relu(inorm(conv(video, prefix + ".stem.conv", same), prefix + ".stem.norm"));
    for (std::size_t i = 0; i < config.num_blocks; ++i) {
        const std::string b = block_name(prefix, i);
        ad::Var h = ad::relu(inorm(conv(x, b + ".conv1", same), b + ".norm1"));
        h = inorm(conv(h, b + ".conv2", same), b + ".norm2");
        const ad::Var skip = p.contains(b + ".proj.w") ? conv(x, b + ".proj", Conv3dParams{}) : x;
        x = ad::max_pool_spatial(ad::relu(ad::add(h, skip)));
    }
    return ad::avg_pool_spatial(x);
}

Tensor frontend_forward(const ParamMap& params, const FrontendConfig& config, const Tensor& video,
                        const std::string& prefix) {
    return frontend_forward(ParamView::constants(params), config, ad::constant(video), prefix).value();
}

namespace {

Tensor drop_leading_frames(const Tensor& video, std::size_t s) {
    const std::size_t c = video.dim(0), t = video.dim(1), hw = video.dim(2) * video.dim(3);
    Tensor out({c, t - s, video.dim(2), video.dim(3)});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t f = s; f < t; ++f)
            for (std::size_t k = 0; k < hw; ++k) out[(ci * (t - s) + f - s) * hw + k] = video[(ci * t + f) * hw + k];
    return out;
}

}  // namespace

bool frontend_receptive_shift_check(const ParamMap& params, const FrontendConfig& config, const Tensor& video,
                                    std::size_t shift, const std::string& prefix) {
    if (video.rank() != 4) throw DimensionError("frontend: expected video [C,T,H,W], got " + shape_str(video.shape()));
    const std::size_t t = video.dim(1), b = config.boundary_frames();
    if (shift >= t || t - shift < 2 * b + 1)
        throw UsageError("shift check needs at least " + std::to_string(2 * b + 1 + shift) + " frames, got " +
                         std::to_string(t));
    const Tensor full = frontend_forward(params, config, video, prefix);
    if (shift == 0) return true;
    const Tensor moved = frontend_forward(params, config, drop_leading_frames(video, shift), prefix);
    const std::size_t d = full.dim(1), tm = t - shift;
    // moved[f] corresponds to full[f + shift]; compare frames interior to both.
    for (std::size_t f = b; f + b < tm; ++f) {
        for (std::size_t k = 0; k < d; ++k)
            if (!same_bits(moved[f * d + k], full[(f + shift) * d + k]))
                return false;
    }
    return true;
}

}  // namespace vsr
