#include "vsr/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vsr/error.hpp"
#include "vsr/tensor_io.hpp"

namespace vsr {

namespace {

VideoTensor with_frames(const VideoTensor& like, Tensor frames) {
    VideoTensor v;
    v.frames = std::move(frames);
    v.frame_rate = like.frame_rate;
    return v;
}

real clamp01(double v) { return static_cast<real>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

void validate_video(const VideoTensor& video) {
    if (video.frames.rank() != 4) {
        throw DataError("video must have shape [T,H,W,C], got " + shape_str(video.frames.shape()));
    }
    if (video.channels() != 1 && video.channels() != 3) {
        throw DataError("video must have 1 or 3 channels, got " + std::to_string(video.channels()));
    }
    for (real v : video.frames.data()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw DataError("video pixel outside [0,1]");
    }
}

VideoTensor center_crop(const VideoTensor& video, std::size_t side) {
    const std::size_t t = video.length(), h = video.height(), w = video.width(), c = video.channels();
    if (side == 0 || side > h || side > w) {
        throw DimensionError("center_crop: side " + std::to_string(side) + " exceeds frame " + std::to_string(h) + "x" +
                             std::to_string(w));
    }
    const std::size_t top = (h - side) / 2, left = (w - side) / 2;
    Tensor out({t, side, side, c});
    for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t r = 0; r < side; ++r) {
            const real* src = video.frames.data().data() + ((f * h + top + r) * w + left) * c;
            std::copy_n(src, side * c, out.data().data() + (f * side + r) * side * c);
        }
    }
    return with_frames(video, std::move(out));
}

std::size_t speed_perturbed_length(std::size_t frames, double rate) {
    if (!(rate > 0.0)) throw ConfigError("speed_perturb: rate must be positive");
    // The small slack absorbs representation error in rates such as 0.9.
    return static_cast<std::size_t>(std::ceil(static_cast<double>(frames) / rate - 1e-9));
}

VideoTensor speed_perturb(const VideoTensor& video, double rate) {
    const std::size_t t = video.length();
    const std::size_t out_t = std::max<std::size_t>(1, speed_perturbed_length(t, rate));
    const std::size_t frame = video.height() * video.width() * video.channels();
    Shape shape = video.frames.shape();
    shape[0] = out_t;
    Tensor out(shape);
    for (std::size_t j = 0; j < out_t; ++j) {
        std::size_t src = static_cast<std::size_t>(std::floor(static_cast<double>(j) * rate + 1e-9));
        src = std::min(src, t - 1);
        std::copy_n(video.frames.data().data() + src * frame, frame, out.data().data() + j * frame);
    }
    return with_frames(video, std::move(out));
}

void AugmentPolicy::validate() const {
    if (!(rotation_max_deg >= 0.0)) throw ConfigError("augment: rotation_max_deg must be >= 0");
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("augment: hflip_prob must lie in [0,1]");
    auto check = [](const std::pair<double, double>& r, const char* name) {
        if (!(r.first <= 1.0 && r.second >= 1.0 && r.first > 0.0)) {
            throw ConfigError(std::string("augment: ") + name + " range must be positive and contain 1.0");
        }
    };
    check(brightness_range, "brightness");
    check(contrast_range, "contrast");
}

AugmentPolicy AugmentPolicy::identity() {
    AugmentPolicy p;
    p.rotation_max_deg = 0.0;
    p.hflip_prob = 0.0;
    p.brightness_range = {1.0, 1.0};
    p.contrast_range = {1.0, 1.0};
    return p;
}

VideoTensor rotate(const VideoTensor& video, double degrees) {
    if (degrees == 0.0) return video;
    const std::size_t t = video.length(), h = video.height(), w = video.width(), c = video.channels();
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    Tensor out(video.frames.shape(), 0.0f);
    const real* src = video.frames.data().data();
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            const double x = static_cast<double>(col) - cx, y = static_cast<double>(r) - cy;
            const double xs = snap(cs * x - sn * y + cx);
            const double ys = snap(sn * x + cs * y + cy);
            const double x0 = std::floor(xs), y0 = std::floor(ys);
            const double fx = xs - x0, fy = ys - y0;
            const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const long xi[4] = {static_cast<long>(x0), static_cast<long>(x0) + 1, static_cast<long>(x0),
                                static_cast<long>(x0) + 1};
            const long yi[4] = {static_cast<long>(y0), static_cast<long>(y0), static_cast<long>(y0) + 1,
                                static_cast<long>(y0) + 1};
            for (std::size_t f = 0; f < t; ++f) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double acc = 0.0;
                    for (int k = 0; k < 4; ++k) {
                        if (weights[k] == 0.0) continue;
                        if (xi[k] < 0 || yi[k] < 0 || xi[k] >= static_cast<long>(w) || yi[k] >= static_cast<long>(h)) {
                            continue;  // zero fill
                        }
                        acc += weights[k] *
                               src[((f * h + static_cast<std::size_t>(yi[k])) * w + static_cast<std::size_t>(xi[k])) * c + ch];
                    }
                    out[((f * h + r) * w + col) * c + ch] = clamp01(acc);
                }
            }
        }
    }
    return with_frames(video, std::move(out));
}

VideoTensor hflip(const VideoTensor& video) {
    const std::size_t t = video.length(), h = video.height(), w = video.width(), c = video.channels();
    Tensor out(video.frames.shape());
    for (std::size_t f = 0; f < t; ++f)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col < w; ++col)
                for (std::size_t ch = 0; ch < c; ++ch)
                    out[((f * h + r) * w + col) * c + ch] = video.frames[((f * h + r) * w + (w - 1 - col)) * c + ch];
    return with_frames(video, std::move(out));
}

VideoTensor adjust_color(const VideoTensor& video, double brightness, double contrast) {
    Tensor out = video.frames;
    if (brightness != 1.0) {
        for (auto& v : out.data()) v = clamp01(v * brightness);
    }
    if (contrast != 1.0) {
        // Blend toward each frame's mean intensity.
        const std::size_t frame = video.height() * video.width() * video.channels();
        for (std::size_t f = 0; f < video.length(); ++f) {
            real* p = out.data().data() + f * frame;
            double m = 0.0;
            for (std::size_t i = 0; i < frame; ++i) m += p[i];
            m /= static_cast<double>(frame);
            for (std::size_t i = 0; i < frame; ++i) p[i] = clamp01((p[i] - m) * contrast + m);
        }
    }
    return with_frames(video, std::move(out));
}

VideoTensor augment(const VideoTensor& video, const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    const double angle = rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg);
    const bool flip = rng.bernoulli(policy.hflip_prob);
    const double brightness = rng.uniform(policy.brightness_range.first, policy.brightness_range.second);
    const double contrast = rng.uniform(policy.contrast_range.first, policy.contrast_range.second);
    VideoTensor out = rotate(video, angle);
    if (flip) out = hflip(out);
    return adjust_color(out, brightness, contrast);
}

Tensor synth_token_pattern(int token, const Vocabulary& vocab, std::size_t side) {
    if (!vocab.contains(token) || vocab.is_special(token)) {
        throw DataError("synth: unknown token id " + std::to_string(token));
    }
    const std::vector<int> regular = vocab.regular_ids();
    const auto rank = static_cast<std::size_t>(std::find(regular.begin(), regular.end(), token) - regular.begin());
    const std::size_t periods = rank + 1;
    const double hi = 0.55 + 0.35 * static_cast<double>(rank) / static_cast<double>(std::max<std::size_t>(regular.size() - 1, 1));
    const double lo = 0.15;
    Tensor p({side, side});
    for (std::size_t r = 0; r < side; ++r) {
        const std::size_t band = r * 2 * periods / side;
        const real v = static_cast<real>(band % 2 == 1 ? hi : lo);
        for (std::size_t c = 0; c < side; ++c) p[r * side + c] = v;
    }
    return p;
}

std::pair<VideoTensor, std::string> synth_generate(std::span<const int> tokens, const Vocabulary& vocab,
                                                   const SynthOptions& options, Rng& rng) {
    if (tokens.empty()) throw DataError("synth: empty token sequence");
    if (options.frames_per_token < 2) throw ConfigError("synth: frames_per_token must be >= 2");
    if (options.channels != 1 && options.channels != 3) throw ConfigError("synth: channels must be 1 or 3");
    if (options.side == 0) throw ConfigError("synth: side must be positive");
    const std::size_t n = options.side, c = options.channels;
    const std::size_t t = tokens.size() * options.frames_per_token;
    Tensor frames({t, n, n, c});
    std::size_t f = 0;
    for (int tok : tokens) {
        const Tensor pattern = synth_token_pattern(tok, vocab, n);
        for (std::size_t k = 0; k < options.frames_per_token; ++k, ++f) {
            for (std::size_t i = 0; i < n * n; ++i) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    frames[(f * n * n + i) * c + ch] = clamp01(pattern[i] + options.noise_sigma * rng.normal());
                }
            }
        }
    }
    VideoTensor video;
    video.frames = std::move(frames);
    return {std::move(video), vocab.decode(tokens)};
}

void save_video(const std::filesystem::path& path, const VideoTensor& video) { save_vten(path, video.frames); }

VideoTensor load_video(const std::filesystem::path& path) {
    VideoTensor v;
    v.frames = load_vten(path);
    validate_video(v);
    return v;
}

Tensor to_channels_first(const VideoTensor& video) {
    const std::size_t t = video.length(), h = video.height(), w = video.width(), c = video.channels();
    Tensor out({c, t, h, w});
    for (std::size_t f = 0; f < t; ++f)
        for (std::size_t i = 0; i < h * w; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) out[(ch * t + f) * h * w + i] = video.frames[(f * h * w + i) * c + ch];
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        }
        ManifestEntry e;
        e.id = line.substr(0, t1);
        e.path = line.substr(t1 + 1, t2 - t1 - 1);
        e.transcript = line.substr(t2 + 1);
        if (e.id.empty()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty utterance id");
        if (e.path.is_relative()) e.path = base / e.path;
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ostringstream os;
    for (const auto& e : entries) os << e.id << '\t' << e.path.generic_string() << '\t' << e.transcript << '\n';
    write_file_atomic(path, os.str());
}

}  // namespace vsr
