#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "vsr/error.hpp"
#include "vsr/tensor_io.hpp"
#include "vsr/video.hpp"

using namespace vsr;
namespace fs = std::filesystem;

namespace {

VideoTensor indexed_video(std::size_t t, std::size_t h, std::size_t w, std::size_t c = 1) {
    VideoTensor v;
    v.frames = Tensor({t, h, w, c});
    for (std::size_t i = 0; i < v.frames.numel(); ++i) v.frames[i] = static_cast<real>(i) / static_cast<real>(v.frames.numel());
    return v;
}

VideoTensor random_video(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed, std::size_t c = 1) {
    Rng rng(seed);
    VideoTensor v;
    v.frames = testing::random_tensor({t, h, w, c}, rng, 0.0, 1.0);
    return v;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("vsr_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const Vocabulary& toy_vocab() {
    static const Vocabulary v = Vocabulary::from_characters({"a", "b", "c", "d", "e"});
    return v;
}

}  // namespace

TEST_CASE("center_crop") {
    SUBCASE("full size is identity") {
        const VideoTensor v = random_video(3, 6, 6, 1);
        CHECK(bitwise_equal(center_crop(v, 6).frames, v.frames));
    }
    SUBCASE("224 -> 112 keeps rows and columns 56..167") {
        const VideoTensor v = indexed_video(1, 224, 224);
        const VideoTensor c = center_crop(v, 112);
        CHECK(c.frames.at({0, 0, 0, 0}) == v.frames.at({0, 56, 56, 0}));
        CHECK(c.frames.at({0, 111, 111, 0}) == v.frames.at({0, 167, 167, 0}));
    }
    SUBCASE("5x5 -> 3x3 matches index oracle") {
        const VideoTensor v = indexed_video(2, 5, 5);
        const VideoTensor c = center_crop(v, 3);
        for (std::size_t f = 0; f < 2; ++f)
            for (std::size_t r = 0; r < 3; ++r)
                for (std::size_t k = 0; k < 3; ++k) CHECK(c.frames.at({f, r, k, 0}) == v.frames.at({f, r + 1, k + 1, 0}));
    }
    SUBCASE("odd margin rounds toward the top-left") {
        const VideoTensor v = indexed_video(1, 6, 6);
        const VideoTensor c = center_crop(v, 3);
        CHECK(c.frames.at({0, 0, 0, 0}) == v.frames.at({0, 1, 1, 0}));
    }
    SUBCASE("composition on even sizes") {
        const VideoTensor v = random_video(2, 12, 12, 2, 3);
        CHECK(bitwise_equal(center_crop(center_crop(v, 8), 4).frames, center_crop(v, 4).frames));
    }
    CHECK_THROWS_AS(center_crop(indexed_video(1, 4, 4), 5), DimensionError);
}

TEST_CASE("speed_perturb index map") {
    auto indices = [](std::size_t t, double rate) {
        VideoTensor v = indexed_video(t, 1, 1);
        for (std::size_t i = 0; i < t; ++i) v.frames[i] = static_cast<real>(i) / 100.0f;
        const VideoTensor out = speed_perturb(v, rate);
        std::vector<int> idx;
        for (std::size_t j = 0; j < out.length(); ++j) idx.push_back(static_cast<int>(std::lround(out.frames[j] * 100.0f)));
        return idx;
    };
    CHECK(indices(9, 0.9) == std::vector<int>{0, 0, 1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(indices(10, 1.1) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const VideoTensor v = random_video(7, 4, 4, 3);
    CHECK(bitwise_equal(speed_perturb(v, 1.0).frames, v.frames));
    // Enumerated against the closed form for a spread of lengths.
    for (std::size_t t = 1; t <= 40; ++t) {
        for (double r : {0.9, 1.0, 1.1}) {
            const auto idx = indices(t, r);
            CHECK(idx.size() == static_cast<std::size_t>(std::ceil(static_cast<double>(t) / r - 1e-9)));
            for (std::size_t j = 0; j < idx.size(); ++j) CHECK(idx[j] == static_cast<int>(std::floor(j * r + 1e-9)));
        }
    }
}

TEST_CASE("augment") {
    const VideoTensor v = random_video(4, 8, 8, 4);
    SUBCASE("identity policy") {
        Rng rng(1);
        CHECK(bitwise_equal(augment(v, AugmentPolicy::identity(), rng).frames, v.frames));
    }
    SUBCASE("hflip is an involution") { CHECK(bitwise_equal(hflip(hflip(v)).frames, v.frames)); }
    SUBCASE("90 degree rotation of a 2x2 frame") {
        VideoTensor f;
        f.frames = Tensor({1, 2, 2, 1}, {0.1f, 0.2f, 0.3f, 0.4f});  // [[a,b],[c,d]]
        const VideoTensor r = rotate(f, 90.0);
        CHECK(r.frames[0] == 0.2f);  // b
        CHECK(r.frames[1] == 0.4f);  // d
        CHECK(r.frames[2] == 0.1f);  // a
        CHECK(r.frames[3] == 0.3f);  // c
    }
    SUBCASE("same seed reproduces bitwise; pixels stay in range; channels kept") {
        const VideoTensor c3 = random_video(3, 8, 8, 5, 3);
        AugmentPolicy p;
        p.brightness_range = {0.5, 1.8};
        Rng a(99), b(99);
        const VideoTensor x = augment(c3, p, a), y = augment(c3, p, b);
        CHECK(bitwise_equal(x.frames, y.frames));
        CHECK(x.channels() == 3);
        for (real px : x.frames.data()) CHECK((px >= 0.0f && px <= 1.0f));
    }
    SUBCASE("policy validation") {
        AugmentPolicy p;
        p.hflip_prob = 1.5;
        CHECK_THROWS_AS(p.validate(), ConfigError);
        p = AugmentPolicy{};
        p.brightness_range = {1.1, 1.3};
        CHECK_THROWS_AS(p.validate(), ConfigError);
    }
}

TEST_CASE("synth_generate") {
    const Vocabulary& vocab = toy_vocab();
    const std::vector<int> seq{2, 4, 3};
    SynthOptions opt;
    opt.side = 16;
    opt.frames_per_token = 3;
    Rng a(5), b(5);
    const auto [va, ta] = synth_generate(seq, vocab, opt, a);
    const auto [vb, tb] = synth_generate(seq, vocab, opt, b);
    CHECK(bitwise_equal(va.frames, vb.frames));
    CHECK(va.length() == seq.size() * opt.frames_per_token);
    CHECK(ta == "acb");
    CHECK_THROWS_AS(synth_generate(std::vector<int>{vocab.unk()}, vocab, opt, a), DataError);
    CHECK_THROWS_AS(synth_generate(std::vector<int>{99}, vocab, opt, a), DataError);
    opt.frames_per_token = 1;
    CHECK_THROWS_AS(synth_generate(seq, vocab, opt, a), ConfigError);
}

TEST_CASE("synth tokens are separable beyond the noise level") {
    const Vocabulary& vocab = toy_vocab();
    SynthOptions opt;
    const auto ids = vocab.regular_ids();
    double worst = 1e9;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            Rng r1(seed * 2 + 1), r2(seed * 2 + 2);
            const auto va = synth_generate(std::vector<int>{ids[i]}, vocab, opt, r1).first;
            const auto vb = synth_generate(std::vector<int>{ids[i + 1]}, vocab, opt, r2).first;
            const std::size_t frame = opt.side * opt.side;
            for (std::size_t f = 0; f < va.length(); ++f) {
                double mad = 0.0;
                for (std::size_t p = 0; p < frame; ++p) mad += std::abs(va.frames[f * frame + p] - vb.frames[f * frame + p]);
                worst = std::min(worst, mad / static_cast<double>(frame));
            }
        }
    }
    CHECK(worst > opt.noise_sigma);
}

TEST_CASE("vten round trip and errors") {
    const fs::path dir = temp_dir("vten");
    const VideoTensor v = random_video(3, 5, 5, 7, 3);
    save_video(dir / "a.vten", v);
    CHECK(bitwise_equal(load_video(dir / "a.vten").frames, v.frames));
    const std::string bytes = read_file(dir / "a.vten");
    CHECK(bytes.substr(0, 8) == "VTEN0001");
    CHECK(bytes.size() == 8 + 4 + 4 * 4 + v.frames.numel() * 4);

    { std::ofstream(dir / "empty.vten", std::ios::binary); }
    try {
        load_vten(dir / "empty.vten");
        FAIL("expected error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }
    {
        std::ofstream os(dir / "short.vten", std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
    }
    try {
        load_vten(dir / "short.vten");
        FAIL("expected error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    {
        std::ofstream os(dir / "huge.vten", std::ios::binary);
        os.write("VTEN0001", 8);
        write_u32(os, 3);
        for (int i = 0; i < 3; ++i) write_u32(os, 0xFFFFFFF0u);
    }
    try {
        load_vten(dir / "huge.vten");
        FAIL("expected error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("overflow") != std::string::npos);
    }
}

TEST_CASE("manifest round trip resolves relative paths") {
    const fs::path dir = temp_dir("manifest");
    write_manifest(dir / "m.tsv", {{"u1", "u1.vten", "abc"}, {"u2", "sub/u2.vten", "你好"}});
    const auto entries = read_manifest(dir / "m.tsv");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].path == dir / "u1.vten");
    CHECK(entries[1].transcript == "你好");
}

TEST_CASE("vocabulary encode/decode") {
    const Vocabulary& v = toy_vocab();
    CHECK(v.size() == 8);
    CHECK(v.blank() == 0);
    CHECK(v.sos_eos() == 7);
    CHECK(v.encode("a b\tc") == std::vector<int>{2, 3, 4});
    CHECK(v.encode("z") == std::vector<int>{v.unk()});
    const std::vector<int> ids{7, 2, 0, 6, 7};
    CHECK(v.decode(ids) == "ae");
    CHECK(utf8_chars("你 好") == std::vector<std::string>{"你", "好"});
}
