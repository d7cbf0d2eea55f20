#include <filesystem>

#include "doctest.h"
#include "test_util.hpp"
#include "vsr/checkpoint.hpp"
#include "vsr/config.hpp"
#include "vsr/error.hpp"
#include "vsr/tensor_io.hpp"

using namespace vsr;

TEST_CASE("run config: defaults are the toy setup and validate") {
    const RunConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.model.vocab_size() == 11);
    CHECK(c.model.crop == 32);
    CHECK(c.data.synth.frames_per_token == 4);
    CHECK(c.decode.beam_size == 48);
    CHECK(c.decode.ctc_weight == 0.5);
    CHECK(c.decode.lm_weight == 0.4);
    CHECK(c.train.loss.ctc_weight == 0.3);
    CHECK(c.train.loss.label_smoothing == doctest::Approx(0.1));
    CHECK(c.augment.speed_rates == std::vector<double>{0.9, 1.0, 1.1});
}

TEST_CASE("run config: JSON text round-trips to identical text") {
    RunConfig c;
    c.seed = 7;
    c.model.crop = 16;
    c.decode.beam_size = 5;
    c.train.optimizer.peak_lr = 1e-3;
    c.augment.policy.rotation_max_deg = 5.0;
    const std::string text = run_config_to_json(c);
    const RunConfig back = parse_run_config(text);
    CHECK(run_config_to_json(back) == text);
    CHECK(back.seed == 7);
    CHECK(back.train.seed == 7);
    CHECK(back.model.crop == 16);
    CHECK(back.decode.beam_size == 5);
    CHECK(back.model.encoder.norm_eps == c.model.encoder.norm_eps);
}

TEST_CASE("run config: partial documents override defaults") {
    const RunConfig c = parse_run_config(R"({"seed": 3, "decode": {"beam_size": 8}, "model": {"crop": 16}})");
    CHECK(c.seed == 3);
    CHECK(c.decode.beam_size == 8);
    CHECK(c.decode.ctc_weight == 0.5);
    CHECK(c.model.crop == 16);
    CHECK(c.model.encoder.layers == 2);
    const RunConfig v = parse_run_config(R"({"data": {"characters": ["x", "y", "z"]}})");
    CHECK(v.model.vocab_size() == 6);
}

TEST_CASE("run config: bad documents raise ConfigError naming the key") {
    auto message = [](const char* text) {
        try {
            (void)parse_run_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(R"({"decode": {"beam": 4}})").find("decode.beam") != std::string::npos);
    CHECK(message(R"({"decode": {"beam_size": -1}})").find("decode.beam_size") != std::string::npos);
    CHECK(message(R"({"decode": {"beam_size": 0}})").find("beam") != std::string::npos);
    CHECK(message(R"({"train": {"loss": {"ctc_weight": "x"}}})").find("train.loss.ctc_weight") != std::string::npos);
    CHECK(message(R"({"model": {"encoder": {"variant": "lstm"}}})") != "no error");
    CHECK(message(R"({"model": {"crop": 64}})").find("crop") != std::string::npos);
    CHECK(message(R"({"model": {"vocabulary": ["a"]}})") != "no error");
    CHECK(message("{not json") .find("invalid JSON") != std::string::npos);
    CHECK(message("[]").find("expected an object") != std::string::npos);
}

TEST_CASE("checkpoint: save then load is bitwise idempotent") {
    RunConfig c;
    Rng rng(5);
    const ModelCheckpoint ckpt{c.model, init_model(c.model, rng)};
    const std::string bytes = serialize_checkpoint(ckpt);
    CHECK(bytes.compare(0, 8, "VSRCKPT1") == 0);
    const ModelCheckpoint back = deserialize_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(model_config_to_json(back.config) == model_config_to_json(c.model));
    REQUIRE(back.params.size() == ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) {
        const Tensor& u = back.params.at(name);
        REQUIRE(u.shape() == t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(same_bits(u[i], t[i]));
    }

    const auto dir = std::filesystem::temp_directory_path() / "vsr_test_config";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.ckpt", ckpt);
    CHECK(read_file(dir / "m.ckpt") == bytes);
    save_checkpoint(dir / "m2.ckpt", load_checkpoint(dir / "m.ckpt"));
    CHECK(read_file(dir / "m2.ckpt") == bytes);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint: corrupt or mismatched files raise DataError") {
    RunConfig c;
    Rng rng(6);
    ModelCheckpoint ckpt{c.model, init_model(c.model, rng)};
    const std::string bytes = serialize_checkpoint(ckpt);
    CHECK_THROWS_AS(deserialize_checkpoint("VSRCKPT0" + bytes.substr(8)), DataError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DataError);

    ModelCheckpoint missing = ckpt;
    missing.params.erase("ctc.out.b");
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(serialize_checkpoint(missing)), doctest::Contains("missing parameter ctc.out.b"),
                         DataError);
    ModelCheckpoint extra = ckpt;
    extra.params.emplace("zzz", Tensor({1}));
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(serialize_checkpoint(extra)), doctest::Contains("unexpected parameter zzz"),
                         DataError);
    ModelCheckpoint reshaped = ckpt;
    reshaped.params.at("ctc.out.b") = Tensor({3});
    CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(reshaped)), DataError);
    CHECK_THROWS_AS(save_checkpoint("/nonexistent-dir/x.ckpt", reshaped), DataError);
}
