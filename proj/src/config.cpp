#include "vsr/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>

#include "json.hpp"
#include "vsr/error.hpp"
#include "vsr/tensor_io.hpp"

namespace vsr {

namespace {

using json = nlohmann::json;

// Typed, strict reader over one JSON object; finish() rejects unread keys.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    const json* find(const char* key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    void get(const char* key, std::size_t& out) {
        if (const json* v = find(key)) out = as_size(*v, key);
    }
    void get(const char* key, double& out) {
        if (const json* v = find(key)) out = as_double(*v, key);
    }
    void get(const char* key, float& out) {
        if (const json* v = find(key)) out = static_cast<float>(as_double(*v, key));
    }
    void get(const char* key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(where(key) + "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(where(key) + "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::vector<std::string>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + "expected an array of strings");
            out.clear();
            for (const json& e : *v) {
                if (!e.is_string()) throw ConfigError(where(key) + "expected an array of strings");
                out.push_back(e.get<std::string>());
            }
        }
    }
    void get(const char* key, std::vector<std::size_t>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + "expected an array of non-negative integers");
            out.clear();
            for (const json& e : *v) out.push_back(as_size(e, key));
        }
    }
    void get(const char* key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(where(key) + "expected an array of numbers");
            out.clear();
            for (const json& e : *v) out.push_back(as_double(e, key));
        }
    }
    void get(const char* key, std::pair<double, double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array() || v->size() != 2) throw ConfigError(where(key) + "expected [low, high]");
            out = {as_double((*v)[0], key), as_double((*v)[1], key)};
        }
    }

    template <class F>
    void section(const char* key, F&& read) {
        if (const json* v = find(key)) {
            Reader r(*v, path_.empty() ? key : path_ + "." + key);
            read(r);
            r.finish();
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!used_.contains(key)) throw ConfigError(where(key.c_str()) + "unknown key");
    }

private:
    std::string where(const char* key = nullptr) const {
        std::string p = path_;
        if (key) p = p.empty() ? key : p + "." + key;
        return "config" + (p.empty() ? std::string() : " " + p) + ": ";
    }
    std::size_t as_size(const json& v, const char* key) const {
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    double as_double(const json& v, const char* key) const {
        if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
        return v.get<double>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

// Shortest decimal text of a real, stored as the double it denotes.
double real_json(real x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::strtod(std::string(buf, r.ptr).c_str(), nullptr);
}

json to_json(const FrontendConfig& c) {
    return {{"block_channels", c.block_channels},
            {"num_blocks", c.num_blocks},
            {"kernel", c.kernel},
            {"input_channels", c.input_channels},
            {"norm_eps", real_json(c.norm_eps)}};
}

void read(Reader& r, FrontendConfig& c) {
    r.get("block_channels", c.block_channels);
    r.get("num_blocks", c.num_blocks);
    r.get("kernel", c.kernel);
    r.get("input_channels", c.input_channels);
    r.get("norm_eps", c.norm_eps);
}

json to_json(const EncoderConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"input_dim", c.input_dim},
            {"layers", c.layers},
            {"d_model", c.d_model},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"cgmlp_expansion", c.cgmlp_expansion},
            {"kernel", c.kernel},
            {"merge_kernel", c.merge_kernel},
            {"dropout", real_json(c.dropout)},
            {"positional_encoding", c.positional_encoding},
            {"local_branch", c.local_branch},
            {"norm_eps", real_json(c.norm_eps)}};
}

void read(Reader& r, EncoderConfig& c) {
    std::string variant = to_string(c.variant);
    r.get("variant", variant);
    c.variant = parse_encoder_variant(variant);
    r.get("input_dim", c.input_dim);
    r.get("layers", c.layers);
    r.get("d_model", c.d_model);
    r.get("heads", c.heads);
    r.get("ffn_dim", c.ffn_dim);
    r.get("cgmlp_expansion", c.cgmlp_expansion);
    r.get("kernel", c.kernel);
    r.get("merge_kernel", c.merge_kernel);
    r.get("dropout", c.dropout);
    r.get("positional_encoding", c.positional_encoding);
    r.get("local_branch", c.local_branch);
    r.get("norm_eps", c.norm_eps);
}

json to_json(const DecoderConfig& c) {
    return {{"layers", c.layers},
            {"d_model", c.d_model},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"dropout", real_json(c.dropout)},
            {"norm_eps", real_json(c.norm_eps)}};
}

void read(Reader& r, DecoderConfig& c) {
    r.get("layers", c.layers);
    r.get("d_model", c.d_model);
    r.get("heads", c.heads);
    r.get("ffn_dim", c.ffn_dim);
    r.get("dropout", c.dropout);
    r.get("norm_eps", c.norm_eps);
}

json to_json(const LmConfig& c) {
    return {{"layers", c.layers},
            {"d_model", c.d_model},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"tie_embeddings", c.tie_embeddings},
            {"dropout", real_json(c.dropout)},
            {"norm_eps", real_json(c.norm_eps)}};
}

void read(Reader& r, LmConfig& c) {
    r.get("layers", c.layers);
    r.get("d_model", c.d_model);
    r.get("heads", c.heads);
    r.get("ffn_dim", c.ffn_dim);
    r.get("tie_embeddings", c.tie_embeddings);
    r.get("dropout", c.dropout);
    r.get("norm_eps", c.norm_eps);
}

json to_json(const ModelConfig& c) {
    return {{"vocabulary", c.vocabulary},       {"crop", c.crop},     {"frontend", to_json(c.frontend)},
            {"encoder", to_json(c.encoder)},    {"decoder", to_json(c.decoder)}, {"use_lm", c.use_lm},
            {"lm", to_json(c.lm)}};
}

void read(Reader& r, ModelConfig& c) {
    r.get("vocabulary", c.vocabulary);
    r.get("crop", c.crop);
    r.section("frontend", [&](Reader& s) { read(s, c.frontend); });
    r.section("encoder", [&](Reader& s) { read(s, c.encoder); });
    r.section("decoder", [&](Reader& s) { read(s, c.decoder); });
    r.get("use_lm", c.use_lm);
    r.section("lm", [&](Reader& s) { read(s, c.lm); });
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
}

}  // namespace

void DataConfig::validate() const {
    if (characters.empty()) throw ConfigError("data: characters must not be empty");
    (void)vocab();
    if (min_tokens == 0 || min_tokens > max_tokens) throw ConfigError("data: need 1 <= min_tokens <= max_tokens");
    if (synth.side == 0 || synth.frames_per_token == 0 || synth.channels == 0)
        throw ConfigError("data: synth side, frames_per_token and channels must be positive");
    if (!(synth.noise_sigma >= 0.0)) throw ConfigError("data: noise_sigma must be >= 0");
}

void AugmentConfig::validate() const {
    if (speed_rates.empty()) throw ConfigError("augment: speed_rates must not be empty");
    for (double r : speed_rates)
        if (!(r > 0.0)) throw ConfigError("augment: speed rates must be positive");
    policy.validate();
}

RunConfig::RunConfig() : model(ModelConfig::toy(data.vocab(), 32)) { train.seed = seed; }

void RunConfig::validate() const {
    data.validate();
    augment.validate();
    model.validate();
    train.validate();
    decode.validate();
    rover.validate();
    if (model.vocabulary != data.vocab().tokens())
        throw ConfigError("config: model vocabulary must equal the data vocabulary <blank>, <unk>, characters, <sos/eos>");
    if (model.crop > data.synth.side)
        throw ConfigError("config: model crop " + std::to_string(model.crop) + " exceeds rendered side " +
                          std::to_string(data.synth.side));
    if (model.frontend.input_channels != data.synth.channels)
        throw ConfigError("config: frontend input_channels must equal synth channels");
}

RunConfig parse_run_config(std::string_view json_text) {
    const json j = parse_json(json_text);
    RunConfig c;
    Reader r(j, "");
    std::size_t seed = static_cast<std::size_t>(c.seed);
    r.get("seed", seed);
    c.seed = seed;
    r.section("data", [&](Reader& s) {
        s.get("characters", c.data.characters);
        s.get("train_count", c.data.train_count);
        s.get("dev_count", c.data.dev_count);
        s.get("min_tokens", c.data.min_tokens);
        s.get("max_tokens", c.data.max_tokens);
        s.section("synth", [&](Reader& t) {
            t.get("side", c.data.synth.side);
            t.get("frames_per_token", c.data.synth.frames_per_token);
            t.get("channels", c.data.synth.channels);
            t.get("noise_sigma", c.data.synth.noise_sigma);
        });
    });
    c.model = ModelConfig::toy(c.data.vocab(), c.model.crop);
    c.model.frontend.input_channels = c.data.synth.channels;
    r.section("augment", [&](Reader& s) {
        s.get("speed_rates", c.augment.speed_rates);
        s.section("policy", [&](Reader& t) {
            t.get("rotation_max_deg", c.augment.policy.rotation_max_deg);
            t.get("hflip_prob", c.augment.policy.hflip_prob);
            t.get("brightness_range", c.augment.policy.brightness_range);
            t.get("contrast_range", c.augment.policy.contrast_range);
        });
    });
    r.section("model", [&](Reader& s) { read(s, c.model); });
    r.section("train", [&](Reader& s) {
        s.get("steps", c.train.steps);
        s.get("batch_size", c.train.batch_size);
        s.get("jobs", c.train.jobs);
        s.section("optimizer", [&](Reader& t) {
            t.get("peak_lr", c.train.optimizer.peak_lr);
            t.get("warmup_steps", c.train.optimizer.warmup_steps);
            t.get("beta1", c.train.optimizer.beta1);
            t.get("beta2", c.train.optimizer.beta2);
            t.get("epsilon", c.train.optimizer.epsilon);
            t.get("clip_norm", c.train.optimizer.clip_norm);
        });
        s.section("loss", [&](Reader& t) {
            t.get("ctc_weight", c.train.loss.ctc_weight);
            t.get("label_smoothing", c.train.loss.label_smoothing);
        });
    });
    r.section("decode", [&](Reader& s) {
        s.get("beam_size", c.decode.beam_size);
        s.get("ctc_weight", c.decode.ctc_weight);
        s.get("lm_weight", c.decode.lm_weight);
        s.get("max_len_ratio", c.decode.max_len_ratio);
        s.get("nbest", c.decode.nbest);
        s.get("length_bonus", c.decode.length_bonus);
        s.get("rescoring", c.decode.rescoring);
    });
    r.section("rover", [&](Reader& s) {
        s.get("confidence_weight", c.rover.confidence_weight);
        s.get("null_confidence", c.rover.null_confidence);
    });
    r.finish();
    c.train.seed = c.seed;
    c.augment.policy.rng_seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error&) {
        throw ConfigError("cannot read config " + path.string());
    }
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& c) {
    const json j = {
        {"seed", c.seed},
        {"data",
         {{"characters", c.data.characters},
          {"train_count", c.data.train_count},
          {"dev_count", c.data.dev_count},
          {"min_tokens", c.data.min_tokens},
          {"max_tokens", c.data.max_tokens},
          {"synth",
           {{"side", c.data.synth.side},
            {"frames_per_token", c.data.synth.frames_per_token},
            {"channels", c.data.synth.channels},
            {"noise_sigma", c.data.synth.noise_sigma}}}}},
        {"augment",
         {{"speed_rates", c.augment.speed_rates},
          {"policy",
           {{"rotation_max_deg", c.augment.policy.rotation_max_deg},
            {"hflip_prob", c.augment.policy.hflip_prob},
            {"brightness_range", {c.augment.policy.brightness_range.first, c.augment.policy.brightness_range.second}},
            {"contrast_range", {c.augment.policy.contrast_range.first, c.augment.policy.contrast_range.second}}}}}},
        {"model", to_json(c.model)},
        {"train",
         {{"steps", c.train.steps},
          {"batch_size", c.train.batch_size},
          {"jobs", c.train.jobs},
          {"optimizer",
           {{"peak_lr", c.train.optimizer.peak_lr},
            {"warmup_steps", c.train.optimizer.warmup_steps},
            {"beta1", c.train.optimizer.beta1},
            {"beta2", c.train.optimizer.beta2},
            {"epsilon", c.train.optimizer.epsilon},
            {"clip_norm", c.train.optimizer.clip_norm}}},
          {"loss", {{"ctc_weight", c.train.loss.ctc_weight}, {"label_smoothing", c.train.loss.label_smoothing}}}}},
        {"decode",
         {{"beam_size", c.decode.beam_size},
          {"ctc_weight", c.decode.ctc_weight},
          {"lm_weight", c.decode.lm_weight},
          {"max_len_ratio", c.decode.max_len_ratio},
          {"nbest", c.decode.nbest},
          {"length_bonus", c.decode.length_bonus},
          {"rescoring", c.decode.rescoring}}},
        {"rover", {{"confidence_weight", c.rover.confidence_weight}, {"null_confidence", c.rover.null_confidence}}}};
    return j.dump(2) + "\n";
}

std::string model_config_to_json(const ModelConfig& config) { return to_json(config).dump(); }

ModelConfig parse_model_config(std::string_view json_text) {
    const json j = parse_json(json_text);
    ModelConfig c;
    Reader r(j, "model");
    read(r, c);
    r.finish();
    c.validate();
    return c;
}

}  // namespace vsr
