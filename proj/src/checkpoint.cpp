#include "vsr/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "vsr/config.hpp"
#include "vsr/error.hpp"
#include "vsr/tensor_io.hpp"

namespace vsr {

namespace {

std::string shape_text(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

std::string read_bytes(std::istream& is, std::size_t n, const std::string& what) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError(what + ": truncated file");
    return s;
}

}  // namespace

void check_params_match(const ModelConfig& config, const ParamMap& params, const std::string& what) {
    Rng rng(0);
    const ParamMap expected = init_model(config, rng);
    for (const auto& [name, t] : expected) {
        const auto it = params.find(name);
        if (it == params.end()) throw DataError(what + ": missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw DataError(what + ": parameter " + name + " has shape " + shape_text(it->second.shape()) + ", config needs " +
                            shape_text(t.shape()));
    }
    for (const auto& [name, t] : params)
        if (!expected.contains(name)) throw DataError(what + ": unexpected parameter " + name);
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
    std::ostringstream os;
    os.write(kCheckpointMagic, 8);
    const std::string config = model_config_to_json(ckpt.config);
    write_u32(os, static_cast<std::uint32_t>(config.size()));
    os << config;
    write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os << name;
        write_tensor_body(os, t);
    }
    return os.str();
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes, const std::string& what) {
    std::istringstream is(bytes);
    char magic[8] = {};
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(what + ": bad magic");
    ModelCheckpoint ckpt;
    const std::string config = read_bytes(is, read_u32(is, what), what);
    try {
        ckpt.config = parse_model_config(config);
    } catch (const ConfigError& e) {
        throw DataError(what + ": embedded config: " + e.what());
    }
    const std::uint32_t count = read_u32(is, what);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_bytes(is, read_u32(is, what), what);
        Tensor t = read_tensor_body(is, what + " (" + name + ")");
        if (!ckpt.params.emplace(name, std::move(t)).second) throw DataError(what + ": duplicate parameter " + name);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes");
    check_params_match(ckpt.config, ckpt.params, what);
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    check_params_match(ckpt.config, ckpt.params, path.string());
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace vsr
