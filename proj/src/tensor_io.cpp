#include "vsr/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "vsr/error.hpp"

namespace vsr {

void write_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(what + ": truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_tensor_body(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    for (real v : t.data()) write_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_tensor_body(std::istream& is, const std::string& what) {
    const std::uint32_t rank = read_u32(is, what);
    if (rank == 0 || rank > 16) throw DataError(what + ": invalid rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
    for (auto& d : shape) {
        d = read_u32(is, what);
        if (d == 0) throw DataError(what + ": zero-sized dimension");
        count *= d;
        if (count > kMaxElements) throw DataError(what + ": dimension overflow");
    }
    std::vector<real> data(count);
    std::vector<unsigned char> raw(count * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw DataError(what + ": truncated file (payload shorter than declared dims)");
    }
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* b = raw.data() + 4 * i;
        const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                   (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        data[i] = static_cast<real>(std::bit_cast<float>(bits));
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_vten(const std::filesystem::path& path, const Tensor& t) {
    std::ostringstream os;
    os.write(kVtenMagic, 8);
    write_tensor_body(os, t);
    write_file_atomic(path, os.str());
}

Tensor load_vten(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    char magic[8] = {};
    if (!is.read(magic, 8) || std::memcmp(magic, kVtenMagic, 8) != 0) {
        throw DataError(path.string() + ": bad magic");
    }
    Tensor t = read_tensor_body(is, path.string());
    if (is.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after payload");
    return t;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + path.string());
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) {
            std::filesystem::remove(tmp);
            throw DataError("write failed for " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace vsr
