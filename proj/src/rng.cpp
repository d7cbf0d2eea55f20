#include "vsr/rng.hpp"

#include <cmath>
#include <numbers>

namespace vsr {

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t global_seed, std::string_view utterance_id) {
    // FNV-1a over the id, then mixed with the global seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : utterance_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(global_seed) ^ h);
}

}  // namespace vsr
