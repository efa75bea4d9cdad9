#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <boost/random/normal_distribution.hpp>

namespace levicool {

/// 64-bit FNV-1a; used for stream names and config hashes.
constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the named stream derived from a root seed. Streams with different
/// names are statistically independent, so switching one noise source on or
/// off leaves the draws of every other source untouched.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::string_view name) {
    return splitmix64(splitmix64(root) ^ fnv1a(name));
}

class Rng {
public:
    using Engine = std::mt19937_64;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t root, std::string_view stream) : engine_(stream_seed(root, stream)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    Engine& engine() { return engine_; }

private:
    Engine engine_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace levicool
