#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace wdn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/**
 * Counter-based stream keyed by (seed, name, component). Draw i depends only
 * on the key and i, so streams never interfere with each other.
 */
class Stream {
public:
    Stream(std::uint64_t seed, std::string_view name, std::string_view component)
        : key_(splitmix64(splitmix64(seed) ^ fnv1a(name) ^ splitmix64(fnv1a(component)))) {}

    /// Uniform in (0, 1) for counter i.
    double uniform(std::uint64_t i) const {
        const std::uint64_t bits = splitmix64(key_ ^ splitmix64(i + 0x632be59bd9b4e019ULL));
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal for counter i (Box-Muller over two derived uniforms).
    double normal(std::uint64_t i) const {
        const double u1 = uniform(2 * i), u2 = uniform(2 * i + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

} // namespace wdn
