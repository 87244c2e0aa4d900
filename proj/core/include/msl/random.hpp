#pragma once

#include <cstdint>
#include <random>

namespace msl {

using Rng = std::mt19937_64;

// splitmix64 finaliser, used to derive independent stream seeds from one master seed
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix_seed(seed, stream));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// open interval (0,1), safe for logs
inline double uniform_open(Rng& rng) {
    double u;
    do {
        u = uniform01(rng);
    } while (u <= 0.0);
    return u;
}

inline double beta_draw(Rng& rng, double a, double b) {
    double x = std::gamma_distribution<double>(a, 1.0)(rng);
    double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
}

} // namespace msl
