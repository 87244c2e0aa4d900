#pragma once

#include <cstdint>
#include <vector>

#include "msl/lidar_data.hpp"

namespace msl {

struct CodeDesignSpec {
    std::size_t rows = 32;
    std::size_t cols = 32;
    std::size_t bands = 8;
    std::size_t w = 1; // observed bands per pixel
    int radius = 1;    // window is (2 radius + 1)^2 pixels
    std::vector<double> weights; // row-major window weights; empty means uniform
    std::uint64_t seed = 1;
    std::size_t sweeps = 200; // annealing steps per pixel and slice

    void validate() const;
};

// Variance over every (pixel, band) of the clipped, weight-normalised windowed count of that band.
double local_variance(const SamplingMask& mask, int radius = 1, const std::vector<double>& weights = {});

// contiguous band slices, sizes differing by at most one; slice s holds bands [first[s], first[s+1])
std::vector<std::size_t> band_slices(std::size_t bands, std::size_t w);

struct DesignedMask {
    SamplingMask mask;
    double objective = 0.0;
};

DesignedMask design_blue_noise(const CodeDesignSpec& spec);
SamplingMask random_code_per_pixel(const CodeDesignSpec& spec);
SamplingMask random_code_per_band(const CodeDesignSpec& spec);

} // namespace msl
