#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace msl {

// Rows, columns, bands are 0-based everywhere. Time bins are 1-based: t in [1, bins].
struct CubeDims {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bands = 0;
    std::size_t bins = 0;

    std::size_t pixels() const { return rows * cols; }
    void validate() const;
    bool operator==(const CubeDims&) const = default;
};

struct PhotonEvent {
    std::uint32_t bin;
    std::uint32_t count;
    bool operator==(const PhotonEvent&) const = default;
};

class LidarCube {
public:
    LidarCube() = default;
    explicit LidarCube(CubeDims dims);

    const CubeDims& dims() const { return dims_; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t band) const {
        return (i * dims_.cols + j) * dims_.bands + band;
    }

    // events sorted by bin, each bin at most once
    std::span<const PhotonEvent> histogram(std::size_t i, std::size_t j, std::size_t band) const {
        return hist_[index(i, j, band)];
    }
    std::span<const PhotonEvent> histogram(std::size_t flat) const { return hist_[flat]; }

    // adds count photons at bin, merging with an existing entry
    void add(std::size_t i, std::size_t j, std::size_t band, std::uint32_t bin, std::uint32_t count);

    std::uint64_t photons(std::size_t i, std::size_t j, std::size_t band) const;
    std::uint64_t total_photons() const;

    std::vector<std::uint32_t> dense(std::size_t i, std::size_t j, std::size_t band) const;
    void set_dense(std::size_t i, std::size_t j, std::size_t band, std::span<const std::uint32_t> counts);

    bool operator==(const LidarCube&) const = default;

private:
    CubeDims dims_;
    std::vector<std::vector<PhotonEvent>> hist_;
};

class SamplingMask {
public:
    SamplingMask() = default;
    SamplingMask(std::size_t rows, std::size_t cols, std::size_t bands, bool value = true);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t bands() const { return bands_; }

    bool operator()(std::size_t i, std::size_t j, std::size_t band) const {
        return bits_[(i * cols_ + j) * bands_ + band] != 0;
    }
    bool at(std::size_t flat) const { return bits_[flat] != 0; }
    void set(std::size_t i, std::size_t j, std::size_t band, bool value) {
        bits_[(i * cols_ + j) * bands_ + band] = value ? 1 : 0;
    }

    std::size_t bands_at(std::size_t i, std::size_t j) const;
    // W when every pixel observes the same number of bands
    std::optional<std::size_t> bands_per_pixel() const;
    std::size_t observed() const;

    bool operator==(const SamplingMask&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0, bands_ = 0;
    std::vector<std::uint8_t> bits_;
};

// throws ValidationError on dimension mismatch or photons in an unobserved pixel-band
void validate_pairing(const LidarCube& cube, const SamplingMask& mask);

// Discrete per-band waveform h(k) on integer offsets [first, first + size).
// Evaluated off-grid by linear interpolation, zero outside the support.
class ImpulseResponse {
public:
    struct Band {
        int first_offset = 0;
        std::vector<double> samples;
    };

    ImpulseResponse() = default;
    explicit ImpulseResponse(std::vector<Band> bands);

    // Gaussian with per-band width, sampled on [-half_width, half_width], normalised to unit sum
    static ImpulseResponse truncated_gaussian(std::span<const double> sigmas, int half_width);
    // Gaussian convolved with an exponential tail of mean tau; normalised to unit sum
    static ImpulseResponse exp_modified_gaussian(std::span<const double> sigmas, std::span<const double> taus,
                                                 int left, int right);

    std::size_t bands() const { return bands_.size(); }
    const Band& band(std::size_t l) const { return bands_[l]; }

    double operator()(std::size_t l, double offset) const;
    double sum(std::size_t l) const { return sums_[l]; }
    int first_offset(std::size_t l) const { return bands_[l].first_offset; }
    int last_offset(std::size_t l) const {
        return bands_[l].first_offset + static_cast<int>(bands_[l].samples.size()) - 1;
    }
    std::size_t support_length(std::size_t l) const { return bands_[l].samples.size(); }
    std::size_t max_support() const;

    // sum over t = 1..bins of h(t - position)
    double window_sum(std::size_t l, double position, std::size_t bins) const;

    // rescale every band to unit sum
    ImpulseResponse normalised() const;

private:
    std::vector<Band> bands_;
    std::vector<double> sums_;
};

// Sums n x n pixel patches (edge patches may be smaller). Mask bits are OR-ed.
std::pair<LidarCube, SamplingMask> bin_pixels(const LidarCube& cube, const SamplingMask& mask, std::size_t n);

LidarCube integrate_wavelengths(const LidarCube& cube);

} // namespace msl
