#include "msl/lidar_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msl/errors.hpp"

namespace msl {

void CubeDims::validate() const {
    if (rows == 0 || cols == 0 || bands == 0 || bins == 0)
        throw ValidationError("cube dimensions must be strictly positive");
    if (bins > 0xffffffffULL) throw ValidationError("too many time bins");
}

LidarCube::LidarCube(CubeDims dims) : dims_(dims) {
    dims_.validate();
    hist_.resize(dims_.pixels() * dims_.bands);
}

void LidarCube::add(std::size_t i, std::size_t j, std::size_t band, std::uint32_t bin, std::uint32_t count) {
    if (i >= dims_.rows || j >= dims_.cols || band >= dims_.bands)
        throw ValidationError("event outside cube: pixel (" + std::to_string(i) + "," + std::to_string(j) +
                              ") band " + std::to_string(band));
    if (bin < 1 || bin > dims_.bins) throw ValidationError("event bin " + std::to_string(bin) + " outside [1,T]");
    if (count == 0) return;
    auto& h = hist_[index(i, j, band)];
    auto it = std::lower_bound(h.begin(), h.end(), bin,
                               [](const PhotonEvent& e, std::uint32_t b) { return e.bin < b; });
    if (it != h.end() && it->bin == bin)
        it->count += count;
    else
        h.insert(it, PhotonEvent{bin, count});
}

std::uint64_t LidarCube::photons(std::size_t i, std::size_t j, std::size_t band) const {
    std::uint64_t n = 0;
    for (const auto& e : histogram(i, j, band)) n += e.count;
    return n;
}

std::uint64_t LidarCube::total_photons() const {
    std::uint64_t n = 0;
    for (const auto& h : hist_)
        for (const auto& e : h) n += e.count;
    return n;
}

std::vector<std::uint32_t> LidarCube::dense(std::size_t i, std::size_t j, std::size_t band) const {
    std::vector<std::uint32_t> out(dims_.bins, 0);
    for (const auto& e : histogram(i, j, band)) out[e.bin - 1] = e.count;
    return out;
}

void LidarCube::set_dense(std::size_t i, std::size_t j, std::size_t band, std::span<const std::uint32_t> counts) {
    if (counts.size() != dims_.bins) throw ValidationError("dense histogram length differs from T");
    auto& h = hist_[index(i, j, band)];
    h.clear();
    for (std::size_t t = 0; t < counts.size(); ++t)
        if (counts[t] > 0) h.push_back({static_cast<std::uint32_t>(t + 1), counts[t]});
}

SamplingMask::SamplingMask(std::size_t rows, std::size_t cols, std::size_t bands, bool value)
    : rows_(rows), cols_(cols), bands_(bands), bits_(rows * cols * bands, value ? 1 : 0) {
    if (rows == 0 || cols == 0 || bands == 0) throw ValidationError("mask dimensions must be strictly positive");
}

std::size_t SamplingMask::bands_at(std::size_t i, std::size_t j) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < bands_; ++l) n += (*this)(i, j, l);
    return n;
}

std::optional<std::size_t> SamplingMask::bands_per_pixel() const {
    std::size_t w = bands_at(0, 0);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j)
            if (bands_at(i, j) != w) return std::nullopt;
    return w;
}

std::size_t SamplingMask::observed() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void validate_pairing(const LidarCube& cube, const SamplingMask& mask) {
    const auto& d = cube.dims();
    if (mask.rows() != d.rows || mask.cols() != d.cols || mask.bands() != d.bands)
        throw ValidationError("mask dimensions do not match the cube");
    for (std::size_t f = 0; f < d.pixels() * d.bands; ++f)
        if (!mask.at(f) && !cube.histogram(f).empty())
            throw ValidationError("photons recorded in an unobserved pixel-band");
}

ImpulseResponse::ImpulseResponse(std::vector<Band> bands) : bands_(std::move(bands)) {
    if (bands_.empty()) throw ValidationError("impulse response needs at least one band");
    for (const auto& b : bands_) {
        if (b.samples.empty()) throw ValidationError("impulse response band with empty support");
        double s = 0.0;
        for (double v : b.samples) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("impulse response samples must be >= 0");
            s += v;
        }
        if (!(s > 0.0)) throw ValidationError("impulse response band sums to zero");
        sums_.push_back(s);
    }
}

ImpulseResponse ImpulseResponse::truncated_gaussian(std::span<const double> sigmas, int half_width) {
    if (half_width < 0) throw ValidationError("negative half width");
    std::vector<Band> bands;
    for (double s : sigmas) {
        if (!(s > 0.0)) throw ValidationError("gaussian width must be positive");
        Band b{-half_width, {}};
        for (int k = -half_width; k <= half_width; ++k) b.samples.push_back(std::exp(-0.5 * k * k / (s * s)));
        bands.push_back(std::move(b));
    }
    return ImpulseResponse(std::move(bands)).normalised();
}

ImpulseResponse ImpulseResponse::exp_modified_gaussian(std::span<const double> sigmas, std::span<const double> taus,
                                                       int left, int right) {
    if (sigmas.size() != taus.size()) throw ValidationError("sigma and tau lists differ in length");
    if (left > right) throw ValidationError("empty support");
    std::vector<Band> bands;
    for (std::size_t l = 0; l < sigmas.size(); ++l) {
        double s = sigmas[l], tau = taus[l];
        if (!(s > 0.0) || !(tau > 0.0)) throw ValidationError("EMG parameters must be positive");
        double lam = 1.0 / tau;
        Band b{left, {}};
        for (int k = left; k <= right; ++k) {
            double v = 0.5 * lam * std::exp(0.5 * lam * (lam * s * s - 2.0 * k)) *
                       std::erfc((lam * s * s - k) / (std::sqrt(2.0) * s));
            b.samples.push_back(std::isfinite(v) ? v : 0.0);
        }
        bands.push_back(std::move(b));
    }
    return ImpulseResponse(std::move(bands)).normalised();
}

double ImpulseResponse::operator()(std::size_t l, double offset) const {
    const Band& b = bands_[l];
    double x = offset - b.first_offset;
    double k = std::floor(x);
    double f = x - k;
    long n = static_cast<long>(b.samples.size());
    long ki = static_cast<long>(k);
    double lo = (ki >= 0 && ki < n) ? b.samples[ki] : 0.0;
    double hi = (ki + 1 >= 0 && ki + 1 < n) ? b.samples[ki + 1] : 0.0;
    return (1.0 - f) * lo + f * hi;
}

std::size_t ImpulseResponse::max_support() const {
    std::size_t m = 0;
    for (const auto& b : bands_) m = std::max(m, b.samples.size());
    return m;
}

double ImpulseResponse::window_sum(std::size_t l, double position, std::size_t bins) const {
    double lo = position + first_offset(l) - 1.0;
    double hi = position + last_offset(l) + 1.0;
    long t0 = std::max<long>(1, static_cast<long>(std::floor(lo)) + 1);
    long t1 = std::min<long>(static_cast<long>(bins), static_cast<long>(std::ceil(hi)) - 1);
    double s = 0.0;
    for (long t = t0; t <= t1; ++t) s += (*this)(l, static_cast<double>(t) - position);
    return s;
}

ImpulseResponse ImpulseResponse::normalised() const {
    auto bands = bands_;
    for (std::size_t l = 0; l < bands.size(); ++l)
        for (double& v : bands[l].samples) v /= sums_[l];
    return ImpulseResponse(std::move(bands));
}

std::pair<LidarCube, SamplingMask> bin_pixels(const LidarCube& cube, const SamplingMask& mask, std::size_t n) {
    if (n == 0) throw ValidationError("binning factor must be >= 1");
    const auto& d = cube.dims();
    if (mask.rows() != d.rows || mask.cols() != d.cols || mask.bands() != d.bands)
        throw ValidationError("mask dimensions do not match the cube");
    if (n == 1) return {cube, mask};
    CubeDims cd{(d.rows + n - 1) / n, (d.cols + n - 1) / n, d.bands, d.bins};
    LidarCube out(cd);
    SamplingMask om(cd.rows, cd.cols, cd.bands, false);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l) {
                if (mask(i, j, l)) om.set(i / n, j / n, l, true);
                for (const auto& e : cube.histogram(i, j, l)) out.add(i / n, j / n, l, e.bin, e.count);
            }
    return {std::move(out), std::move(om)};
}

LidarCube integrate_wavelengths(const LidarCube& cube) {
    const auto& d = cube.dims();
    LidarCube out(CubeDims{d.rows, d.cols, 1, d.bins});
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l)
                for (const auto& e : cube.histogram(i, j, l)) out.add(i, j, 0, e.bin, e.count);
    return out;
}

} // namespace msl
