#pragma once

#include <cstddef>
#include <vector>

namespace msl {

// Dense rows x cols x bands array of reals, band fastest.
class Field3 {
public:
    Field3() = default;
    Field3(std::size_t rows, std::size_t cols, std::size_t bands, double value = 0.0)
        : rows_(rows), cols_(cols), bands_(bands), v_(rows * cols * bands, value) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t bands() const { return bands_; }
    std::size_t size() const { return v_.size(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t l) const { return (i * cols_ + j) * bands_ + l; }
    double& operator()(std::size_t i, std::size_t j, std::size_t l) { return v_[index(i, j, l)]; }
    double operator()(std::size_t i, std::size_t j, std::size_t l) const { return v_[index(i, j, l)]; }
    double& at(std::size_t flat) { return v_[flat]; }
    double at(std::size_t flat) const { return v_[flat]; }

    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    bool same_shape(const Field3& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && bands_ == o.bands_; }
    bool operator==(const Field3&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0, bands_ = 0;
    std::vector<double> v_;
};

// background level b per pixel-band, photons per bin
using BackgroundField = Field3;

struct GammaHyper {
    Field3 shape;
    Field3 scale;

    static GammaHyper constant(std::size_t rows, std::size_t cols, std::size_t bands, double k, double theta) {
        return {Field3(rows, cols, bands, k), Field3(rows, cols, bands, theta)};
    }
};

} // namespace msl
