#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"

namespace msl {

struct Point {
    std::uint32_t x = 0; // row
    std::uint32_t y = 0; // column
    double t = 1.0;      // real-valued bin position in [1, T]
    std::vector<double> m; // log-intensity per band

    bool operator==(const Point&) const = default;
};

using PointId = std::uint32_t;

// Point set with stable ids and a per-pixel index. Ids of removed points are recycled LIFO.
class PointCloud {
public:
    PointCloud() = default;
    PointCloud(std::size_t rows, std::size_t cols, std::size_t bands);

    static PointCloud from_points(std::size_t rows, std::size_t cols, std::size_t bands,
                                  const std::vector<Point>& points);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t bands() const { return bands_; }

    PointId add(Point p);
    void remove(PointId id);
    // replace a point keeping its id; the pixel may not change
    void replace(PointId id, Point p);

    const Point& operator[](PointId id) const { return slots_[id]; }
    bool alive(PointId id) const { return id < alive_.size() && alive_[id]; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

    std::span<const PointId> ids() const { return ids_; }
    std::span<const PointId> at_pixel(std::size_t x, std::size_t y) const { return pixel_[x * cols_ + y]; }

    // alive points ordered by (x, y, t)
    std::vector<Point> points() const;

private:
    std::size_t rows_ = 0, cols_ = 0, bands_ = 0;
    std::vector<Point> slots_;
    std::vector<std::uint8_t> alive_;
    std::vector<std::uint32_t> position_;
    std::vector<PointId> ids_;
    std::vector<PointId> free_;
    std::vector<std::vector<PointId>> pixel_;
};

struct ModelHyper {
    double gamma_a = 7.38905609893065; // e^2
    double lambda_a = 1.0;
    double sigma2 = 0.36;
    double beta = 0.0036;
    double d_min = 17.0; // bins
    int n_b = 8;         // bins
    double pixel_pitch = 1.0;
    double bin_pitch = 1.0;
    double voxel_measure = 1.0; // measure of one (pixel, bin) voxel of an interaction box

    void validate() const;
};

// Euclidean distance after scaling pixel and bin offsets by their pitches
double distance(const Point& a, const Point& b, const ModelHyper& h);

// points of the 8 surrounding pixels of (x, y) within n_b bins of t
void collect_neighbors(const PointCloud& cloud, std::size_t x, std::size_t y, double t, const ModelHyper& h,
                       std::vector<PointId>& out);
std::vector<PointId> neighbors(const PointCloud& cloud, PointId id, const ModelHyper& h);

// inclusive voxel box: +-1 pixel, round(t) +- n_b bins, clipped to the cube
struct VoxelBox {
    long x0, x1, y0, y1, t0, t1;
};
VoxelBox interaction_box(std::size_t x, std::size_t y, double t, std::size_t rows, std::size_t cols,
                         std::size_t bins, int n_b);

// voxel count of the union of interaction boxes
std::size_t union_voxels(const PointCloud& cloud, const ModelHyper& h, std::size_t bins);

double pixel_intensity(const PointCloud& cloud, double b, const ImpulseResponse& irf, std::size_t i, std::size_t j,
                       std::size_t l, double t, bool g);

// log-likelihood of one histogram, log z! dropped
double pixel_band_loglik(const LidarCube& cube, const PointCloud& cloud, double b, bool g, const ImpulseResponse& irf,
                         std::size_t i, std::size_t j, std::size_t l);

double log_likelihood(const LidarCube& cube, const PointCloud& cloud, const BackgroundField& bg,
                      const SamplingMask& mask, const ImpulseResponse& irf);

bool strauss_valid(const PointCloud& cloud, double d_min);

double area_interaction_logdensity(const PointCloud& cloud, const ModelHyper& h, std::size_t bins);

// rows and columns follow cloud.ids()
Eigen::SparseMatrix<double> build_precision(const PointCloud& cloud, const ModelHyper& h);

// log-determinant of a symmetric positive definite matrix; throws NumericalError otherwise
double log_det_spd(const Eigen::SparseMatrix<double>& p);

double gmrf_logdensity(const Eigen::VectorXd& m, const Eigen::SparseMatrix<double>& p, double sigma2);
// sum over bands, one factorisation
double gmrf_logdensity(const PointCloud& cloud, const ModelHyper& h);

double gamma_log_density(double b, double k, double theta);
double background_log_prior(const BackgroundField& bg, const GammaHyper& prior);

struct PosteriorTerms {
    double likelihood = 0.0;
    double gmrf = 0.0;
    double area = 0.0;
    double background = 0.0;
    double total() const { return likelihood + gmrf + area + background; }
};

// -inf terms when the hard-core is violated or a background level is not positive.
// The point-process density is taken w.r.t. a Poisson reference of unit total mass.
PosteriorTerms posterior_terms(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                               const PointCloud& cloud, const BackgroundField& bg, const GammaHyper& prior,
                               const ModelHyper& h);
double log_posterior(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                     const PointCloud& cloud, const BackgroundField& bg, const GammaHyper& prior,
                     const ModelHyper& h);

} // namespace msl
