#include "msl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "msl/errors.hpp"

namespace msl {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PointCloud::PointCloud(std::size_t rows, std::size_t cols, std::size_t bands)
    : rows_(rows), cols_(cols), bands_(bands), pixel_(rows * cols) {}

PointCloud PointCloud::from_points(std::size_t rows, std::size_t cols, std::size_t bands,
                                   const std::vector<Point>& points) {
    PointCloud c(rows, cols, bands);
    for (const auto& p : points) c.add(p);
    return c;
}

PointId PointCloud::add(Point p) {
    if (p.x >= rows_ || p.y >= cols_) throw ValidationError("point outside the image");
    if (p.m.size() != bands_) throw ValidationError("point has the wrong number of bands");
    PointId id;
    if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
        slots_[id] = std::move(p);
        alive_[id] = 1;
        position_[id] = static_cast<std::uint32_t>(ids_.size());
    } else {
        id = static_cast<PointId>(slots_.size());
        slots_.push_back(std::move(p));
        alive_.push_back(1);
        position_.push_back(static_cast<std::uint32_t>(ids_.size()));
    }
    ids_.push_back(id);
    pixel_[slots_[id].x * cols_ + slots_[id].y].push_back(id);
    return id;
}

void PointCloud::remove(PointId id) {
    if (!alive(id)) throw ValidationError("removing a point that does not exist");
    std::uint32_t pos = position_[id];
    PointId last = ids_.back();
    ids_[pos] = last;
    position_[last] = pos;
    ids_.pop_back();
    auto& px = pixel_[slots_[id].x * cols_ + slots_[id].y];
    px.erase(std::find(px.begin(), px.end(), id));
    alive_[id] = 0;
    free_.push_back(id);
}

void PointCloud::replace(PointId id, Point p) {
    if (!alive(id)) throw ValidationError("replacing a point that does not exist");
    if (p.x != slots_[id].x || p.y != slots_[id].y) throw ValidationError("replace cannot move a point across pixels");
    if (p.m.size() != bands_) throw ValidationError("point has the wrong number of bands");
    slots_[id] = std::move(p);
}

std::vector<Point> PointCloud::points() const {
    std::vector<Point> out;
    out.reserve(ids_.size());
    for (PointId id : ids_) out.push_back(slots_[id]);
    std::sort(out.begin(), out.end(), [](const Point& a, const Point& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.t < b.t;
    });
    return out;
}

void ModelHyper::validate() const {
    if (!(gamma_a > 0) || !(lambda_a > 0) || !(sigma2 > 0) || !(beta > 0))
        throw ValidationError("gamma_a, lambda_a, sigma2 and beta must be positive");
    if (!(d_min >= 1)) throw ValidationError("d_min must be >= 1");
    if (n_b < 0) throw ValidationError("n_b must be >= 0");
    if (!(pixel_pitch > 0) || !(bin_pitch > 0) || !(voxel_measure > 0))
        throw ValidationError("pitches and voxel measure must be positive");
}

double distance(const Point& a, const Point& b, const ModelHyper& h) {
    double dx = (double(a.x) - double(b.x)) * h.pixel_pitch;
    double dy = (double(a.y) - double(b.y)) * h.pixel_pitch;
    double dt = (a.t - b.t) * h.bin_pitch;
    return std::sqrt(dx * dx + dy * dy + dt * dt);
}

void collect_neighbors(const PointCloud& cloud, std::size_t x, std::size_t y, double t, const ModelHyper& h,
                       std::vector<PointId>& out) {
    out.clear();
    long r = static_cast<long>(cloud.rows()), c = static_cast<long>(cloud.cols());
    for (long dx = -1; dx <= 1; ++dx)
        for (long dy = -1; dy <= 1; ++dy) {
            if (dx == 0 && dy == 0) continue;
            long xx = static_cast<long>(x) + dx, yy = static_cast<long>(y) + dy;
            if (xx < 0 || yy < 0 || xx >= r || yy >= c) continue;
            for (PointId q : cloud.at_pixel(xx, yy))
                if (std::abs(cloud[q].t - t) <= h.n_b) out.push_back(q);
        }
}

std::vector<PointId> neighbors(const PointCloud& cloud, PointId id, const ModelHyper& h) {
    std::vector<PointId> out;
    const Point& p = cloud[id];
    collect_neighbors(cloud, p.x, p.y, p.t, h, out);
    return out;
}

VoxelBox interaction_box(std::size_t x, std::size_t y, double t, std::size_t rows, std::size_t cols,
                         std::size_t bins, int n_b) {
    long tc = std::lround(t);
    return VoxelBox{std::max<long>(0, long(x) - 1),    std::min<long>(long(rows) - 1, long(x) + 1),
                    std::max<long>(0, long(y) - 1),    std::min<long>(long(cols) - 1, long(y) + 1),
                    std::max<long>(1, tc - n_b),       std::min<long>(long(bins), tc + n_b)};
}

std::size_t union_voxels(const PointCloud& cloud, const ModelHyper& h, std::size_t bins) {
    std::size_t total = 0;
    std::vector<std::pair<long, long>> iv;
    long rows = static_cast<long>(cloud.rows()), cols = static_cast<long>(cloud.cols());
    for (long x = 0; x < rows; ++x)
        for (long y = 0; y < cols; ++y) {
            iv.clear();
            for (long xx = std::max(0L, x - 1); xx <= std::min(rows - 1, x + 1); ++xx)
                for (long yy = std::max(0L, y - 1); yy <= std::min(cols - 1, y + 1); ++yy)
                    for (PointId q : cloud.at_pixel(xx, yy)) {
                        VoxelBox b = interaction_box(xx, yy, cloud[q].t, rows, cols, bins, h.n_b);
                        if (b.t0 <= b.t1) iv.emplace_back(b.t0, b.t1);
                    }
            if (iv.empty()) continue;
            std::sort(iv.begin(), iv.end());
            long cur0 = iv[0].first, cur1 = iv[0].second;
            for (std::size_t k = 1; k < iv.size(); ++k) {
                if (iv[k].first > cur1 + 1) {
                    total += cur1 - cur0 + 1;
                    cur0 = iv[k].first;
                    cur1 = iv[k].second;
                } else {
                    cur1 = std::max(cur1, iv[k].second);
                }
            }
            total += cur1 - cur0 + 1;
        }
    return total;
}

double pixel_intensity(const PointCloud& cloud, double b, const ImpulseResponse& irf, std::size_t i, std::size_t j,
                       std::size_t l, double t, bool g) {
    if (!g) return 0.0;
    double lam = b;
    for (PointId q : cloud.at_pixel(i, j)) lam += std::exp(cloud[q].m[l]) * irf(l, t - cloud[q].t);
    return lam;
}

double pixel_band_loglik(const LidarCube& cube, const PointCloud& cloud, double b, bool g, const ImpulseResponse& irf,
                         std::size_t i, std::size_t j, std::size_t l) {
    if (!g) return 0.0;
    const auto px = cloud.at_pixel(i, j);
    const std::size_t T = cube.dims().bins;
    double s = 0.0;
    for (const auto& e : cube.histogram(i, j, l)) {
        double lam = b;
        for (PointId q : px) lam += std::exp(cloud[q].m[l]) * irf(l, double(e.bin) - cloud[q].t);
        if (!(lam > 0.0)) return kNegInf;
        s += e.count * std::log(lam);
    }
    double mass = b * double(T);
    for (PointId q : px) mass += std::exp(cloud[q].m[l]) * irf.window_sum(l, cloud[q].t, T);
    return s - mass;
}

double log_likelihood(const LidarCube& cube, const PointCloud& cloud, const BackgroundField& bg,
                      const SamplingMask& mask, const ImpulseResponse& irf) {
    validate_pairing(cube, mask);
    const auto& d = cube.dims();
    double s = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l)
                s += pixel_band_loglik(cube, cloud, bg(i, j, l), mask(i, j, l), irf, i, j, l);
    return s;
}

bool strauss_valid(const PointCloud& cloud, double d_min) {
    for (std::size_t x = 0; x < cloud.rows(); ++x)
        for (std::size_t y = 0; y < cloud.cols(); ++y) {
            auto px = cloud.at_pixel(x, y);
            for (std::size_t a = 0; a < px.size(); ++a)
                for (std::size_t b = a + 1; b < px.size(); ++b)
                    if (std::abs(cloud[px[a]].t - cloud[px[b]].t) < d_min) return false;
        }
    return true;
}

double area_interaction_logdensity(const PointCloud& cloud, const ModelHyper& h, std::size_t bins) {
    return double(cloud.size()) * std::log(h.lambda_a) -
           h.voxel_measure * double(union_voxels(cloud, h, bins)) * std::log(h.gamma_a);
}

Eigen::SparseMatrix<double> build_precision(const PointCloud& cloud, const ModelHyper& h) {
    const auto ids = cloud.ids();
    const std::size_t n = ids.size();
    std::vector<std::uint32_t> pos(ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1, 0);
    for (std::size_t k = 0; k < n; ++k) pos[ids[k]] = static_cast<std::uint32_t>(k);
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<PointId> nb;
    for (std::size_t k = 0; k < n; ++k) {
        const Point& p = cloud[ids[k]];
        collect_neighbors(cloud, p.x, p.y, p.t, h, nb);
        double diag = h.beta;
        for (PointId q : nb) {
            double w = 1.0 / distance(p, cloud[q], h);
            diag += w;
            trip.emplace_back(int(k), int(pos[q]), -w);
        }
        trip.emplace_back(int(k), int(k), diag);
    }
    Eigen::SparseMatrix<double> P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    P.setFromTriplets(trip.begin(), trip.end());
    return P;
}

double log_det_spd(const Eigen::SparseMatrix<double>& p) {
    if (p.rows() == 0) return 0.0;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(p);
    if (llt.info() != Eigen::Success) throw NumericalError("precision matrix is not positive definite");
    Eigen::SparseMatrix<double> L = llt.matrixL();
    double s = 0.0;
    for (long k = 0; k < L.outerSize(); ++k) s += std::log(L.coeff(k, k));
    return 2.0 * s;
}

double gmrf_logdensity(const Eigen::VectorXd& m, const Eigen::SparseMatrix<double>& p, double sigma2) {
    if (m.size() != p.rows()) throw ValidationError("GMRF vector and precision sizes differ");
    double q = m.dot(p * m);
    return -0.5 * q / sigma2 + 0.5 * log_det_spd(p) -
           0.5 * double(m.size()) * std::log(2.0 * std::numbers::pi * sigma2);
}

double gmrf_logdensity(const PointCloud& cloud, const ModelHyper& h) {
    if (cloud.empty()) return 0.0;
    auto P = build_precision(cloud, h);
    double ld = log_det_spd(P);
    const auto ids = cloud.ids();
    const double n = double(ids.size());
    double s = 0.0;
    Eigen::VectorXd m(long(ids.size()));
    for (std::size_t l = 0; l < cloud.bands(); ++l) {
        for (std::size_t k = 0; k < ids.size(); ++k) m[long(k)] = cloud[ids[k]].m[l];
        s += -0.5 * m.dot(P * m) / h.sigma2 + 0.5 * ld - 0.5 * n * std::log(2.0 * std::numbers::pi * h.sigma2);
    }
    return s;
}

double gamma_log_density(double b, double k, double theta) {
    if (!(b > 0.0)) return kNegInf;
    return (k - 1.0) * std::log(b) - b / theta - std::lgamma(k) - k * std::log(theta);
}

double background_log_prior(const BackgroundField& bg, const GammaHyper& prior) {
    if (!bg.same_shape(prior.shape) || !bg.same_shape(prior.scale))
        throw ValidationError("background and prior shapes differ");
    double s = 0.0;
    for (std::size_t f = 0; f < bg.size(); ++f) s += gamma_log_density(bg.at(f), prior.shape.at(f), prior.scale.at(f));
    return s;
}

PosteriorTerms posterior_terms(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                               const PointCloud& cloud, const BackgroundField& bg, const GammaHyper& prior,
                               const ModelHyper& h) {
    PosteriorTerms t;
    t.background = background_log_prior(bg, prior);
    if (!strauss_valid(cloud, h.d_min)) {
        t.area = kNegInf;
        return t;
    }
    for (PointId id : cloud.ids())
        if (!(cloud[id].t >= 1.0 && cloud[id].t <= double(cube.dims().bins))) {
            t.area = kNegInf;
            return t;
        }
    t.likelihood = log_likelihood(cube, cloud, bg, mask, irf);
    t.gmrf = gmrf_logdensity(cloud, h);
    t.area = area_interaction_logdensity(cloud, h, cube.dims().bins);
    return t;
}

double log_posterior(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                     const PointCloud& cloud, const BackgroundField& bg, const GammaHyper& prior,
                     const ModelHyper& h) {
    return posterior_terms(cube, mask, irf, cloud, bg, prior, h).total();
}

} // namespace msl
