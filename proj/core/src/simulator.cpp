#include "msl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msl/errors.hpp"
#include "msl/random.hpp"

namespace msl {

void SceneSpec::validate() const {
    dims.validate();
    if (surfaces.empty()) throw ValidationError("scene has no surfaces");
    for (const auto& s : surfaces) {
        if (s.reflectivity.size() != dims.bands) throw ValidationError("one reflectivity per band is required");
        for (double r : s.reflectivity)
            if (!(r >= 0)) throw ValidationError("reflectivities must be non-negative");
        if (!(s.opacity > 0 && s.opacity <= 1)) throw ValidationError("opacity must lie in (0,1]");
        if (s.steps == 0) throw ValidationError("steps must be positive");
        if (!(s.texture >= 0 && s.texture < 1)) throw ValidationError("texture amplitude must lie in [0,1)");
        if (!(s.texture_period > 0)) throw ValidationError("texture period must be positive");
    }
    if (background_mode == BackgroundMode::constant && background_levels.size() != dims.bands)
        throw ValidationError("constant background needs one level per band");
    if (!background_levels.empty() && background_levels.size() != dims.bands)
        throw ValidationError("one background level per band is required");
    for (double b : background_levels)
        if (!(b > 0)) throw ValidationError("background levels must be positive");
    if (photons_per_pixel_band > 0 && !(background_photons > 0 && background_photons < photons_per_pixel_band))
        throw ValidationError("background photons must lie in (0, photons per pixel-band)");
    if (!(d_min >= 0)) throw ValidationError("d_min must be non-negative");
}

ImpulseResponse make_irf(const IrfSpec& spec, std::size_t bands) {
    if (spec.sigmas.size() != bands) throw ValidationError("one impulse response width per band is required");
    if (spec.shape == IrfSpec::Shape::gaussian) return ImpulseResponse::truncated_gaussian(spec.sigmas, spec.half_width);
    if (spec.taus.size() != bands) throw ValidationError("one exponential tail per band is required");
    return ImpulseResponse::exp_modified_gaussian(spec.sigmas, spec.taus, spec.half_width, spec.right);
}

SceneSpec desk_scene_spec() {
    SceneSpec s;
    s.dims = {64, 64, 4, 300};
    SurfaceSpec wall;
    wall.depth = 210.0;
    wall.slope_col = 0.3;
    wall.reflectivity = {0.7, 0.55, 0.4, 0.3};
    wall.texture = 0.3;
    wall.texture_period = 9.0;
    SurfaceSpec steps;
    steps.kind = SurfaceSpec::Kind::steps;
    steps.row0 = 12;
    steps.row1 = 52;
    steps.col0 = 6;
    steps.col1 = 42;
    steps.depth = 130.0;
    steps.slope_row = 0.2;
    steps.steps = 3;
    steps.step_depth = 15.0;
    steps.reflectivity = {0.25, 0.5, 0.75, 0.6};
    steps.texture = 0.2;
    steps.texture_period = 6.0;
    SurfaceSpec glass;
    glass.col0 = 32;
    glass.depth = 70.0;
    glass.slope_row = 0.1;
    glass.reflectivity = {0.6, 0.6, 0.6, 0.6};
    glass.opacity = 0.4;
    s.surfaces = {wall, steps, glass};
    s.irf.sigmas = {1.2, 1.4, 1.6, 1.8};
    s.irf.half_width = 5;
    return s;
}

namespace {

struct Hit {
    double t;
    std::vector<double> r;
    double opacity;
};

bool covers(const SurfaceSpec& s, long i, long j, const CubeDims& d) {
    long r1 = s.row1 < 0 ? long(d.rows) : s.row1, c1 = s.col1 < 0 ? long(d.cols) : s.col1;
    return i >= s.row0 && i < r1 && j >= s.col0 && j < c1;
}

Hit surface_hit(const SurfaceSpec& s, long i, long j, const CubeDims& d) {
    long c1 = s.col1 < 0 ? long(d.cols) : s.col1;
    double t = s.depth + s.slope_row * double(i - s.row0) + s.slope_col * double(j - s.col0);
    if (s.kind == SurfaceSpec::Kind::steps) {
        double width = double(c1 - s.col0) / double(s.steps);
        auto k = std::min<std::size_t>(s.steps - 1, std::size_t(double(j - s.col0) / width));
        t += double(k) * s.step_depth;
    }
    double tex = 1.0 + s.texture * std::sin(2.0 * std::numbers::pi * double(i) / s.texture_period) *
                           std::cos(2.0 * std::numbers::pi * double(j) / (1.3 * s.texture_period));
    Hit h{t, s.reflectivity, s.opacity};
    for (double& r : h.r) r *= tex;
    return h;
}

} // namespace

double expected_photons(const PointCloud& cloud, const BackgroundField& bg, const ImpulseResponse& irf,
                        std::size_t bins, std::size_t i, std::size_t j, std::size_t l) {
    double e = bg(i, j, l) * double(bins);
    for (PointId q : cloud.at_pixel(i, j)) e += std::exp(cloud[q].m[l]) * irf.window_sum(l, cloud[q].t, bins);
    return e;
}

Scene make_scene(const SceneSpec& spec) {
    spec.validate();
    const auto& d = spec.dims;
    const std::size_t L = d.bands;
    Scene sc;
    sc.dims = d;
    sc.irf = make_irf(spec.irf, L);

    std::vector<Point> pts;
    Field3 passive(d.rows, d.cols, L, 0.0);
    std::vector<Hit> hits;
    for (long i = 0; i < long(d.rows); ++i)
        for (long j = 0; j < long(d.cols); ++j) {
            hits.clear();
            for (const auto& s : spec.surfaces)
                if (covers(s, i, j, d)) hits.push_back(surface_hit(s, i, j, d));
            std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.t < b.t; });
            double transmit = 1.0;
            bool front = true;
            for (const auto& h : hits) {
                if (h.t < 1.0 || h.t > double(d.bins)) throw ValidationError("surface depth outside [1, T]");
                Point p{std::uint32_t(i), std::uint32_t(j), h.t, std::vector<double>(L)};
                double total = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    double r = transmit * h.opacity * h.r[l];
                    total += r;
                    p.m[l] = std::log(std::max(r, 1e-12));
                    if (front) passive(std::size_t(i), std::size_t(j), l) += h.r[l];
                }
                front = false;
                if (total > 0) pts.push_back(std::move(p));
                transmit *= 1.0 - h.opacity;
                if (transmit <= 0.0) break;
            }
        }
    sc.truth = PointCloud::from_points(d.rows, d.cols, L, pts);
    if (!strauss_valid(sc.truth, spec.d_min)) throw ValidationError("ground truth violates the hard-core distance");

    sc.background = BackgroundField(d.rows, d.cols, L, 1.0);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < L; ++l) {
                double level = spec.background_levels.empty() ? 1.0 : spec.background_levels[l];
                if (spec.background_mode == SceneSpec::BackgroundMode::passive) {
                    // smooth illumination falloff times the reflectance seen by a passive camera
                    double u = double(i) / double(std::max<std::size_t>(1, d.rows - 1)) - 0.5;
                    double v = double(j) / double(std::max<std::size_t>(1, d.cols - 1)) - 0.5;
                    double light = 1.0 - 0.6 * (u * u + v * v);
                    level *= light * (0.1 + passive(i, j, l));
                }
                sc.background(i, j, l) = level;
            }

    if (spec.photons_per_pixel_band > 0) {
        const double n = double(d.pixels() * L);
        double sig = 0.0, bgp = 0.0;
        for (PointId q : sc.truth.ids()) {
            const Point& p = sc.truth[q];
            for (std::size_t l = 0; l < L; ++l) sig += std::exp(p.m[l]) * sc.irf.window_sum(l, p.t, d.bins);
        }
        for (double b : sc.background.values()) bgp += b * double(d.bins);
        if (!(sig > 0)) throw ValidationError("scene has no signal to scale");
        double ks = (spec.photons_per_pixel_band - spec.background_photons) * n / sig;
        double kb = spec.background_photons * n / bgp;
        std::vector<Point> scaled = sc.truth.points();
        for (auto& p : scaled)
            for (double& m : p.m) m += std::log(ks);
        sc.truth = PointCloud::from_points(d.rows, d.cols, L, scaled);
        for (double& b : sc.background.values()) b *= kb;
    }
    return sc;
}

LidarCube render_cube(const PointCloud& cloud, const BackgroundField& bg, const ImpulseResponse& irf,
                      const SamplingMask& mask, std::size_t bins, std::uint64_t seed) {
    CubeDims d{cloud.rows(), cloud.cols(), cloud.bands(), bins};
    d.validate();
    if (mask.rows() != d.rows || mask.cols() != d.cols || mask.bands() != d.bands || !bg.same_shape(
            BackgroundField(d.rows, d.cols, d.bands)) || irf.bands() != d.bands)
        throw ValidationError("render inputs do not share dimensions");
    LidarCube cube(d);
    std::vector<double> w(bins);
    std::vector<std::uint32_t> hist(bins);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j) {
            Rng rng = make_rng(seed, i * d.cols + j);
            for (std::size_t l = 0; l < d.bands; ++l) {
                if (!mask(i, j, l)) continue;
                std::fill(hist.begin(), hist.end(), 0u);
                double b = bg(i, j, l);
                if (b > 0) {
                    auto n = std::poisson_distribution<std::uint64_t>(b * double(bins))(rng);
                    std::uniform_int_distribution<std::size_t> pick(0, bins - 1);
                    for (std::uint64_t k = 0; k < n; ++k) ++hist[pick(rng)];
                }
                for (PointId q : cloud.at_pixel(i, j)) {
                    const Point& p = cloud[q];
                    double total = 0.0;
                    for (std::size_t t = 0; t < bins; ++t) {
                        w[t] = irf(l, double(t + 1) - p.t);
                        total += w[t];
                    }
                    double r = std::exp(p.m[l]);
                    if (!(total > 0) || !(r > 0)) continue;
                    auto n = std::poisson_distribution<std::uint64_t>(r * total)(rng);
                    if (n == 0) continue;
                    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
                    for (std::uint64_t k = 0; k < n; ++k) ++hist[pick(rng)];
                }
                cube.set_dense(i, j, l, hist);
            }
        }
    return cube;
}

} // namespace msl
