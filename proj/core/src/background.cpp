#include "msl/background.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "msl/errors.hpp"

namespace msl {

namespace {

double draw_gamma(Rng& rng, double shape, double scale) {
    double v = std::gamma_distribution<double>(shape, scale)(rng);
    return std::max(v, kBackgroundFloor);
}

} // namespace

double gibbs_background_draw(const LidarCube& cube, const PointCloud& cloud, double b, double k, double theta,
                             bool g, const ImpulseResponse& irf, std::size_t i, std::size_t j, std::size_t l,
                             Rng& rng) {
    if (!g) return draw_gamma(rng, k, theta);
    const auto px = cloud.at_pixel(i, j);
    std::uint64_t n = 0;
    for (const auto& e : cube.histogram(i, j, l)) {
        if (px.empty()) {
            n += e.count;
            continue;
        }
        double sig = 0.0;
        for (PointId q : px) sig += std::exp(cloud[q].m[l]) * irf(l, double(e.bin) - cloud[q].t);
        double p = b / (sig + b);
        if (p >= 1.0)
            n += e.count;
        else if (p > 0.0)
            n += std::binomial_distribution<std::uint32_t>(e.count, p)(rng);
    }
    double T = double(cube.dims().bins);
    return draw_gamma(rng, k + double(n), theta / (T * theta + 1.0));
}

void gibbs_background_step(const LidarCube& cube, const PointCloud& cloud, BackgroundField& bg,
                           const GammaHyper& prior, const SamplingMask& mask, const ImpulseResponse& irf, Rng& rng) {
    const auto& d = cube.dims();
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l) {
                std::size_t f = bg.index(i, j, l);
                bg.at(f) = gibbs_background_draw(cube, cloud, bg.at(f), prior.shape.at(f), prior.scale.at(f),
                                                 mask(i, j, l), irf, i, j, l, rng);
            }
}

StrippedCounts strip_signal_photons(const LidarCube& cube, const PointCloud& cloud, const ImpulseResponse& irf,
                                    const SamplingMask& mask) {
    const auto& d = cube.dims();
    StrippedCounts out{Field3(d.rows, d.cols, d.bands), Field3(d.rows, d.cols, d.bands), 0};
    std::vector<std::uint8_t> excluded(d.bins + 1);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l) {
                std::fill(excluded.begin(), excluded.end(), 0);
                std::size_t kept = d.bins;
                for (PointId q : cloud.at_pixel(i, j)) {
                    double lo = cloud[q].t + irf.first_offset(l) - 1.0;
                    double hi = cloud[q].t + irf.last_offset(l) + 1.0;
                    long t0 = std::max<long>(1, long(std::floor(lo)) + 1);
                    long t1 = std::min<long>(long(d.bins), long(std::ceil(hi)) - 1);
                    for (long t = t0; t <= t1; ++t)
                        if (!excluded[t]) {
                            excluded[t] = 1;
                            --kept;
                        }
                }
                double z = 0.0;
                if (mask(i, j, l))
                    for (const auto& e : cube.histogram(i, j, l))
                        if (!excluded[e.bin]) z += e.count;
                out.counts(i, j, l) = z;
                out.bins(i, j, l) = double(kept);
                if (kept == 0) ++out.fully_covered;
            }
    return out;
}

void EmpiricalBayesConfig::validate() const {
    if (!(alpha > 0)) throw ValidationError("empirical Bayes alpha must be positive");
    if (samples == 0) throw ValidationError("empirical Bayes needs at least one sample");
    if (!(ridge > 0)) throw ValidationError("ridge must be positive");
}

std::vector<double> band_centring(const StrippedCounts& stripped, const SamplingMask& mask) {
    const Field3& z = stripped.counts;
    std::vector<double> mu(z.bands(), -std::numeric_limits<double>::infinity());
    for (std::size_t l = 0; l < z.bands(); ++l) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j)
                if (mask(i, j, l) && stripped.bins(i, j, l) > 0) {
                    s += z(i, j, l) / stripped.bins(i, j, l);
                    ++n;
                }
        if (n > 0 && s > 0) mu[l] = std::log(s / double(n));
    }
    return mu;
}

LatentBackground sample_latent_background(const StrippedCounts& stripped, const EmpiricalBayesConfig& cfg,
                                          const SamplingMask& mask, Rng& rng) {
    cfg.validate();
    const std::size_t R = stripped.counts.rows(), C = stripped.counts.cols(), L = stripped.counts.bands();
    LatentBackground out{Field3(R, C, L), Field3(R, C, L), band_centring(stripped, mask), std::vector<double>(L)};
    const bool lap = cfg.op == SmoothingOperator::laplacian;
    std::vector<double> x(R * C), z(R * C), c(R * C), a(R * C), acc_b(R * C), acc_lb(R * C);
    std::normal_distribution<double> normal(0.0, 1.0);

    for (std::size_t l = 0; l < L; ++l) {
        double mu = out.mu[l];
        bool prior_only = !std::isfinite(mu);
        if (prior_only) {
            // no background photons anywhere in this band: half a photon over all observed bins
            double v = 0.0;
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j)
                    if (mask(i, j, l)) v += stripped.bins(i, j, l);
            mu = std::log(0.5 / std::max(v, 1.0));
            out.mu[l] = mu;
        }
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                std::size_t p = i * C + j;
                bool obs = mask(i, j, l) && !prior_only;
                z[p] = obs ? stripped.counts(i, j, l) : 0.0;
                c[p] = obs ? stripped.bins(i, j, l) * std::exp(mu) : 0.0;
                double deg = 0.0;
                if (lap) deg = double((i > 0) + (i + 1 < R) + (j > 0) + (j + 1 < C)) + cfg.ridge;
                a[p] = (lap ? deg : 1.0) / cfg.alpha;
                x[p] = 0.0;
                acc_b[p] = acc_lb[p] = 0.0;
            }
        std::size_t accepted = 0, proposed = 0;
        const std::size_t sweeps = cfg.burn_in + cfg.samples;
        for (std::size_t s = 0; s < sweeps; ++s) {
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) {
                    std::size_t p = i * C + j;
                    double lin = 0.0;
                    if (lap) {
                        if (i > 0) lin -= x[p - C];
                        if (i + 1 < R) lin -= x[p + C];
                        if (j > 0) lin -= x[p - 1];
                        if (j + 1 < C) lin -= x[p + 1];
                        lin /= cfg.alpha;
                    }
                    const double zz = z[p], cc = c[p], aa = a[p];
                    auto logf = [&](double v) { return zz * v - cc * std::exp(v) - 0.5 * aa * v * v - lin * v; };
                    double mode = x[p];
                    for (int it = 0; it < 60; ++it) {
                        double ex = cc * std::exp(mode);
                        double g1 = zz - ex - aa * mode - lin;
                        double step = g1 / (ex + aa);
                        step = std::min(step, 5.0);
                        mode += step;
                        if (std::abs(step) < 1e-10) break;
                    }
                    double prec = cc * std::exp(mode) + aa;
                    double sd = 1.0 / std::sqrt(prec);
                    double prop = mode + sd * normal(rng);
                    double lr = logf(prop) - logf(x[p]) + 0.5 * prec * ((prop - mode) * (prop - mode) -
                                                                        (x[p] - mode) * (x[p] - mode));
                    ++proposed;
                    if (lr >= 0.0 || std::log(uniform_open(rng)) < lr) {
                        x[p] = prop;
                        ++accepted;
                    }
                }
            if (s >= cfg.burn_in)
                for (std::size_t p = 0; p < R * C; ++p) {
                    acc_b[p] += std::exp(x[p] + mu);
                    acc_lb[p] += x[p] + mu;
                }
        }
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                std::size_t p = i * C + j;
                out.mean_b(i, j, l) = acc_b[p] / double(cfg.samples);
                out.mean_log_b(i, j, l) = acc_lb[p] / double(cfg.samples);
            }
        out.acceptance[l] = proposed ? double(accepted) / double(proposed) : 0.0;
    }
    return out;
}

namespace {

// solves log k - digamma(k) = delta
double solve_joint_shape(double delta, bool& capped) {
    using boost::math::digamma;
    using boost::math::trigamma;
    auto F = [&](double k) { return std::log(k) - digamma(k) - delta; };
    if (F(kShapeCeiling) > 0) {
        capped = true;
        return kShapeCeiling;
    }
    double lo = 1e-12, hi = kShapeCeiling;
    double k = (3.0 - delta + std::sqrt((delta - 3.0) * (delta - 3.0) + 24.0 * delta)) / (12.0 * delta);
    k = std::clamp(k, lo, hi);
    for (int it = 0; it < 200; ++it) {
        double f = F(k);
        if (f > 0) lo = k; else hi = k;
        double fp = 1.0 / k - trigamma(k);
        double next = k - f / fp;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - k) <= 1e-15 * k) return next;
        k = next;
    }
    return k;
}

// solves digamma(k) = -delta
double solve_fixed_scale_shape(double delta, bool& capped) {
    using boost::math::digamma;
    using boost::math::trigamma;
    double y = -delta;
    if (digamma(kShapeCeiling) < y) {
        capped = true;
        return kShapeCeiling;
    }
    double lo = 1e-300, hi = kShapeCeiling;
    double k = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + 0.5772156649015329);
    k = std::clamp(k, 1e-12, hi);
    for (int it = 0; it < 200; ++it) {
        double f = digamma(k) - y;
        if (f < 0) lo = k; else hi = k;
        double next = k - f / trigamma(k);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - k) <= 1e-15 * k) return next;
        k = next;
    }
    return k;
}

} // namespace

GammaFit fit_gamma_hyper(double mean_b, double mean_log_b, GammaFitRule rule) {
    if (!(mean_b > 0) || !std::isfinite(mean_b) || !std::isfinite(mean_log_b))
        throw ValidationError("gamma fit needs a positive finite mean");
    double delta = std::log(mean_b) - mean_log_b;
    if (delta < -1e-12 * std::max(1.0, std::abs(mean_log_b)))
        throw ValidationError("mean of log exceeds log of mean");
    GammaFit fit;
    if (delta <= 0.0) {
        fit.capped = true;
        fit.k = kShapeCeiling;
    } else if (rule == GammaFitRule::joint) {
        fit.k = solve_joint_shape(delta, fit.capped);
    } else {
        fit.k = solve_fixed_scale_shape(delta, fit.capped);
    }
    fit.theta = rule == GammaFitRule::joint ? mean_b / fit.k : mean_b;
    return fit;
}

GammaFit non_informative_gamma() { return GammaFit{0.01, 100.0, false}; }

GammaHyper fit_gamma_field(const LatentBackground& latent, GammaFitRule rule, std::size_t* capped_out) {
    const Field3& mb = latent.mean_b;
    GammaHyper h{Field3(mb.rows(), mb.cols(), mb.bands()), Field3(mb.rows(), mb.cols(), mb.bands())};
    std::size_t capped = 0;
    for (std::size_t f = 0; f < mb.size(); ++f) {
        // Monte Carlo averages can break Jensen by rounding when the spread is tiny
        double mlog = std::min(latent.mean_log_b.at(f), std::log(mb.at(f)));
        GammaFit g = fit_gamma_hyper(mb.at(f), mlog, rule);
        h.shape.at(f) = g.k;
        h.scale.at(f) = g.theta;
        capped += g.capped;
    }
    if (capped_out) *capped_out = capped;
    return h;
}

std::vector<double> estimate_sbr(const LidarCube& cube, const PointCloud& cloud, const BackgroundField& bg,
                                 const ImpulseResponse& irf, const SamplingMask& mask, SbrLimits limits) {
    (void)mask;
    const auto& d = cube.dims();
    std::vector<double> signal(d.bands, 0.0), back(d.bands, 0.0), w(d.bands);
    for (PointId q : cloud.ids())
        for (std::size_t l = 0; l < d.bands; ++l) signal[l] += std::exp(cloud[q].m[l]) * irf.sum(l);
    for (std::size_t f = 0; f < bg.size(); ++f) back[f % d.bands] += bg.at(f) * double(d.bins);
    for (std::size_t l = 0; l < d.bands; ++l) {
        double r = back[l] > 0 ? signal[l] / back[l] : std::numeric_limits<double>::infinity();
        w[l] = std::clamp(r, limits.min, limits.max);
    }
    return w;
}

double gamma_mrf_marginal_logdensity(const BackgroundField& bg, double alpha) {
    const long R = long(bg.rows()), C = long(bg.cols());
    double s = 0.0;
    for (std::size_t l = 0; l < bg.bands(); ++l)
        for (long i = 0; i < R; ++i)
            for (long j = 0; j < C; ++j) {
                double nb = 0.0;
                for (long a = std::max(0L, i - 1); a <= std::min(R - 1, i + 1); ++a)
                    for (long b = std::max(0L, j - 1); b <= std::min(C - 1, j + 1); ++b) nb += bg(a, b, l);
                s += (alpha - 1.0) * std::log(bg(i, j, l)) - alpha * std::log(nb);
            }
    return s;
}

} // namespace msl
