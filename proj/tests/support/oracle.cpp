#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <tuple>

#include "msl/simulator.hpp"

namespace oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_pdf(double u, double a, double b) {
    return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * std::log(u) + (b - 1) * std::log(1 - u);
}

double log_normal_pdf(double x, double mean, double var) {
    return -0.5 * std::log(2 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2 * var);
}

double p(const Scene& s, msl::MoveKind k) { return std::log(s.moves.probability(k)); }

std::vector<Point> without(const std::vector<Point>& pts, std::size_t idx) {
    std::vector<Point> out;
    for (std::size_t k = 0; k < pts.size(); ++k)
        if (k != idx) out.push_back(pts[k]);
    return out;
}

double expected_scale(const Scene& s, std::size_t l) {
    return irf_sum(s.irf, l) / (s.sbr[l] * double(s.dims.bins));
}

} // namespace

double irf_value(const msl::ImpulseResponse& irf, std::size_t l, double offset) {
    const auto& b = irf.band(l);
    double v = 0.0;
    for (std::size_t k = 0; k < b.samples.size(); ++k) {
        double hat = 1.0 - std::abs(offset - double(b.first_offset + int(k)));
        if (hat > 0) v += hat * b.samples[k];
    }
    return v;
}

double irf_sum(const msl::ImpulseResponse& irf, std::size_t l) {
    double s = 0.0;
    for (double v : irf.band(l).samples) s += v;
    return s;
}

int irf_length(const msl::ImpulseResponse& irf) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < irf.bands(); ++l) n = std::max(n, irf.band(l).samples.size());
    return int(n);
}

double dense_loglik(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg) {
    const auto& d = s.dims;
    double total = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l) {
                if (!s.mask(i, j, l)) continue;
                auto z = s.cube.dense(i, j, l);
                for (std::size_t t = 1; t <= d.bins; ++t) {
                    double lam = bg(i, j, l);
                    for (const auto& q : pts)
                        if (q.x == i && q.y == j) lam += std::exp(q.m[l]) * irf_value(s.irf, l, double(t) - q.t);
                    if (z[t - 1] > 0) {
                        if (!(lam > 0)) return kNegInf;
                        total += double(z[t - 1]) * std::log(lam);
                    }
                    total -= lam;
                }
            }
    return total;
}

bool adjacent(const Point& a, const Point& b) {
    long dx = long(a.x) - long(b.x), dy = long(a.y) - long(b.y);
    return std::max(std::abs(dx), std::abs(dy)) == 1;
}

bool linked(const Scene& s, const Point& a, const Point& b) {
    return adjacent(a, b) && std::abs(a.t - b.t) <= double(s.hyper.n_b);
}

double dense_gmrf(const Scene& s, const std::vector<Point>& pts) {
    const std::size_t n = pts.size();
    if (n == 0) return 0.0;
    const auto& h = s.hyper;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(long(n), long(n));
    for (std::size_t a = 0; a < n; ++a) {
        P(long(a), long(a)) += h.beta;
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b || !linked(s, pts[a], pts[b])) continue;
            double dx = (double(pts[a].x) - double(pts[b].x)) * h.pixel_pitch;
            double dy = (double(pts[a].y) - double(pts[b].y)) * h.pixel_pitch;
            double dt = (pts[a].t - pts[b].t) * h.bin_pitch;
            double w = 1.0 / std::sqrt(dx * dx + dy * dy + dt * dt);
            P(long(a), long(b)) -= w;
            P(long(a), long(a)) += w;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(P / h.sigma2);
    double logdet = 0.0;
    for (long k = 0; k < long(n); ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    double total = 0.0;
    for (std::size_t l = 0; l < s.dims.bands; ++l) {
        Eigen::VectorXd m(static_cast<Eigen::Index>(n));
        for (std::size_t a = 0; a < n; ++a) m(long(a)) = pts[a].m[l];
        total += -0.5 * double(n) * std::log(2 * std::numbers::pi) + 0.5 * logdet - 0.5 * m.dot(P * m) / h.sigma2;
    }
    return total;
}

std::size_t voxel_area(const Scene& s, const std::vector<Point>& pts) {
    std::set<std::tuple<long, long, long>> vox;
    const auto& d = s.dims;
    for (const auto& q : pts) {
        long tc = std::lround(q.t);
        for (long x = long(q.x) - 1; x <= long(q.x) + 1; ++x)
            for (long y = long(q.y) - 1; y <= long(q.y) + 1; ++y)
                for (long t = tc - s.hyper.n_b; t <= tc + s.hyper.n_b; ++t)
                    if (x >= 0 && y >= 0 && x < long(d.rows) && y < long(d.cols) && t >= 1 && t <= long(d.bins))
                        vox.emplace(x, y, t);
    }
    return vox.size();
}

double dense_bg_prior(const Scene& s, const msl::BackgroundField& bg) {
    double total = 0.0;
    for (std::size_t f = 0; f < bg.size(); ++f) {
        double k = s.prior.shape.at(f), th = s.prior.scale.at(f), b = bg.at(f);
        total += (k - 1) * std::log(b) - b / th - std::lgamma(k) - k * std::log(th);
    }
    return total;
}

bool hard_core_ok(const Scene& s, const std::vector<Point>& pts) {
    for (std::size_t a = 0; a < pts.size(); ++a) {
        if (!(pts[a].t >= 1.0 && pts[a].t <= double(s.dims.bins))) return false;
        for (std::size_t b = a + 1; b < pts.size(); ++b)
            if (pts[a].x == pts[b].x && pts[a].y == pts[b].y && std::abs(pts[a].t - pts[b].t) < s.hyper.d_min)
                return false;
    }
    return true;
}

double dense_log_posterior(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg) {
    if (!hard_core_ok(s, pts)) return kNegInf;
    for (double b : bg.values())
        if (!(b > 0) || !std::isfinite(b)) return kNegInf;
    for (const auto& q : pts)
        for (double m : q.m)
            if (!std::isfinite(m)) return kNegInf;
    double area = double(pts.size()) * std::log(s.hyper.lambda_a) -
                  s.hyper.voxel_measure * double(voxel_area(s, pts)) * std::log(s.hyper.gamma_a);
    return dense_loglik(s, pts, bg) + dense_gmrf(s, pts) + area + dense_bg_prior(s, bg);
}

double volume(const Scene& s) { return double(s.dims.rows * s.dims.cols) * double(s.dims.bins - 1); }

double lebesgue_log_posterior(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg) {
    return dense_log_posterior(s, pts, bg) - double(pts.size()) * std::log(volume(s));
}

std::size_t connected_count(const Scene& s, const std::vector<Point>& pts) {
    std::size_t c = 0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        bool any = false;
        for (std::size_t b = 0; b < pts.size(); ++b)
            if (a != b && linked(s, pts[a], pts[b])) any = true;
        c += any;
    }
    return c;
}

std::size_t merge_pair_count(const Scene& s, const std::vector<Point>& pts) {
    std::size_t c = 0;
    double lh = irf_length(s.irf);
    for (std::size_t a = 0; a < pts.size(); ++a)
        for (std::size_t b = a + 1; b < pts.size(); ++b) {
            double dt = std::abs(pts[a].t - pts[b].t);
            if (pts[a].x == pts[b].x && pts[a].y == pts[b].y && dt > s.hyper.d_min && dt <= lh) ++c;
        }
    return c;
}

double admissible_measure(const Scene& s, const std::vector<Point>& pts, const Point& donor) {
    const double lo = std::max(1.0, donor.t - s.hyper.n_b), hi = std::min(double(s.dims.bins), donor.t + s.hyper.n_b);
    if (!(hi > lo)) return 0.0;
    double total = 0.0;
    for (long dx = -1; dx <= 1; ++dx)
        for (long dy = -1; dy <= 1; ++dy) {
            if (!dx && !dy) continue;
            long x = long(donor.x) + dx, y = long(donor.y) + dy;
            if (x < 0 || y < 0 || x >= long(s.dims.rows) || y >= long(s.dims.cols)) continue;
            std::vector<double> occupied, cuts{lo, hi};
            for (const auto& q : pts)
                if (long(q.x) == x && long(q.y) == y) {
                    occupied.push_back(q.t);
                    for (double c : {q.t - s.hyper.d_min, q.t + s.hyper.d_min})
                        if (c > lo && c < hi) cuts.push_back(c);
                }
            std::sort(cuts.begin(), cuts.end());
            for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
                double mid = 0.5 * (cuts[k] + cuts[k + 1]);
                bool ok = true;
                for (double t : occupied)
                    if (std::abs(mid - t) < s.hyper.d_min) ok = false;
                if (ok) total += cuts[k + 1] - cuts[k];
            }
        }
    return total;
}

double numeric_log_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& steps) {
    const long n = x.size();
    Eigen::MatrixXd J(f(x).size(), n);
    for (long i = 0; i < n; ++i) {
        double h = steps(i);
        Eigen::VectorXd a = x, b = x, c = x, d = x;
        a(i) += 2 * h;
        b(i) += h;
        c(i) -= h;
        d(i) -= 2 * h;
        J.col(i) = (-f(a) + 8 * f(b) - 8 * f(c) + f(d)) / (12 * h);
    }
    return std::log(std::abs(J.fullPivLu().determinant()));
}

namespace {

// per-band map (b, u) -> (u b, log(w (1 - u) b T / S)) shared by birth and dilation
std::pair<std::vector<double>, Point> birth_map(const Scene& s, const msl::BackgroundField& bg, std::uint32_t x,
                                                std::uint32_t y, double t, const std::vector<double>& u,
                                                msl::BackgroundField& bg_after, double& log_jac) {
    const std::size_t L = s.dims.bands;
    Point np{x, y, t, std::vector<double>(L)};
    bg_after = bg;
    std::vector<double> b(L);
    for (std::size_t l = 0; l < L; ++l) {
        b[l] = bg(x, y, l);
        bg_after(x, y, l) = u[l] * b[l];
        np.m[l] = std::log((1 - u[l]) * b[l] / expected_scale(s, l));
    }
    Eigen::VectorXd v(long(2 * L)), st(long(2 * L));
    for (std::size_t l = 0; l < L; ++l) {
        v(long(l)) = b[l];
        v(long(L + l)) = u[l];
        st(long(l)) = 1e-4 * b[l];
        st(long(L + l)) = 1e-4 * std::min(u[l], 1 - u[l]);
    }
    auto f = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd o(long(2 * L));
        for (std::size_t l = 0; l < L; ++l) {
            o(long(l)) = z(long(L + l)) * z(long(l));
            o(long(L + l)) = std::log((1 - z(long(L + l))) * z(long(l)) / expected_scale(s, l));
        }
        return o;
    };
    log_jac = numeric_log_jacobian(f, v, st);
    return {b, np};
}

} // namespace

double birth_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg,
                   const msl::BirthAux& a) {
    msl::BackgroundField bg2;
    double jac = 0.0;
    auto [b, np] = birth_map(s, bg, a.x, a.y, a.t, a.u, bg2, jac);
    auto after = pts;
    after.push_back(np);
    double lp1 = lebesgue_log_posterior(s, after, bg2);
    if (lp1 == kNegInf) return kNegInf;
    double q_fwd = p(s, msl::MoveKind::birth) - std::log(volume(s));
    double q_rev = p(s, msl::MoveKind::death) - std::log(double(pts.size() + 1));
    return lp1 - lebesgue_log_posterior(s, pts, bg) + q_rev - q_fwd + jac;
}

namespace {

// state before the birth that created pts[idx], and that birth's auxiliary variables
std::pair<std::vector<Point>, msl::BackgroundField> unbirth(const Scene& s, const std::vector<Point>& pts,
                                                             const msl::BackgroundField& bg, std::size_t idx,
                                                             std::vector<double>& u) {
    const Point& q = pts[idx];
    auto bg0 = bg;
    u.assign(s.dims.bands, 0.0);
    for (std::size_t l = 0; l < s.dims.bands; ++l) {
        double b0 = bg(q.x, q.y, l) + std::exp(q.m[l]) * expected_scale(s, l);
        bg0(q.x, q.y, l) = b0;
        u[l] = bg(q.x, q.y, l) / b0;
    }
    return {without(pts, idx), bg0};
}

} // namespace

double death_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t idx) {
    std::vector<double> u;
    auto [p0, bg0] = unbirth(s, pts, bg, idx, u);
    return -birth_ratio(s, p0, bg0, msl::BirthAux{pts[idx].x, pts[idx].y, pts[idx].t, u});
}

double dilation_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg,
                      const msl::DilationAux& a) {
    if (pts.empty()) return kNegInf;
    Point cand{a.x, a.y, a.t, {}};
    double q = 0.0;
    for (const auto& d : pts)
        if (linked(s, cand, d)) q += 1.0 / (double(pts.size()) * admissible_measure(s, pts, d));
    if (!(q > 0) || !hard_core_ok(s, [&] {
            auto v = pts;
            v.push_back(cand);
            for (auto& w : v) w.m.assign(s.dims.bands, 0.0);
            return v;
        }()))
        return kNegInf;
    msl::BackgroundField bg2;
    double jac = 0.0;
    auto [b, np] = birth_map(s, bg, a.x, a.y, a.t, a.u, bg2, jac);
    auto after = pts;
    after.push_back(np);
    double lp1 = lebesgue_log_posterior(s, after, bg2);
    if (lp1 == kNegInf) return kNegInf;
    double q_fwd = p(s, msl::MoveKind::dilation) + std::log(q);
    double q_rev = p(s, msl::MoveKind::erosion) - std::log(double(connected_count(s, after)));
    return lp1 - lebesgue_log_posterior(s, pts, bg) + q_rev - q_fwd + jac;
}

double erosion_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t idx) {
    std::vector<double> u;
    auto [p0, bg0] = unbirth(s, pts, bg, idx, u);
    return -dilation_ratio(s, p0, bg0, msl::DilationAux{pts[idx].x, pts[idx].y, pts[idx].t, u});
}

double shift_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t idx,
                   double t_new) {
    auto after = pts;
    after[idx].t = t_new;
    double lp1 = lebesgue_log_posterior(s, after, bg);
    if (lp1 == kNegInf) return kNegInf;
    const double v = s.scales.shift_variance, t = pts[idx].t;
    double q = log_normal_pdf(t, t_new, v) - log_normal_pdf(t_new, t, v);
    Eigen::Vector2d x(t, t_new - t), st(1e-4, 1e-4);
    double jac = numeric_log_jacobian(
        [](const Eigen::VectorXd& z) {
            Eigen::VectorXd o(2);
            o << z(0) + z(1), -z(1);
            return o;
        },
        x, st);
    return lp1 - lebesgue_log_posterior(s, pts, bg) + q + jac;
}

double mark_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t idx,
                  std::size_t band, double m_new) {
    auto after = pts;
    auto bg2 = bg;
    const Point& q = pts[idx];
    const double k = expected_scale(s, band);
    bg2(q.x, q.y, band) = bg(q.x, q.y, band) + (std::exp(q.m[band]) - std::exp(m_new)) * k;
    after[idx].m[band] = m_new;
    double lp1 = lebesgue_log_posterior(s, after, bg2);
    if (lp1 == kNegInf) return kNegInf;
    const double v = s.scales.mark_variance;
    double qr = log_normal_pdf(q.m[band], m_new, v) - log_normal_pdf(m_new, q.m[band], v);
    Eigen::Vector3d x(q.m[band], bg(q.x, q.y, band), m_new - q.m[band]);
    Eigen::Vector3d st(1e-4, 1e-4 * x(1), 1e-4);
    double jac = numeric_log_jacobian(
        [k](const Eigen::VectorXd& z) {
            Eigen::VectorXd o(3);
            o << z(0) + z(2), z(1) + (std::exp(z(0)) - std::exp(z(0) + z(2))) * k, -z(2);
            return o;
        },
        x, st);
    return lp1 - lebesgue_log_posterior(s, pts, bg) + qr + jac;
}

namespace {

// (t, m, u, delta) -> (t1, t2, m1, m2)
Eigen::VectorXd split_map(const Eigen::VectorXd& z, std::size_t L, bool flip) {
    double t = z(0), R = 0, A = 0, B = 0;
    for (std::size_t l = 0; l < L; ++l) {
        double r = std::exp(z(long(1 + l))), u = z(long(1 + L + l));
        R += r;
        A += u * r;
        B += (1 - u) * r;
    }
    double delta = z(long(1 + 2 * L)), sg = flip ? -1.0 : 1.0;
    Eigen::VectorXd o(long(2 + 2 * L));
    o(0) = t + sg * delta * B / R;
    o(1) = t - sg * delta * A / R;
    for (std::size_t l = 0; l < L; ++l) {
        double m = z(long(1 + l)), u = z(long(1 + L + l));
        o(long(2 + l)) = m + std::log(u);
        o(long(2 + L + l)) = m + std::log(1 - u);
    }
    return o;
}

} // namespace

double split_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t idx,
                   const std::vector<double>& u, double delta, bool flip) {
    const std::size_t L = s.dims.bands;
    const double lh = irf_length(s.irf), dmin = s.hyper.d_min;
    if (!(lh > dmin) || !(delta > dmin && delta < lh)) return kNegInf;
    const Point& q = pts[idx];
    auto pack = [&](const std::vector<double>& uu) {
        Eigen::VectorXd z(long(2 + 2 * L));
        z(0) = q.t;
        for (std::size_t l = 0; l < L; ++l) {
            z(long(1 + l)) = q.m[l];
            z(long(1 + L + l)) = uu[l];
        }
        z(long(1 + 2 * L)) = delta;
        return z;
    };
    auto steps = [&](const std::vector<double>& uu) {
        Eigen::VectorXd st(long(2 + 2 * L));
        st(0) = 1e-4;
        for (std::size_t l = 0; l < L; ++l) {
            st(long(1 + l)) = 1e-4;
            st(long(1 + L + l)) = 1e-4 * std::min(uu[l], 1 - uu[l]);
        }
        st(long(1 + 2 * L)) = 1e-4;
        return st;
    };
    Eigen::VectorXd out = split_map(pack(u), L, flip);
    Point k1{q.x, q.y, out(0), std::vector<double>(L)}, k2{q.x, q.y, out(1), std::vector<double>(L)};
    for (std::size_t l = 0; l < L; ++l) {
        k1.m[l] = out(long(2 + l));
        k2.m[l] = out(long(2 + L + l));
    }
    auto after = without(pts, idx);
    after.push_back(k1);
    after.push_back(k2);
    double lp1 = lebesgue_log_posterior(s, after, bg);
    if (lp1 == kNegInf) return kNegInf;

    // both labelled preimages of the unordered pair {k1, k2}
    std::vector<double> u2(L);
    for (std::size_t l = 0; l < L; ++l) u2[l] = 1 - u[l];
    double fwd = 0.0;
    for (int pre = 0; pre < 2; ++pre) {
        const auto& uu = pre ? u2 : u;
        bool fl = pre ? !flip : flip;
        Eigen::VectorXd o = split_map(pack(uu), L, fl);
        bool same = std::abs(o(0) - (pre ? out(1) : out(0))) < 1e-9 * std::max(1.0, std::abs(o(0)));
        if (!same) continue;
        double g = 0.0;
        for (double v : uu) g += log_beta_pdf(v, s.scales.split_eta, s.scales.split_eta);
        double jac = numeric_log_jacobian([&](const Eigen::VectorXd& z) { return split_map(z, L, fl); }, pack(uu),
                                          steps(uu));
        fwd += std::exp(p(s, msl::MoveKind::split) - std::log(double(pts.size())) + g - std::log(lh - dmin) +
                        std::log(0.5) - jac);
    }
    double q_rev = p(s, msl::MoveKind::merge) - std::log(double(merge_pair_count(s, after)));
    return lp1 - lebesgue_log_posterior(s, pts, bg) + q_rev - std::log(fwd);
}

double merge_ratio(const Scene& s, const std::vector<Point>& pts, const msl::BackgroundField& bg, std::size_t ia,
                   std::size_t ib) {
    const std::size_t L = s.dims.bands;
    const Point &a = pts[ia], &b = pts[ib];
    Point merged{a.x, a.y, 0.0, std::vector<double>(L)};
    std::vector<double> u(L);
    double A = 0, B = 0;
    for (std::size_t l = 0; l < L; ++l) {
        double ra = std::exp(a.m[l]), rb = std::exp(b.m[l]);
        A += ra;
        B += rb;
        merged.m[l] = std::log(ra + rb);
        u[l] = ra / (ra + rb);
    }
    merged.t = (A * a.t + B * b.t) / (A + B);
    std::vector<Point> before;
    for (std::size_t k = 0; k < pts.size(); ++k)
        if (k != ia && k != ib) before.push_back(pts[k]);
    before.push_back(merged);
    return -split_ratio(s, before, bg, before.size() - 1, u, std::abs(a.t - b.t), a.t < b.t);
}

RandomScene random_scene(msl::Rng& rng, std::size_t max_side, std::size_t max_bands, std::size_t max_bins) {
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    RandomScene r;
    Scene& s = r.scene;
    s.dims = {pick(1, max_side), pick(1, max_side), pick(1, max_bands), pick(std::min<std::size_t>(16, max_bins), max_bins)};
    std::vector<double> sig(s.dims.bands);
    for (double& v : sig) v = uni(0.7, 1.6);
    s.irf = msl::ImpulseResponse::truncated_gaussian(sig, 3);
    s.hyper.n_b = 2;
    s.hyper.d_min = 5.0;
    s.hyper.pixel_pitch = uni(0.5, 1.5);
    s.hyper.bin_pitch = 1.0;
    s.hyper.sigma2 = uni(0.2, 1.0);
    s.hyper.beta = s.hyper.sigma2 / 100.0 * uni(0.5, 2.0);
    s.hyper.gamma_a = std::exp(uni(1.0, 3.0));
    s.hyper.lambda_a = uni(1.0, 50.0);
    s.hyper.voxel_measure = uni(0.1, 1.0);
    const auto& d = s.dims;
    s.prior = msl::GammaHyper::constant(d.rows, d.cols, d.bands, 1.0, 1.0);
    for (double& k : s.prior.shape.values()) k = uni(0.5, 5.0);
    for (double& t : s.prior.scale.values()) t = uni(0.05, 1.0);
    s.sbr.resize(d.bands);
    for (double& w : s.sbr) w = uni(0.5, 3.0);
    s.mask = msl::SamplingMask(d.rows, d.cols, d.bands, false);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l) s.mask.set(i, j, l, uni(0, 1) < 0.75);
    r.bg = msl::BackgroundField(d.rows, d.cols, d.bands);
    for (double& b : r.bg.values()) b = uni(0.05, 0.6);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j) {
            std::size_t n = pick(0, 2);
            for (std::size_t k = 0, tries = 0; k < n && tries < 50; ++tries) {
                Point q{std::uint32_t(i), std::uint32_t(j), uni(1.0, double(d.bins)), std::vector<double>(d.bands)};
                for (double& m : q.m) m = uni(std::log(0.5), std::log(20.0));
                auto trial = r.points;
                trial.push_back(q);
                if (!hard_core_ok(s, trial)) continue;
                r.points = std::move(trial);
                ++k;
            }
        }
    auto cloud = to_cloud(s, r.points);
    s.cube = msl::render_cube(cloud, r.bg, s.irf, s.mask, d.bins, rng());
    return r;
}

msl::ChainSetup make_setup(const Scene& s) {
    msl::ChainSetup c;
    c.cube = &s.cube;
    c.mask = &s.mask;
    c.irf = &s.irf;
    c.hyper = s.hyper;
    c.prior = s.prior;
    c.sbr = s.sbr;
    c.moves = s.moves;
    c.scales = s.scales;
    c.logdet_radius = 0;
    return c;
}

msl::PointCloud to_cloud(const Scene& s, const std::vector<Point>& pts) {
    return msl::PointCloud::from_points(s.dims.rows, s.dims.cols, s.dims.bands, pts);
}

std::size_t find_point(const std::vector<Point>& pts, const Point& p) {
    for (std::size_t k = 0; k < pts.size(); ++k)
        if (pts[k] == p) return k;
    return pts.size();
}

} // namespace oracle
