#include "msl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msl/errors.hpp"

namespace msl {

namespace {

bool sorted(const std::vector<Point>& v) {
    return std::is_sorted(v.begin(), v.end(), [](const Point& a, const Point& b) {
        return a.x != b.x ? a.x < b.x : (a.y != b.y ? a.y < b.y : a.t < b.t);
    });
}

// non-crossing optimal matching of two depth-sorted lists of one pixel
void match_pixel(const std::vector<Point>& est, std::size_t e0, std::size_t e1, const std::vector<Point>& gt,
                 std::size_t g0, std::size_t g1, double tau, Matching& out) {
    const std::size_t ne = e1 - e0, ng = g1 - g0;
    struct Cell {
        long count = 0;
        double cost = 0.0;
        int from = 0; // 0 skip est, 1 skip gt, 2 match
    };
    auto better = [](long c1, double d1, long c2, double d2) {
        return c1 != c2 ? c1 > c2 : d1 < d2 - 1e-12;
    };
    std::vector<Cell> f((ne + 1) * (ng + 1));
    auto at = [&](std::size_t a, std::size_t b) -> Cell& { return f[a * (ng + 1) + b]; };
    for (std::size_t a = 0; a <= ne; ++a)
        for (std::size_t b = 0; b <= ng; ++b) {
            if (a == 0 && b == 0) continue;
            Cell best;
            bool have = false;
            if (a > 0 && b > 0) {
                double dt = std::abs(est[e0 + a - 1].t - gt[g0 + b - 1].t);
                if (dt <= tau) {
                    best = {at(a - 1, b - 1).count + 1, at(a - 1, b - 1).cost + dt, 2};
                    have = true;
                }
            }
            if (b > 0) {
                Cell c{at(a, b - 1).count, at(a, b - 1).cost, 1};
                if (!have || better(c.count, c.cost, best.count, best.cost)) best = c, have = true;
            }
            if (a > 0) {
                Cell c{at(a - 1, b).count, at(a - 1, b).cost, 0};
                if (!have || better(c.count, c.cost, best.count, best.cost)) best = c, have = true;
            }
            at(a, b) = best;
        }
    std::size_t a = ne, b = ng;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    while (a > 0 || b > 0) {
        const Cell& c = at(a, b);
        if (c.from == 2) {
            pairs.emplace_back(e0 + a - 1, g0 + b - 1);
            --a;
            --b;
        } else if (c.from == 1) {
            out.missed_gt.push_back(g0 + b - 1);
            --b;
        } else {
            out.false_est.push_back(e0 + a - 1);
            --a;
        }
    }
    out.pairs.insert(out.pairs.end(), pairs.rbegin(), pairs.rend());
}

} // namespace

Matching match_points(const std::vector<Point>& est, const std::vector<Point>& gt, double tau) {
    if (!(tau >= 0)) throw ValidationError("matching threshold must be non-negative");
    if (!sorted(est) || !sorted(gt)) throw ValidationError("point lists must be sorted by pixel and depth");
    Matching m;
    m.n_est = est.size();
    m.n_gt = gt.size();
    auto key = [](const Point& p) { return (std::uint64_t(p.x) << 32) | p.y; };
    std::size_t e = 0, g = 0;
    while (e < est.size() || g < gt.size()) {
        std::uint64_t k = std::min(e < est.size() ? key(est[e]) : ~0ull, g < gt.size() ? key(gt[g]) : ~0ull);
        std::size_t e1 = e, g1 = g;
        while (e1 < est.size() && key(est[e1]) == k) ++e1;
        while (g1 < gt.size() && key(gt[g1]) == k) ++g1;
        match_pixel(est, e, e1, gt, g, g1, tau, m);
        e = e1;
        g = g1;
    }
    std::sort(m.false_est.begin(), m.false_est.end());
    std::sort(m.missed_gt.begin(), m.missed_gt.end());
    return m;
}

Matching match_points(const PointCloud& est, const PointCloud& gt, double tau) {
    return match_points(est.points(), gt.points(), tau);
}

double f_true(const Matching& m) { return m.n_gt ? double(m.pairs.size()) / double(m.n_gt) : 0.0; }

std::size_t f_false(const Matching& m) { return m.false_est.size(); }

double iae(const Matching& m, const std::vector<Point>& est, const std::vector<Point>& gt,
           const ImpulseResponse& irf) {
    if (m.n_gt == 0) return 0.0;
    auto r = [&](const Point& p, std::size_t l) { return std::exp(p.m[l]) * irf.sum(l); };
    double total = 0.0;
    for (const auto& [a, b] : m.pairs)
        for (std::size_t l = 0; l < irf.bands(); ++l) total += std::abs(r(gt[b], l) - r(est[a], l));
    for (std::size_t a : m.false_est)
        for (std::size_t l = 0; l < irf.bands(); ++l) total += r(est[a], l);
    for (std::size_t b : m.missed_gt)
        for (std::size_t l = 0; l < irf.bands(); ++l) total += r(gt[b], l);
    return total / double(m.n_gt);
}

double nmse_b(const BackgroundField& est, const BackgroundField& truth) {
    if (!est.same_shape(truth)) throw ValidationError("background shapes differ");
    const std::size_t L = truth.bands();
    double acc = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < truth.rows(); ++i)
            for (std::size_t j = 0; j < truth.cols(); ++j) {
                double d = truth(i, j, l) - est(i, j, l);
                num += d * d;
                den += truth(i, j, l) * truth(i, j, l);
            }
        if (!(den > 0)) throw ValidationError("true background is zero in a band");
        acc += num / den;
    }
    return acc / double(L);
}

double depth_mae(const Matching& m, const std::vector<Point>& est, const std::vector<Point>& gt) {
    if (m.pairs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [a, b] : m.pairs) s += std::abs(est[a].t - gt[b].t);
    return s / double(m.pairs.size());
}

EvalReport evaluate(const PointCloud& est, const PointCloud& gt, const ImpulseResponse& irf,
                    const std::vector<double>& taus, const BackgroundField* bg_est, const BackgroundField* bg_true,
                    double depth_tau) {
    if (est.bands() != gt.bands() || irf.bands() != gt.bands()) throw ValidationError("band counts differ");
    auto ep = est.points(), gp = gt.points();
    EvalReport r;
    r.tau = taus;
    std::sort(r.tau.begin(), r.tau.end());
    r.n_est = ep.size();
    r.n_gt = gp.size();
    for (double t : r.tau) {
        Matching m = match_points(ep, gp, t);
        r.f_true.push_back(f_true(m));
        r.f_false.push_back(f_false(m));
        r.iae.push_back(iae(m, ep, gp, irf));
    }
    r.depth_tau = depth_tau;
    r.depth_mae = depth_mae(match_points(ep, gp, depth_tau), ep, gp);
    r.nmse_b = std::numeric_limits<double>::quiet_NaN();
    if (bg_est && bg_true) r.nmse_b = nmse_b(*bg_est, *bg_true);
    return r;
}

void write_report_csv(std::ostream& os, const EvalReport& r) {
    os << "tau,f_true,f_false,iae\n";
    os.precision(10);
    for (std::size_t k = 0; k < r.tau.size(); ++k)
        os << r.tau[k] << ',' << r.f_true[k] << ',' << r.f_false[k] << ',' << r.iae[k] << '\n';
}

void write_report_summary(std::ostream& os, const EvalReport& r) {
    os.precision(6);
    os << "estimated points: " << r.n_est << '\n';
    os << "ground-truth points: " << r.n_gt << '\n';
    for (std::size_t k = 0; k < r.tau.size(); ++k)
        os << "tau " << r.tau[k] << ": f_true " << r.f_true[k] << ", f_false " << r.f_false[k] << ", iae "
           << r.iae[k] << '\n';
    os << "depth MAE (tau " << r.depth_tau << "): " << r.depth_mae << '\n';
    if (!std::isnan(r.nmse_b)) os << "background NMSE: " << r.nmse_b << '\n';
}

} // namespace msl
