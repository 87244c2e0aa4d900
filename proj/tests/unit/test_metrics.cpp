#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "msl/errors.hpp"
#include "msl/metrics.hpp"
#include "msl/random.hpp"

using namespace msl;

namespace {

ImpulseResponse unit_irf(std::size_t bands) {
    std::vector<double> s(bands, 1.0);
    return ImpulseResponse::truncated_gaussian(s, 3).normalised();
}

// best (pairs, -total |dt|) over every one-to-one matching of a single pixel, crossing or not
std::pair<std::size_t, double> brute_match(const std::vector<double>& e, const std::vector<double>& g, double tau) {
    std::pair<std::size_t, double> best{0, 0.0};
    std::vector<bool> used(g.size(), false);
    std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t a, std::size_t n, double cost) {
        if (a == e.size()) {
            if (n > best.first || (n == best.first && cost < best.second)) best = {n, cost};
            return;
        }
        rec(a + 1, n, cost);
        for (std::size_t b = 0; b < g.size(); ++b)
            if (!used[b] && std::abs(e[a] - g[b]) <= tau) {
                used[b] = true;
                rec(a + 1, n + 1, cost + std::abs(e[a] - g[b]));
                used[b] = false;
            }
    };
    rec(0, 0, 0.0);
    return best;
}

} // namespace

TEST_CASE("identical clouds score perfectly") {
    PointCloud c(3, 3, 2);
    c.add({0, 0, 10, {0.0, 1.0}});
    c.add({2, 1, 30, {0.5, 0.2}});
    c.add({2, 1, 50, {0.5, 0.2}});
    BackgroundField bg(3, 3, 2, 0.3);
    auto r = evaluate(c, c, unit_irf(2), {0.0, 3.0}, &bg, &bg);
    CHECK(r.f_true == std::vector<double>{1.0, 1.0});
    CHECK(r.f_false == std::vector<std::size_t>{0, 0});
    CHECK(r.iae[1] == 0.0);
    CHECK(r.nmse_b == 0.0);
    CHECK(r.depth_mae == 0.0);
}

TEST_CASE("threshold decides detections") {
    PointCloud gt(1, 2, 1), est(1, 2, 1);
    gt.add({0, 0, 10, {0.0}});
    gt.add({0, 1, 20, {0.0}});
    est.add({0, 0, 12.5, {0.0}});
    est.add({0, 1, 20.5, {0.0}});
    auto r = evaluate(est, gt, unit_irf(1), {3.0, 1.0, 2.5});
    CHECK(r.tau == std::vector<double>{1.0, 2.5, 3.0});
    CHECK(r.f_true == std::vector<double>{0.5, 1.0, 1.0});
    CHECK(r.f_false == std::vector<std::size_t>{1, 0, 0});
    CHECK(std::isnan(r.nmse_b));
    CHECK(r.depth_mae == doctest::Approx(1.5));
}

TEST_CASE("matching is optimal against enumeration") {
    Rng rng = make_rng(12);
    std::uniform_real_distribution<double> t(0.0, 20.0);
    std::uniform_int_distribution<int> n(0, 4);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Point> est, gt;
        std::vector<double> et, gtt;
        for (int k = n(rng); k > 0; --k) et.push_back(t(rng));
        for (int k = n(rng); k > 0; --k) gtt.push_back(t(rng));
        std::sort(et.begin(), et.end());
        std::sort(gtt.begin(), gtt.end());
        for (double v : et) est.push_back({0, 0, v, {0.0}});
        for (double v : gtt) gt.push_back({0, 0, v, {0.0}});
        const double tau = 3.0;
        auto m = match_points(est, gt, tau);
        auto best = brute_match(et, gtt, tau);
        double cost = 0;
        for (auto [a, b] : m.pairs) {
            CHECK(std::abs(est[a].t - gt[b].t) <= tau);
            cost += std::abs(est[a].t - gt[b].t);
        }
        CHECK(m.pairs.size() == best.first);
        CHECK(cost == doctest::Approx(best.second));
        CHECK(m.pairs.size() + m.false_est.size() == est.size());
        CHECK(m.pairs.size() + m.missed_gt.size() == gt.size());
    }
}

TEST_CASE("matching never pairs across pixels") {
    std::vector<Point> est{{0, 0, 10, {0.0}}}, gt{{0, 1, 10, {0.0}}};
    auto m = match_points(est, gt, 5.0);
    CHECK(m.pairs.empty());
    CHECK(f_true(m) == 0.0);
    CHECK(f_false(m) == 1);
}

TEST_CASE("intensity error counts misses and false detections") {
    auto irf = unit_irf(2);
    std::vector<Point> gt{{0, 0, 10, {std::log(4.0), std::log(2.0)}}, {0, 1, 10, {std::log(1.0), std::log(3.0)}}};
    std::vector<Point> est{{0, 0, 11, {std::log(3.0), std::log(2.5)}}, {1, 1, 10, {std::log(0.5), std::log(0.5)}}};
    auto m = match_points(est, gt, 3.0);
    // matched |4-3| + |2-2.5|, missed 1 + 3, false 0.5 + 0.5
    CHECK(iae(m, est, gt, irf) == doctest::Approx((1.5 + 4.0 + 1.0) / 2.0));
}

TEST_CASE("intensity error rescales by the response sum") {
    std::vector<double> s{1.0};
    auto irf = ImpulseResponse::truncated_gaussian(s, 3);
    std::vector<Point> gt{{0, 0, 10, {std::log(4.0)}}}, est;
    auto m = match_points(est, gt, 3.0);
    CHECK(iae(m, est, gt, irf) == doctest::Approx(4.0 * irf.sum(0)));
}

TEST_CASE("background NMSE is averaged over bands") {
    BackgroundField t(2, 1, 2), e(2, 1, 2);
    t(0, 0, 0) = 1;
    t(1, 0, 0) = 2;
    t(0, 0, 1) = 3;
    t(1, 0, 1) = 4;
    e = t;
    e(0, 0, 0) = 2;    // band 0: 1 / 5
    e(1, 0, 1) = 4.5;  // band 1: 0.25 / 25
    CHECK(nmse_b(e, t) == doctest::Approx((0.2 + 0.01) / 2));
    CHECK_THROWS_AS(nmse_b(BackgroundField(1, 1, 2), t), ValidationError);
    CHECK_THROWS_AS(nmse_b(t, BackgroundField(2, 1, 2, 0.0)), ValidationError);
}

TEST_CASE("detection rate grows with the threshold") {
    Rng rng = make_rng(3);
    std::normal_distribution<double> noise(0.0, 2.0);
    PointCloud gt(8, 8, 1), est(8, 8, 1);
    for (std::uint32_t i = 0; i < 8; ++i)
        for (std::uint32_t j = 0; j < 8; ++j) {
            gt.add({i, j, 50, {0.0}});
            est.add({i, j, 50 + noise(rng), {0.0}});
        }
    auto r = evaluate(est, gt, unit_irf(1), {0.5, 1, 2, 4, 8});
    for (std::size_t k = 1; k < r.tau.size(); ++k) {
        CHECK(r.f_true[k] >= r.f_true[k - 1]);
        CHECK(r.f_false[k] <= r.f_false[k - 1]);
    }
}

TEST_CASE("reports") {
    PointCloud c(1, 1, 1);
    c.add({0, 0, 10, {0.0}});
    auto r = evaluate(c, c, unit_irf(1), {3.0});
    std::ostringstream csv, txt;
    write_report_csv(csv, r);
    write_report_summary(txt, r);
    CHECK(csv.str() == "tau,f_true,f_false,iae\n3,1,0,0\n");
    CHECK(txt.str().find("ground-truth points: 1") != std::string::npos);
    CHECK_THROWS_AS(match_points(c, c, -1.0), ValidationError);
}
