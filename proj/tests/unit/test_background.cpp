#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "checks.hpp"
#include "msl/background.hpp"
#include "msl/errors.hpp"

using namespace msl;

TEST_CASE("gibbs draws match the gamma-Poisson conjugate moments") {
    auto r = checks::gibbs_conjugacy(20000, 3);
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("unobserved pixel-bands draw from the prior") {
    LidarCube cube(CubeDims{1, 1, 1, 10});
    PointCloud cloud(1, 1, 1);
    std::vector<double> sig{1.0};
    auto irf = ImpulseResponse::truncated_gaussian(sig, 3);
    Rng rng = make_rng(4);
    double s = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) s += gibbs_background_draw(cube, cloud, 1.0, 3.0, 0.5, false, irf, 0, 0, 0, rng);
    CHECK(s / n == doctest::Approx(1.5).epsilon(0.02));
}

TEST_CASE("stripping removes only photons near a point") {
    LidarCube cube(CubeDims{1, 2, 1, 40});
    for (std::uint32_t t = 1; t <= 40; ++t) {
        cube.add(0, 0, 0, t, 1);
        cube.add(0, 1, 0, t, 2);
    }
    SamplingMask mask(1, 2, 1, true);
    PointCloud cloud(1, 2, 1);
    cloud.add({0, 0, 20.0, {0.0}});
    std::vector<double> sig{1.0};
    auto irf = ImpulseResponse::truncated_gaussian(sig, 3);
    auto st = strip_signal_photons(cube, cloud, irf, mask);
    // bins strictly inside (t + first - 1, t + last + 1) are excluded
    CHECK(st.bins(0, 0, 0) == 40 - 7);
    CHECK(st.counts(0, 0, 0) == 40 - 7);
    CHECK(st.bins(0, 1, 0) == 40);
    CHECK(st.counts(0, 1, 0) == 80);
    CHECK(st.fully_covered == 0);
    mask.set(0, 1, 0, false);
    CHECK(strip_signal_photons(cube, cloud, irf, mask).counts(0, 1, 0) == 0);
}

TEST_CASE("band centring of a uniform cube is the log rate") {
    StrippedCounts st{Field3(3, 3, 2, 0.0), Field3(3, 3, 2, 50.0), 0};
    for (std::size_t f = 0; f < st.counts.size(); ++f) st.counts.at(f) = f % 2 ? 10.0 : 2.5;
    SamplingMask mask(3, 3, 2, true);
    auto mu = band_centring(st, mask);
    CHECK(mu[0] == doctest::Approx(std::log(0.05)));
    CHECK(mu[1] == doctest::Approx(std::log(0.2)));
    st.counts = Field3(3, 3, 2, 0.0);
    CHECK(std::isinf(band_centring(st, mask)[0]));
}

TEST_CASE("single-site latent sampler matches one-dimensional quadrature") {
    // one pixel with the identity operator: density z x - c e^x - x^2 / (2 alpha)
    StrippedCounts st{Field3(1, 1, 1, 12.0), Field3(1, 1, 1, 40.0), 0};
    SamplingMask mask(1, 1, 1, true);
    EmpiricalBayesConfig cfg;
    cfg.alpha = 0.5;
    cfg.op = SmoothingOperator::identity;
    cfg.samples = 40000;
    cfg.burn_in = 100;
    Rng rng = make_rng(8);
    auto lat = sample_latent_background(st, cfg, mask, rng);
    const double mu = std::log(12.0 / 40.0), z = 12.0, c = 40.0 * std::exp(mu);
    double w = 0, eb = 0, elb = 0;
    for (double x = -8; x <= 8; x += 1e-4) {
        double p = std::exp(z * x - c * std::exp(x) - x * x / (2 * cfg.alpha));
        w += p;
        eb += p * std::exp(x + mu);
        elb += p * (x + mu);
    }
    CHECK(lat.mu[0] == doctest::Approx(mu));
    CHECK(lat.mean_b(0, 0, 0) == doctest::Approx(eb / w).epsilon(0.01));
    CHECK(lat.mean_log_b(0, 0, 0) == doctest::Approx(elb / w).epsilon(0.01));
    CHECK(lat.acceptance[0] > 0.8);
}

TEST_CASE("a tight prior concentrates the latent field on the centring") {
    StrippedCounts st{Field3(4, 4, 1, 0.0), Field3(4, 4, 1, 30.0), 0};
    for (std::size_t f = 0; f < 16; ++f) st.counts.at(f) = double(f % 5);
    SamplingMask mask(4, 4, 1, true);
    EmpiricalBayesConfig cfg;
    cfg.alpha = 1e-6;
    cfg.op = SmoothingOperator::identity;
    cfg.samples = 200;
    cfg.burn_in = 20;
    Rng rng = make_rng(9);
    auto lat = sample_latent_background(st, cfg, mask, rng);
    for (std::size_t f = 0; f < 16; ++f) CHECK(lat.mean_b.at(f) == doctest::Approx(std::exp(lat.mu[0])).epsilon(0.01));
}

TEST_CASE("latent sampler configuration is validated") {
    EmpiricalBayesConfig cfg;
    cfg.alpha = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.alpha = 1;
    cfg.samples = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("gamma fit recovers the parameters of a gamma distribution") {
    // Gamma(2, 3): E[b] = 6, E[log b] = digamma(2) + log 3
    const double euler = 0.5772156649015329;
    const double elog = (1.0 - euler) + std::log(3.0);
    auto j = fit_gamma_hyper(6.0, elog, GammaFitRule::joint);
    CHECK(j.k == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(j.theta == doctest::Approx(3.0).epsilon(1e-10));
    auto f = fit_gamma_hyper(6.0, elog, GammaFitRule::fixed_scale);
    CHECK(f.theta == 6.0);
    CHECK(fit_gamma_hyper(6.0, elog).k == f.k);
    // digamma(k) = E[log b] - log E[b]; digamma(1) = -euler
    auto one = fit_gamma_hyper(std::exp(1.0), 1.0 - euler, GammaFitRule::fixed_scale);
    CHECK(one.k == doctest::Approx(1.0).epsilon(1e-10));
    CHECK_FALSE(j.capped);
}

TEST_CASE("gamma fit edge cases") {
    CHECK_THROWS_AS(fit_gamma_hyper(1.0, 0.5), ValidationError);
    CHECK_THROWS_AS(fit_gamma_hyper(0.0, -1.0), ValidationError);
    auto c = fit_gamma_hyper(2.0, std::log(2.0));
    CHECK(c.capped);
    CHECK(c.k == kShapeCeiling);
    auto n = non_informative_gamma();
    CHECK(n.k == 0.01);
    CHECK(n.theta == 100.0);
}

TEST_CASE("signal to background ratio is clamped per band") {
    LidarCube cube(CubeDims{2, 2, 2, 100});
    SamplingMask mask(2, 2, 2, true);
    std::vector<double> sig{1.0, 1.0};
    auto irf = ImpulseResponse::truncated_gaussian(sig, 3);
    PointCloud cloud(2, 2, 2);
    cloud.add({0, 0, 50, {std::log(8.0), std::log(1e6)}});
    BackgroundField bg(2, 2, 2, 0.01);
    auto w = estimate_sbr(cube, cloud, bg, irf, mask);
    CHECK(w[0] == doctest::Approx(8.0 * irf.sum(0) / 4.0));
    CHECK(w[1] == 100.0);
    PointCloud empty(2, 2, 2);
    CHECK(estimate_sbr(cube, empty, bg, irf, mask)[0] == 0.1);
}

TEST_CASE("gamma MRF density scales as -log c per site on a constant image") {
    BackgroundField a(5, 4, 2, 1.0), b(5, 4, 2, 3.0);
    double d = gamma_mrf_marginal_logdensity(b, 2.0) - gamma_mrf_marginal_logdensity(a, 2.0);
    CHECK(d == doctest::Approx(-40.0 * std::log(3.0)));
}
