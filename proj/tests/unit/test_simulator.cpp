#include <doctest.h>

#include <cmath>

#include "msl/errors.hpp"
#include "msl/simulator.hpp"

using namespace msl;

namespace {

SceneSpec plane_spec(double photons) {
    SceneSpec spec;
    spec.dims = CubeDims{6, 5, 2, 60};
    SurfaceSpec s;
    s.depth = 20.0;
    s.slope_col = 0.5;
    s.reflectivity = {2.0, 0.5};
    spec.surfaces = {s};
    spec.irf.sigmas = {1.0, 1.5};
    spec.irf.half_width = 4;
    spec.background_mode = SceneSpec::BackgroundMode::constant;
    spec.background_levels = {0.05, 0.1};
    spec.photons_per_pixel_band = photons;
    spec.background_photons = photons > 0 ? 3.0 : 0.0;
    spec.d_min = 5.0;
    return spec;
}

double mean_photons(const Scene& sc) {
    double e = 0;
    for (std::size_t i = 0; i < sc.dims.rows; ++i)
        for (std::size_t j = 0; j < sc.dims.cols; ++j)
            for (std::size_t l = 0; l < sc.dims.bands; ++l)
                e += expected_photons(sc.truth, sc.background, sc.irf, sc.dims.bins, i, j, l);
    return e / double(sc.dims.pixels() * sc.dims.bands);
}

} // namespace

TEST_CASE("a single plane gives one point per pixel") {
    auto sc = make_scene(plane_spec(0));
    CHECK(sc.truth.size() == 30);
    auto p = sc.truth[sc.truth.at_pixel(2, 4)[0]];
    CHECK(p.t == doctest::Approx(22.0));
    CHECK(p.m[0] == doctest::Approx(std::log(2.0)));
    CHECK(p.m[1] == doctest::Approx(std::log(0.5)));
    CHECK(sc.background(3, 3, 1) == 0.1);
}

TEST_CASE("overlapping surfaces respect opacity and the hard-core") {
    auto spec = plane_spec(0);
    SurfaceSpec front;
    front.depth = 10.0;
    front.reflectivity = {1.0, 1.0};
    front.opacity = 0.5;
    spec.surfaces.push_back(front);
    auto sc = make_scene(spec);
    CHECK(sc.truth.size() == 60);
    auto px = sc.truth.at_pixel(0, 0);
    REQUIRE(px.size() == 2);
    const Point& a = sc.truth[px[0]].t < sc.truth[px[1]].t ? sc.truth[px[0]] : sc.truth[px[1]];
    const Point& b = sc.truth[px[0]].t < sc.truth[px[1]].t ? sc.truth[px[1]] : sc.truth[px[0]];
    CHECK(a.m[0] == doctest::Approx(std::log(0.5)));
    CHECK(b.m[0] == doctest::Approx(std::log(0.5 * 2.0)));
    spec.surfaces.back().depth = 18.0;
    CHECK_THROWS_AS(make_scene(spec), ValidationError);
    spec.surfaces.back().opacity = 1.0;
    spec.surfaces.back().depth = 10.0;
    CHECK(make_scene(spec).truth.size() == 30);
}

TEST_CASE("photon budget is met in expectation") {
    auto sc = make_scene(plane_spec(10.0));
    CHECK(mean_photons(sc) == doctest::Approx(10.0).epsilon(1e-9));
    double bg = 0;
    for (double b : sc.background.values()) bg += b * 60;
    CHECK(bg / 60.0 == doctest::Approx(3.0).epsilon(1e-9));
    SamplingMask all(6, 5, 2, true);
    double total = 0;
    for (std::uint64_t s = 1; s <= 40; ++s) total += double(render_cube(sc.truth, sc.background, sc.irf, all, 60, s).total_photons());
    CHECK(total / 40 / 60 == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("desk scene matches its description") {
    auto spec = desk_scene_spec();
    auto sc = make_scene(spec);
    CHECK(sc.dims == CubeDims{64, 64, 4, 300});
    CHECK(sc.truth.size() == 6144);
    CHECK(mean_photons(sc) == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(strauss_valid(sc.truth, spec.d_min));
}

TEST_CASE("counts per bin are Poisson") {
    // background only: each bin has mean 2
    PointCloud empty(1, 1, 1);
    BackgroundField bg(1, 1, 1, 2.0);
    std::vector<double> sig{1.0};
    auto irf = ImpulseResponse::truncated_gaussian(sig, 3);
    SamplingMask m(1, 1, 1, true);
    double s = 0, s2 = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        auto c = render_cube(empty, bg, irf, m, 40, seed);
        for (auto z : c.dense(0, 0, 0)) {
            s += z;
            s2 += double(z) * z;
            ++n;
        }
    }
    double mean = s / double(n), var = s2 / double(n) - mean * mean;
    CHECK(std::abs(mean - 2.0) < 4 * std::sqrt(2.0 / double(n)));
    CHECK(var / mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rendering respects the mask and the seed") {
    auto sc = make_scene(plane_spec(10.0));
    SamplingMask m(6, 5, 2, true);
    m.set(1, 2, 0, false);
    auto a = render_cube(sc.truth, sc.background, sc.irf, m, 60, 9);
    CHECK(a.photons(1, 2, 0) == 0);
    CHECK_NOTHROW(validate_pairing(a, m));
    CHECK(render_cube(sc.truth, sc.background, sc.irf, m, 60, 9) == a);
    CHECK_FALSE(render_cube(sc.truth, sc.background, sc.irf, m, 60, 10) == a);
    SamplingMask wrong(6, 4, 2, true);
    CHECK_THROWS_AS(render_cube(sc.truth, sc.background, sc.irf, wrong, 60, 9), ValidationError);
}

TEST_CASE("zero reflectivity everywhere leaves no points") {
    auto spec = plane_spec(0);
    spec.surfaces[0].reflectivity = {0.0, 0.0};
    CHECK(make_scene(spec).truth.size() == 0);
    spec.photons_per_pixel_band = 10.0;
    spec.background_photons = 3.0;
    CHECK_THROWS_AS(make_scene(spec), ValidationError);
}

TEST_CASE("scene specifications are validated") {
    auto spec = plane_spec(0);
    spec.surfaces[0].reflectivity = {1.0};
    CHECK_THROWS_AS(make_scene(spec), ValidationError);
    spec = plane_spec(0);
    spec.surfaces[0].depth = 100.0;
    CHECK_THROWS_AS(make_scene(spec), ValidationError);
    spec = plane_spec(10.0);
    spec.background_photons = 12.0;
    CHECK_THROWS_AS(make_scene(spec), ValidationError);
}
