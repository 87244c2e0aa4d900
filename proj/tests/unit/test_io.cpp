#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "msl/errors.hpp"
#include "msl/io.hpp"

using namespace msl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "msl_io_test";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

LidarCube sample_cube() {
    LidarCube c(CubeDims{2, 3, 2, 40});
    c.add(0, 0, 0, 1, 2);
    c.add(0, 2, 1, 40, 1);
    c.add(1, 1, 0, 17, 7);
    return c;
}

} // namespace

TEST_CASE("binary cube round trip with and without mask") {
    auto c = sample_cube();
    SamplingMask m(2, 3, 2, true);
    m.set(1, 2, 1, false);
    auto p = scratch("cube.bin");
    write_cube_binary(p, c, &m);
    auto [c2, m2] = read_cube_binary(p);
    CHECK(c2 == c);
    REQUIRE(m2.has_value());
    CHECK(*m2 == m);
    write_cube_binary(p, c);
    auto [c3, m3] = read_cube(p);
    CHECK(c3 == c);
    CHECK_FALSE(m3.has_value());
}

TEST_CASE("event CSV round trip and format detection") {
    auto c = sample_cube();
    auto p = scratch("cube.csv");
    write_cube_csv(p, c);
    CHECK(read_cube_csv(p) == c);
    CHECK(read_cube(p).first == c);
}

TEST_CASE("malformed inputs are validation errors") {
    auto p = scratch("bad.csv");
    write_text(p, "msl-events,1,1,1,10\n0,0,0,11,1\n");
    CHECK_THROWS_AS(read_cube_csv(p), ValidationError);
    write_text(p, "msl-events,1,1,1,10\n0,0,0,x,1\n");
    try {
        read_cube_csv(p);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("bad.csv:2:") != std::string::npos);
    }
    write_text(p, "MSLCUBE1 truncated");
    CHECK_THROWS_AS(read_cube(p), ValidationError);
    CHECK_THROWS_AS(read_cube(scratch("missing.bin")), ValidationError);
    write_text(p, "msl-mask,1,2,2\n0,0,10\n0,1,1\n");
    CHECK_THROWS_AS(read_mask_csv(p), ValidationError);
}

TEST_CASE("mask CSV round trip") {
    SamplingMask m(3, 2, 4, false);
    m.set(0, 1, 3, true);
    m.set(2, 0, 0, true);
    auto p = scratch("mask.csv");
    write_mask_csv(p, m);
    CHECK(read_mask_csv(p) == m);
}

TEST_CASE("impulse response CSV round trip") {
    std::vector<double> s{1.0, 1.5};
    auto irf = ImpulseResponse::truncated_gaussian(s, 3);
    auto p = scratch("irf.csv");
    write_irf_csv(p, irf);
    auto back = read_irf_csv(p);
    REQUIRE(back.bands() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(back.first_offset(l) == -3);
        for (double x = -4; x <= 4; x += 0.5) CHECK(back(l, x) == doctest::Approx(irf(l, x)).epsilon(1e-15));
    }
}

TEST_CASE("point CSV round trip and PLY export") {
    PointCloud c(4, 5, 2);
    c.add({1, 2, 33.25, {0.5, -1.0}});
    c.add({3, 4, 100.0, {2.0, 0.0}});
    c.add({1, 2, 60.0, {-0.25, 1.0}});
    auto p = scratch("points.csv");
    write_points_csv(p, c);
    auto back = read_points_csv(p, 4, 5);
    CHECK(back.points() == c.points());
    CHECK_THROWS_AS(read_points_csv(p, 2, 2), ValidationError);

    auto ply = scratch("points.ply");
    write_points_ply(ply, c);
    std::ifstream is(ply);
    std::string first, all, line;
    std::getline(is, first);
    CHECK(first == "ply");
    while (std::getline(is, line)) all += line + "\n";
    CHECK(all.find("element vertex 3") != std::string::npos);
}

TEST_CASE("empty point CSV keeps the image size") {
    PointCloud c(2, 2, 3);
    auto p = scratch("empty.csv");
    write_points_csv(p, c);
    auto back = read_points_csv(p, 2, 2);
    CHECK(back.empty());
}

TEST_CASE("background CSV round trip") {
    BackgroundField b(2, 3, 2);
    for (std::size_t f = 0; f < b.size(); ++f) b.at(f) = 0.125 * double(f + 1);
    auto p = scratch("bg.csv");
    write_background_csv(p, b);
    CHECK(read_background_csv(p) == b);
}
