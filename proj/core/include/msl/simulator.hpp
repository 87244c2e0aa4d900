#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"
#include "msl/model.hpp"

namespace msl {

// A rectangular surface patch. Depth varies linearly and, for steps, jumps every cols/steps columns.
struct SurfaceSpec {
    enum class Kind { plane, steps };
    Kind kind = Kind::plane;
    long row0 = 0, row1 = -1; // half-open row range; -1 means the last row + 1
    long col0 = 0, col1 = -1;
    double depth = 150.0;
    double slope_row = 0.0;
    double slope_col = 0.0;
    std::size_t steps = 1;
    double step_depth = 0.0;
    std::vector<double> reflectivity; // per band
    double texture = 0.0;             // relative amplitude of a sinusoidal texture
    double texture_period = 8.0;      // pixels
    double opacity = 1.0;             // below 1 the surfaces behind stay visible
};

struct IrfSpec {
    enum class Shape { gaussian, exp_modified };
    Shape shape = Shape::gaussian;
    std::vector<double> sigmas{1.2, 1.4, 1.6, 1.8};
    std::vector<double> taus; // exp_modified only
    int half_width = 5;       // gaussian support [-half_width, half_width]; exp_modified left extent
    int right = 12;           // exp_modified right extent
};

struct SceneSpec {
    CubeDims dims{64, 64, 4, 300};
    std::vector<SurfaceSpec> surfaces;
    IrfSpec irf;
    enum class BackgroundMode { passive, constant };
    BackgroundMode background_mode = BackgroundMode::passive;
    std::vector<double> background_levels; // per band, photons per bin before budget scaling
    // mean photons per pixel-band and the background share of it; <= 0 disables rescaling
    double photons_per_pixel_band = 10.0;
    double background_photons = 3.4;
    double d_min = 17.0;

    void validate() const;
};

struct Scene {
    CubeDims dims;
    PointCloud truth;
    BackgroundField background;
    ImpulseResponse irf;
};

ImpulseResponse make_irf(const IrfSpec& spec, std::size_t bands);

// throws ValidationError when the ground truth violates the hard-core distance
Scene make_scene(const SceneSpec& spec);

// 64 x 64, 4 bands, 300 bins: textured back wall, three steps and a semi-transparent front plane
SceneSpec desk_scene_spec();

// expected photon count of one pixel-band
double expected_photons(const PointCloud& cloud, const BackgroundField& bg, const ImpulseResponse& irf,
                        std::size_t bins, std::size_t i, std::size_t j, std::size_t l);

// Poisson rendering; each pixel draws from its own stream derived from seed
LidarCube render_cube(const PointCloud& cloud, const BackgroundField& bg, const ImpulseResponse& irf,
                      const SamplingMask& mask, std::size_t bins, std::uint64_t seed);

} // namespace msl
