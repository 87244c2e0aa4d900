#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "msl/background.hpp"
#include "msl/rjmcmc.hpp"

namespace msl {

// Hyperparameters of one scale. factor is the pixel binning of that scale; factor 1 is the fine scale.
// n_bin is the base window of the schedule, used by the fine-scale column.
ModelHyper table_hyper(std::size_t rows, std::size_t cols, std::size_t factor, std::size_t n_bin,
                       double pitch_ratio);

struct ScaleSchedule {
    std::size_t n_scales = 3;
    std::size_t n_bin = 2;
    double pitch_ratio = 0.25; // pixel pitch / bin pitch
    std::vector<std::size_t> iterations{400, 150, 100}; // coarse to fine
    double burnin_fraction = 0.5;

    void validate() const;
    // binning factors, coarse to fine: n_bin^(K-1), ..., 1
    std::vector<std::size_t> factors() const;
};

struct MultiresConfig {
    ScaleSchedule schedule;
    MoveProbabilities moves;
    ProposalScales scales;
    int logdet_radius = 3;
    std::size_t moves_per_iteration = 0;
    bool adapt = true;
    EmpiricalBayesConfig empirical_bayes;
    GammaFitRule fit_rule = GammaFitRule::joint;
    SbrLimits sbr_limits;
    double initial_sbr = 1.0;
    // divide intensities and background by the patch size when upsampling
    bool rescale_upsample = true;
    std::size_t chains = 1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ScaleResult {
    std::size_t factor = 1;
    ModelHyper hyper;
    std::vector<double> sbr;
    PointCloud cloud;
    BackgroundField background;
    ChainResult chain;
};

struct MultiresResult {
    PointCloud cloud;
    BackgroundField background;
    std::vector<ScaleResult> scales;
};

// Nearest-neighbour upsampling onto a fine grid of rows x cols: every coarse point is copied to each fine
// pixel of its patch.
std::pair<PointCloud, BackgroundField> upsample(const PointCloud& coarse, const BackgroundField& bg,
                                                std::size_t n_bin, std::size_t rows, std::size_t cols,
                                                bool rescale = true);
// rescaling divides by the number of fine pixels of the patch observed in each band
std::pair<PointCloud, BackgroundField> upsample(const PointCloud& coarse, const BackgroundField& bg,
                                                std::size_t n_bin, std::size_t rows, std::size_t cols, bool rescale,
                                                const SamplingMask* fine_mask);

using ScaleCallback = std::function<void(const ScaleResult&)>;

MultiresResult run_multires(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                            const MultiresConfig& cfg, const ScaleCallback& on_scale = {});

} // namespace msl
