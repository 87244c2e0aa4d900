#pragma once

#include <cstddef>
#include <vector>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"
#include "msl/model.hpp"
#include "msl/random.hpp"

namespace msl {

// Smallest background level a draw may return; gamma draws with tiny shape can underflow to zero.
inline constexpr double kBackgroundFloor = 1e-300;

// One data-augmentation update of a single pixel-band: thin the photons into background
// and signal parts, then draw b from its conjugate gamma conditional.
double gibbs_background_draw(const LidarCube& cube, const PointCloud& cloud, double b, double k, double theta,
                             bool g, const ImpulseResponse& irf, std::size_t i, std::size_t j, std::size_t l,
                             Rng& rng);

// one sweep over every pixel-band, in place
void gibbs_background_step(const LidarCube& cube, const PointCloud& cloud, BackgroundField& bg,
                           const GammaHyper& prior, const SamplingMask& mask, const ImpulseResponse& irf, Rng& rng);

struct StrippedCounts {
    Field3 counts; // off-peak photons per pixel-band
    Field3 bins;   // number of bins left after exclusion
    std::size_t fully_covered = 0; // pixel-bands with no bins left
};

StrippedCounts strip_signal_photons(const LidarCube& cube, const PointCloud& cloud, const ImpulseResponse& irf,
                                    const SamplingMask& mask);

enum class SmoothingOperator { laplacian, identity };

struct EmpiricalBayesConfig {
    double alpha = 0.1; // prior covariance scale of the log-background field
    SmoothingOperator op = SmoothingOperator::laplacian;
    std::size_t samples = 1000;
    std::size_t burn_in = 200;
    double ridge = 1e-6;

    void validate() const;
};

struct LatentBackground {
    Field3 mean_b;
    Field3 mean_log_b;
    std::vector<double> mu;         // per band centring
    std::vector<double> acceptance; // per band MH acceptance rate
};

// log of the mean rate z/v over observed pixel-bands with v > 0; nullopt-like -inf when none
std::vector<double> band_centring(const StrippedCounts& stripped, const SamplingMask& mask);

// Samples the Poisson / log-Gaussian surrogate model band by band with single-site
// Metropolis-Hastings, each site proposing from the Laplace approximation of its conditional.
LatentBackground sample_latent_background(const StrippedCounts& stripped, const EmpiricalBayesConfig& cfg,
                                          const SamplingMask& mask, Rng& rng);

enum class GammaFitRule {
    fixed_scale, // theta = E[b], minimise over k only
    joint        // minimise over (k, theta) jointly: theta = E[b] / k
};

struct GammaFit {
    double k = 0.0;
    double theta = 0.0;
    bool capped = false;
};

inline constexpr double kShapeCeiling = 1e6;

GammaFit fit_gamma_hyper(double mean_b, double mean_log_b, GammaFitRule rule = GammaFitRule::fixed_scale);

// (k, theta) used when no coarse estimate exists
GammaFit non_informative_gamma();

// fits every pixel-band; returns the number of capped fits through capped_out when given
GammaHyper fit_gamma_field(const LatentBackground& latent, GammaFitRule rule, std::size_t* capped_out = nullptr);

struct SbrLimits {
    double min = 0.1;
    double max = 100.0;
};

// per band ratio of expected signal photons to expected background photons, clamped
std::vector<double> estimate_sbr(const LidarCube& cube, const PointCloud& cloud, const BackgroundField& bg,
                                 const ImpulseResponse& irf, const SamplingMask& mask, SbrLimits limits = {});

// Marginal log-density (up to a constant) of a gamma Markov random field with 3x3 clipped
// neighbourhoods. Diagnostic only: on a constant image c it behaves as -L*N*log(c).
double gamma_mrf_marginal_logdensity(const BackgroundField& bg, double alpha);

} // namespace msl
