#include "msl/multires.hpp"

#include <cmath>

#include "msl/errors.hpp"

namespace msl {

ModelHyper table_hyper(std::size_t rows, std::size_t cols, std::size_t factor, std::size_t n_bin,
                       double pitch_ratio) {
    if (factor == 0 || n_bin == 0 || !(pitch_ratio > 0)) throw ValidationError("invalid scale parameters");
    ModelHyper h;
    const double f = double(factor);
    const bool coarse = factor > 1;
    const double pixels = double(rows) * double(cols);
    h.gamma_a = std::exp(coarse ? 2.0 : 3.0);
    h.lambda_a = std::pow(coarse ? pixels / (f * f) : pixels, 1.5);
    h.n_b = std::max(1, int(std::lround(8.0 * f * pitch_ratio)));
    h.d_min = 2.0 * h.n_b + 1.0;
    h.sigma2 = coarse ? 0.36 : 0.36 / double(n_bin);
    h.beta = h.sigma2 / 100.0;
    h.pixel_pitch = pitch_ratio * f;
    h.bin_pitch = 1.0;
    h.voxel_measure = 1.0 / (2.0 * h.n_b + 1.0);
    return h;
}

void ScaleSchedule::validate() const {
    if (n_scales == 0) throw ValidationError("need at least one scale");
    if (n_scales > 1 && n_bin < 2) throw ValidationError("binning window must be at least 2 with several scales");
    if (iterations.size() != n_scales) throw ValidationError("one iteration count per scale is required");
    if (!(burnin_fraction >= 0.0 && burnin_fraction < 1.0)) throw ValidationError("burn-in fraction must lie in [0,1)");
    if (!(pitch_ratio > 0)) throw ValidationError("pitch ratio must be positive");
}

std::vector<std::size_t> ScaleSchedule::factors() const {
    std::vector<std::size_t> f(n_scales, 1);
    for (std::size_t k = n_scales; k-- > 1;) f[k - 1] = f[k] * n_bin;
    return f;
}

void MultiresConfig::validate() const {
    schedule.validate();
    moves.validate();
    scales.validate();
    empirical_bayes.validate();
    if (!(initial_sbr > 0)) throw ValidationError("initial SBR must be positive");
    if (!(sbr_limits.min > 0 && sbr_limits.max >= sbr_limits.min)) throw ValidationError("invalid SBR limits");
    if (chains == 0) throw ValidationError("need at least one chain");
}

std::pair<PointCloud, BackgroundField> upsample(const PointCloud& coarse, const BackgroundField& bg,
                                                std::size_t n_bin, std::size_t rows, std::size_t cols, bool rescale,
                                                const SamplingMask* fine_mask) {
    if (n_bin == 0) throw ValidationError("binning window must be positive");
    const std::size_t L = coarse.bands();
    if ((rows + n_bin - 1) / n_bin != coarse.rows() || (cols + n_bin - 1) / n_bin != coarse.cols() ||
        bg.rows() != coarse.rows() || bg.cols() != coarse.cols() || bg.bands() != L)
        throw ValidationError("coarse estimate does not match the fine grid");
    if (fine_mask && (fine_mask->rows() != rows || fine_mask->cols() != cols || fine_mask->bands() != L))
        throw ValidationError("mask does not match the fine grid");

    // per coarse pixel-band divisor: observed fine pixels of the patch, or the patch size
    Field3 divisor(coarse.rows(), coarse.cols(), L, 1.0);
    if (rescale) {
        Field3 patch(coarse.rows(), coarse.cols(), L, 0.0), seen(coarse.rows(), coarse.cols(), L, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                for (std::size_t l = 0; l < L; ++l) {
                    patch(i / n_bin, j / n_bin, l) += 1.0;
                    if (!fine_mask || (*fine_mask)(i, j, l)) seen(i / n_bin, j / n_bin, l) += 1.0;
                }
        for (std::size_t f = 0; f < divisor.size(); ++f) divisor.at(f) = seen.at(f) > 0 ? seen.at(f) : patch.at(f);
    }

    PointCloud fine(rows, cols, L);
    BackgroundField fbg(rows, cols, L);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            std::size_t ci = i / n_bin, cj = j / n_bin;
            for (std::size_t l = 0; l < L; ++l) fbg(i, j, l) = bg(ci, cj, l) / divisor(ci, cj, l);
            for (PointId q : coarse.at_pixel(ci, cj)) {
                Point p = coarse[q];
                p.x = std::uint32_t(i);
                p.y = std::uint32_t(j);
                for (std::size_t l = 0; l < L; ++l) p.m[l] -= std::log(divisor(ci, cj, l));
                fine.add(std::move(p));
            }
        }
    return {std::move(fine), std::move(fbg)};
}

std::pair<PointCloud, BackgroundField> upsample(const PointCloud& coarse, const BackgroundField& bg,
                                                std::size_t n_bin, std::size_t rows, std::size_t cols,
                                                bool rescale) {
    return upsample(coarse, bg, n_bin, rows, cols, rescale, nullptr);
}

MultiresResult run_multires(const LidarCube& cube, const SamplingMask& mask, const ImpulseResponse& irf,
                            const MultiresConfig& cfg, const ScaleCallback& on_scale) {
    cfg.validate();
    validate_pairing(cube, mask);
    const auto& d = cube.dims();
    if (irf.bands() != d.bands) throw ValidationError("impulse response band count differs from the cube");
    const auto factors = cfg.schedule.factors();

    MultiresResult out;
    PointCloud prev_cloud;
    BackgroundField prev_bg;
    std::size_t prev_factor = 0;

    for (std::size_t k = 0; k < factors.size(); ++k) {
        const std::size_t f = factors[k];
        LidarCube zk;
        SamplingMask gk;
        if (f > 1) {
            auto binned = bin_pixels(cube, mask, f);
            zk = std::move(binned.first);
            gk = std::move(binned.second);
        } else {
            zk = cube;
            gk = mask;
        }
        const auto& dk = zk.dims();

        ChainSetup setup;
        setup.cube = &zk;
        setup.mask = &gk;
        setup.irf = &irf;
        setup.hyper = table_hyper(d.rows, d.cols, f, cfg.schedule.n_bin, cfg.schedule.pitch_ratio);
        setup.moves = cfg.moves;
        setup.scales = cfg.scales;
        setup.logdet_radius = cfg.logdet_radius;

        PointCloud init;
        BackgroundField init_bg;
        if (k == 0) {
            GammaFit ni = non_informative_gamma();
            setup.prior = GammaHyper::constant(dk.rows, dk.cols, dk.bands, ni.k, ni.theta);
            setup.sbr.assign(dk.bands, cfg.initial_sbr);
            init = PointCloud(dk.rows, dk.cols, dk.bands);
            init_bg = BackgroundField(dk.rows, dk.cols, dk.bands, 1.0);
            Rng rng = make_rng(cfg.seed, 1000);
            gibbs_background_step(zk, init, init_bg, setup.prior, gk, irf, rng);
        } else {
            std::size_t ratio = prev_factor / f;
            auto up = upsample(prev_cloud, prev_bg, ratio, dk.rows, dk.cols, cfg.rescale_upsample, &gk);
            init = std::move(up.first);
            init_bg = std::move(up.second);
            if (!strauss_valid(init, setup.hyper.d_min)) throw NumericalError("upsampled cloud violates the hard-core");
            Rng rng = make_rng(cfg.seed, 1000 + k);
            StrippedCounts stripped = strip_signal_photons(zk, init, irf, gk);
            LatentBackground latent = sample_latent_background(stripped, cfg.empirical_bayes, gk, rng);
            setup.prior = fit_gamma_field(latent, cfg.fit_rule);
            setup.sbr = estimate_sbr(zk, init, init_bg, irf, gk, cfg.sbr_limits);
        }

        ChainConfig cc;
        cc.n_iter = cfg.schedule.iterations[k];
        cc.n_burnin = std::size_t(std::floor(cfg.schedule.burnin_fraction * double(cc.n_iter)));
        cc.moves_per_iteration = cfg.moves_per_iteration;
        cc.seed = mix_seed(cfg.seed, k + 1);
        cc.adapt = cfg.adapt;
        ChainResult chain = run_chains(setup, init, init_bg, cc, cfg.chains);

        ScaleResult sr;
        sr.factor = f;
        sr.hyper = setup.hyper;
        sr.sbr = setup.sbr;
        sr.cloud = chain.map_cloud;
        sr.background = chain.mmse_background;
        sr.chain = std::move(chain);
        prev_cloud = sr.cloud;
        prev_bg = sr.background;
        prev_factor = f;
        if (on_scale) on_scale(sr);
        out.scales.push_back(std::move(sr));
    }
    out.cloud = prev_cloud;
    out.background = prev_bg;
    return out;
}

} // namespace msl
