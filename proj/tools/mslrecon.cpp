#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "msl/codes.hpp"
#include "msl/config.hpp"
#include "msl/errors.hpp"
#include "msl/io.hpp"
#include "msl/metrics.hpp"
#include "msl/multires.hpp"
#include "msl/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kNumerical = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir.empty() ? std::string(".") : dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw msl::ValidationError("cannot create output directory " + dir);
    return p;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw msl::ValidationError("cannot write " + p.string());
    return os;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw msl::ValidationError("bad number in list: '" + item + "'");
        }
    }
    return out;
}

msl::SamplingMask make_mask(const std::string& code, const msl::CubeDims& d, std::size_t w, std::uint64_t seed) {
    msl::CodeDesignSpec spec;
    spec.rows = d.rows;
    spec.cols = d.cols;
    spec.bands = d.bands;
    spec.w = w;
    spec.seed = seed;
    spec.validate();
    if (code == "blue-noise") return msl::design_blue_noise(spec).mask;
    if (code == "random-pixel") return msl::random_code_per_pixel(spec);
    if (code == "random-band") return msl::random_code_per_band(spec);
    if (code == "full") return msl::SamplingMask(d.rows, d.cols, d.bands, true);
    throw msl::ValidationError("unknown mask code '" + code + "'");
}

// ---------------------------------------------------------------------------------------------

struct SimulateArgs {
    std::string mask, code = "full";
    std::size_t w = 0;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
    msl::SceneSpec spec = c.config.empty() ? msl::desk_scene_spec() : msl::parse_scene_spec(msl::read_text_file(c.config));
    const std::uint64_t seed = c.seed.value_or(1);
    auto scene = msl::make_scene(spec);
    const auto& d = scene.dims;

    msl::SamplingMask mask;
    if (!a.mask.empty()) {
        mask = msl::read_mask_csv(a.mask);
        if (mask.rows() != d.rows || mask.cols() != d.cols || mask.bands() != d.bands)
            throw msl::ValidationError("mask dimensions do not match the scene");
    } else {
        mask = make_mask(a.code, d, a.w ? a.w : d.bands, msl::mix_seed(seed, 1));
    }
    auto cube = msl::render_cube(scene.truth, scene.background, scene.irf, mask, d.bins, seed);

    auto out = prepare_out(c.out_dir);
    msl::write_cube_binary(out / "cube.bin", cube, &mask);
    msl::write_mask_csv(out / "mask.csv", mask);
    msl::write_irf_csv(out / "irf.csv", scene.irf);
    msl::write_points_csv(out / "truth.csv", scene.truth);
    msl::write_background_csv(out / "truth_background.csv", scene.background);
    open_out(out / "scene.json") << msl::to_json(spec) << "\n";
    std::printf("simulated %zux%zux%zux%zu cube: %llu photons, %zu ground-truth points -> %s\n", d.rows, d.cols,
                d.bands, d.bins, static_cast<unsigned long long>(cube.total_photons()), scene.truth.size(),
                out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------------------------

struct DesignArgs {
    std::string method = "blue-noise";
};

int cmd_design_mask(const Common& c, const DesignArgs& a) {
    msl::CodeDesignSpec spec = c.config.empty() ? msl::CodeDesignSpec{} : msl::parse_code_spec(msl::read_text_file(c.config));
    if (c.seed) spec.seed = *c.seed;
    spec.validate();
    msl::SamplingMask mask;
    if (a.method == "blue-noise")
        mask = msl::design_blue_noise(spec).mask;
    else if (a.method == "random-pixel")
        mask = msl::random_code_per_pixel(spec);
    else if (a.method == "random-band")
        mask = msl::random_code_per_band(spec);
    else
        throw msl::ValidationError("unknown method '" + a.method + "'");
    const double objective = msl::local_variance(mask, spec.radius, spec.weights);
    auto out = prepare_out(c.out_dir);
    msl::write_mask_csv(out / "mask.csv", mask);
    json report = {{"method", a.method}, {"objective", objective}, {"spec", json::parse(msl::to_json(spec))}};
    open_out(out / "objective.json") << report.dump(2) << "\n";
    std::printf("%s mask %zux%zu, %zu bands, W=%zu: objective %.10g -> %s\n", a.method.c_str(), spec.rows, spec.cols,
                spec.bands, spec.w, objective, (out / "mask.csv").string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------------------------

struct ReconstructArgs {
    std::string cube, mask, irf;
    std::optional<std::size_t> scales, chains;
    std::string iters;
};

int cmd_reconstruct(const Common& c, const ReconstructArgs& a) {
    msl::RunConfig cfg;
    if (!c.config.empty()) cfg = msl::parse_run_config(msl::read_text_file(c.config));
    auto& m = cfg.multires;
    if (c.seed) m.seed = *c.seed;
    if (a.scales) {
        m.schedule.n_scales = *a.scales;
        if (a.iters.empty() && m.schedule.iterations.size() != *a.scales) {
            // keep the finest entries of the configured schedule
            auto& it = m.schedule.iterations;
            std::vector<std::size_t> v(*a.scales, it.empty() ? 100 : it.front());
            for (std::size_t k = 0; k < std::min(v.size(), it.size()); ++k)
                v[v.size() - 1 - k] = it[it.size() - 1 - k];
            it = v;
        }
    }
    if (!a.iters.empty()) {
        m.schedule.iterations.clear();
        for (double v : parse_list(a.iters)) {
            if (v < 0 || v != double(std::size_t(v))) throw msl::ValidationError("--iters takes whole numbers");
            m.schedule.iterations.push_back(std::size_t(v));
        }
        if (!a.scales) m.schedule.n_scales = m.schedule.iterations.size();
    }
    if (a.chains) m.chains = *a.chains;
    if (!a.cube.empty()) cfg.paths.cube = a.cube;
    if (!a.mask.empty()) cfg.paths.mask = a.mask;
    if (!a.irf.empty()) cfg.paths.irf = a.irf;
    std::string out_dir = c.out_dir.empty() ? cfg.paths.out_dir : c.out_dir;
    if (out_dir.empty()) out_dir = ".";
    if (cfg.paths.cube.empty() || cfg.paths.irf.empty()) throw msl::ValidationError("a cube and an IRF are required");
    m.validate();

    auto [cube, embedded] = msl::read_cube(cfg.paths.cube);
    msl::SamplingMask mask;
    if (!cfg.paths.mask.empty())
        mask = msl::read_mask_csv(cfg.paths.mask);
    else if (embedded)
        mask = *embedded;
    else
        mask = msl::SamplingMask(cube.dims().rows, cube.dims().cols, cube.dims().bands, true);
    msl::validate_pairing(cube, mask);
    auto irf = msl::read_irf_csv(cfg.paths.irf);
    if (irf.bands() != cube.dims().bands) throw msl::ValidationError("IRF band count does not match the cube");

    auto out = prepare_out(out_dir);
    json diag = {{"config", json::parse(msl::to_json(cfg))}, {"scales", json::array()}};
    std::size_t k = 0;
    auto res = msl::run_multires(cube, mask, irf, m, [&](const msl::ScaleResult& s) {
        ++k;
        json stats = json::object();
        for (auto kind : msl::kAllMoves) {
            auto i = std::size_t(kind);
            stats[std::string(msl::move_name(kind))] = {{"proposed", s.chain.stats.proposed[i]},
                                                        {"accepted", s.chain.stats.accepted[i]}};
        }
        diag["scales"].push_back({{"factor", s.factor},
                                  {"points", s.cloud.size()},
                                  {"map_log_posterior", s.chain.map_log_posterior},
                                  {"sbr", s.sbr},
                                  {"gamma_a", s.hyper.gamma_a},
                                  {"lambda_a", s.hyper.lambda_a},
                                  {"sigma2", s.hyper.sigma2},
                                  {"n_b", s.hyper.n_b},
                                  {"d_min", s.hyper.d_min},
                                  {"moves", stats}});
        auto trace = open_out(out / ("trace_scale" + std::to_string(k) + ".csv"));
        msl::write_trace_csv(trace, s.chain.trace);
        std::printf("scale %zu (binning %zu): %zu points\n", k, s.factor, s.cloud.size());
        std::fflush(stdout);
    });

    msl::write_points_csv(out / "points.csv", res.cloud);
    msl::write_points_ply(out / "points.ply", res.cloud);
    msl::write_background_csv(out / "background.csv", res.background);
    open_out(out / "diagnostics.json") << diag.dump(2) << "\n";
    std::printf("reconstructed %zu points -> %s\n", res.cloud.size(), out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------------------------

struct EvaluateArgs {
    std::string est, gt, irf, est_bg, gt_bg;
    std::string taus = "0,1,2,3,4,5,6,7,8,9,10";
    std::size_t rows = 0, cols = 0;
    double depth_tau = 3.0;
};

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
    std::optional<msl::BackgroundField> bg_est, bg_gt;
    if (!a.est_bg.empty()) bg_est = msl::read_background_csv(a.est_bg);
    if (!a.gt_bg.empty()) bg_gt = msl::read_background_csv(a.gt_bg);
    std::size_t rows = a.rows, cols = a.cols;
    if ((!rows || !cols) && bg_gt) {
        rows = bg_gt->rows();
        cols = bg_gt->cols();
    }
    if (!rows || !cols) throw msl::ValidationError("image size unknown: give --rows/--cols or --gt-background");
    auto est = msl::read_points_csv(a.est, rows, cols);
    auto gt = msl::read_points_csv(a.gt, rows, cols);
    if (est.bands() != gt.bands() && !est.empty() && !gt.empty())
        throw msl::ValidationError("estimate and ground truth have different band counts");
    auto irf = msl::read_irf_csv(a.irf);
    if (!gt.empty() && irf.bands() != gt.bands()) throw msl::ValidationError("IRF band count does not match the points");
    if (bg_est.has_value() != bg_gt.has_value())
        throw msl::ValidationError("give both --est-background and --gt-background, or neither");
    auto taus = parse_list(a.taus);
    auto rep = msl::evaluate(est, gt, irf, taus, bg_est ? &*bg_est : nullptr, bg_gt ? &*bg_gt : nullptr, a.depth_tau);

    auto out = prepare_out(c.out_dir);
    auto csv = open_out(out / "report.csv");
    msl::write_report_csv(csv, rep);
    auto txt = open_out(out / "summary.txt");
    msl::write_report_summary(txt, rep);
    msl::write_report_summary(std::cout, rep);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mslrecon: multispectral single-photon Lidar reconstruction"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* s, const std::string& config_help) {
        s->add_option("--config", common.config, config_help)->check(CLI::ExistingFile);
        s->add_option("--seed", common.seed, "master random seed");
        s->add_option("--out-dir", common.out_dir, "output directory");
    };

    SimulateArgs sim;
    auto* s_sim = app.add_subcommand("simulate", "render a synthetic scene into a photon cube");
    add_common(s_sim, "scene specification (JSON); default is the desk scene");
    s_sim->add_option("--mask", sim.mask, "sampling mask CSV")->check(CLI::ExistingFile);
    s_sim->add_option("--code", sim.code, "mask when none is given: full, random-pixel, random-band, blue-noise");
    s_sim->add_option("--w", sim.w, "bands observed per pixel for generated masks");

    DesignArgs des;
    auto* s_des = app.add_subcommand("design-mask", "design a subsampling mask");
    add_common(s_des, "mask design specification (JSON)");
    s_des->add_option("--method", des.method, "blue-noise, random-pixel or random-band");

    ReconstructArgs rec;
    auto* s_rec = app.add_subcommand("reconstruct", "multiresolution RJ-MCMC reconstruction");
    add_common(s_rec, "run configuration (JSON)");
    s_rec->add_option("--cube", rec.cube, "photon cube (binary or event CSV)")->check(CLI::ExistingFile);
    s_rec->add_option("--mask", rec.mask, "sampling mask CSV")->check(CLI::ExistingFile);
    s_rec->add_option("--irf", rec.irf, "impulse response CSV")->check(CLI::ExistingFile);
    s_rec->add_option("--scales", rec.scales, "number of resolution scales");
    s_rec->add_option("--iters", rec.iters, "sweeps per scale, coarse to fine, comma separated");
    s_rec->add_option("--chains", rec.chains, "independent chains per scale");

    EvaluateArgs ev;
    auto* s_ev = app.add_subcommand("evaluate", "compare a reconstruction with ground truth");
    s_ev->add_option("--out-dir", common.out_dir, "output directory");
    s_ev->add_option("--est", ev.est, "estimated points CSV")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--gt", ev.gt, "ground-truth points CSV")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--irf", ev.irf, "impulse response CSV")->required()->check(CLI::ExistingFile);
    s_ev->add_option("--est-background", ev.est_bg, "estimated background CSV")->check(CLI::ExistingFile);
    s_ev->add_option("--gt-background", ev.gt_bg, "true background CSV")->check(CLI::ExistingFile);
    s_ev->add_option("--tau", ev.taus, "distance thresholds in bins, comma separated");
    s_ev->add_option("--depth-tau", ev.depth_tau, "threshold of the depth error");
    s_ev->add_option("--rows", ev.rows, "image rows");
    s_ev->add_option("--cols", ev.cols, "image columns");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*s_sim) return cmd_simulate(common, sim);
        if (*s_des) return cmd_design_mask(common, des);
        if (*s_rec) return cmd_reconstruct(common, rec);
        if (*s_ev) return cmd_evaluate(common, ev);
    } catch (const msl::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    } catch (const msl::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumerical;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    }
    return kOk;
}
