#include "msl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "msl/errors.hpp"

namespace msl {

using nlohmann::json;

namespace {

class Obj {
public:
    Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ValidationError(where_ + " must be an object");
    }
    ~Obj() = default;

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ValidationError(where_ + "." + key + " has the wrong type");
        }
    }
    void get_size(const char* key, std::size_t& out) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
            throw ValidationError(where_ + "." + key + " must be a non-negative integer");
        out = it->template get<std::size_t>();
    }
    void get_real(const char* key, double& out) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_number()) throw ValidationError(where_ + "." + key + " must be a number");
        out = it->template get<double>();
    }
    const json* child(const char* key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    template <class E>
    void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
        std::string s;
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_string()) throw ValidationError(where_ + "." + key + " must be a string");
        s = it->template get<std::string>();
        for (const auto& [n, v] : names)
            if (s == n) {
                out = v;
                return;
            }
        throw ValidationError(where_ + "." + key + ": unknown value '" + s + "'");
    }
    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ValidationError("unknown key " + where_ + "." + it.key());
    }
    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

void read_moves(Obj o, MoveProbabilities& m) {
    o.get_real("birth_family", m.birth_family);
    o.get_real("birth", m.birth);
    o.get_real("dilation_family", m.dilation_family);
    o.get_real("dilation", m.dilation);
    o.get_real("shift", m.shift);
    o.get_real("mark", m.mark);
    o.get_real("split_family", m.split_family);
    o.get_real("split", m.split);
    o.done();
}

void read_surface(Obj o, SurfaceSpec& s) {
    o.get_enum("kind", s.kind, {{"plane", SurfaceSpec::Kind::plane}, {"steps", SurfaceSpec::Kind::steps}});
    o.get("row0", s.row0);
    o.get("row1", s.row1);
    o.get("col0", s.col0);
    o.get("col1", s.col1);
    o.get_real("depth", s.depth);
    o.get_real("slope_row", s.slope_row);
    o.get_real("slope_col", s.slope_col);
    o.get_size("steps", s.steps);
    o.get_real("step_depth", s.step_depth);
    o.get("reflectivity", s.reflectivity);
    o.get_real("texture", s.texture);
    o.get_real("texture_period", s.texture_period);
    o.get_real("opacity", s.opacity);
    o.done();
}

const char* kind_name(SurfaceSpec::Kind k) { return k == SurfaceSpec::Kind::plane ? "plane" : "steps"; }

} // namespace

RunConfig parse_run_config(const std::string& text) {
    json j = parse(text);
    RunConfig cfg;
    auto& m = cfg.multires;
    Obj top(j, "config");
    top.get("seed", m.seed);
    top.get_size("chains", m.chains);
    top.get("upsample_rescale", m.rescale_upsample);
    if (auto* s = top.child("schedule")) {
        Obj o(*s, "config.schedule");
        o.get_size("scales", m.schedule.n_scales);
        o.get_size("n_bin", m.schedule.n_bin);
        o.get_real("pitch_ratio", m.schedule.pitch_ratio);
        o.get("iterations", m.schedule.iterations);
        o.get_real("burnin_fraction", m.schedule.burnin_fraction);
        o.done();
    }
    if (auto* s = top.child("moves")) read_moves(Obj(*s, "config.moves"), m.moves);
    if (auto* s = top.child("proposal")) {
        Obj o(*s, "config.proposal");
        o.get_real("mark_variance", m.scales.mark_variance);
        o.get_real("shift_variance", m.scales.shift_variance);
        o.get_real("split_eta", m.scales.split_eta);
        o.get("adapt", m.adapt);
        o.done();
    }
    if (auto* s = top.child("chain")) {
        Obj o(*s, "config.chain");
        o.get_size("moves_per_iteration", m.moves_per_iteration);
        o.get("logdet_radius", m.logdet_radius);
        o.done();
    }
    if (auto* s = top.child("empirical_bayes")) {
        Obj o(*s, "config.empirical_bayes");
        auto& e = m.empirical_bayes;
        o.get_real("alpha", e.alpha);
        o.get_enum("operator", e.op,
                   {{"laplacian", SmoothingOperator::laplacian}, {"identity", SmoothingOperator::identity}});
        o.get_size("samples", e.samples);
        o.get_size("burn_in", e.burn_in);
        o.get_real("ridge", e.ridge);
        o.get_enum("fit_rule", m.fit_rule,
                   {{"joint", GammaFitRule::joint}, {"fixed_scale", GammaFitRule::fixed_scale}});
        o.done();
    }
    if (auto* s = top.child("sbr")) {
        Obj o(*s, "config.sbr");
        o.get_real("initial", m.initial_sbr);
        o.get_real("min", m.sbr_limits.min);
        o.get_real("max", m.sbr_limits.max);
        o.done();
    }
    if (auto* s = top.child("paths")) {
        Obj o(*s, "config.paths");
        o.get("cube", cfg.paths.cube);
        o.get("mask", cfg.paths.mask);
        o.get("irf", cfg.paths.irf);
        o.get("out_dir", cfg.paths.out_dir);
        o.done();
    }
    top.done();
    m.validate();
    return cfg;
}

std::string to_json(const RunConfig& cfg) {
    const auto& m = cfg.multires;
    json j;
    j["seed"] = m.seed;
    j["chains"] = m.chains;
    j["upsample_rescale"] = m.rescale_upsample;
    j["schedule"] = {{"scales", m.schedule.n_scales},
                     {"n_bin", m.schedule.n_bin},
                     {"pitch_ratio", m.schedule.pitch_ratio},
                     {"iterations", m.schedule.iterations},
                     {"burnin_fraction", m.schedule.burnin_fraction}};
    j["moves"] = {{"birth_family", m.moves.birth_family}, {"birth", m.moves.birth},
                  {"dilation_family", m.moves.dilation_family}, {"dilation", m.moves.dilation},
                  {"shift", m.moves.shift}, {"mark", m.moves.mark},
                  {"split_family", m.moves.split_family}, {"split", m.moves.split}};
    j["proposal"] = {{"mark_variance", m.scales.mark_variance},
                     {"shift_variance", m.scales.shift_variance},
                     {"split_eta", m.scales.split_eta},
                     {"adapt", m.adapt}};
    j["chain"] = {{"moves_per_iteration", m.moves_per_iteration}, {"logdet_radius", m.logdet_radius}};
    j["empirical_bayes"] = {
        {"alpha", m.empirical_bayes.alpha},
        {"operator", m.empirical_bayes.op == SmoothingOperator::laplacian ? "laplacian" : "identity"},
        {"samples", m.empirical_bayes.samples},
        {"burn_in", m.empirical_bayes.burn_in},
        {"ridge", m.empirical_bayes.ridge},
        {"fit_rule", m.fit_rule == GammaFitRule::joint ? "joint" : "fixed_scale"}};
    j["sbr"] = {{"initial", m.initial_sbr}, {"min", m.sbr_limits.min}, {"max", m.sbr_limits.max}};
    j["paths"] = {{"cube", cfg.paths.cube}, {"mask", cfg.paths.mask}, {"irf", cfg.paths.irf},
                  {"out_dir", cfg.paths.out_dir}};
    return j.dump(2);
}

SceneSpec parse_scene_spec(const std::string& text) {
    json j = parse(text);
    SceneSpec s;
    Obj top(j, "scene");
    if (auto* d = top.child("dims")) {
        Obj o(*d, "scene.dims");
        o.get_size("rows", s.dims.rows);
        o.get_size("cols", s.dims.cols);
        o.get_size("bands", s.dims.bands);
        o.get_size("bins", s.dims.bins);
        o.done();
    }
    if (auto* a = top.child("surfaces")) {
        if (!a->is_array()) throw ValidationError("scene.surfaces must be an array");
        s.surfaces.clear();
        for (std::size_t k = 0; k < a->size(); ++k) {
            SurfaceSpec surf;
            read_surface(Obj((*a)[k], "scene.surfaces[" + std::to_string(k) + "]"), surf);
            s.surfaces.push_back(std::move(surf));
        }
    }
    if (auto* i = top.child("irf")) {
        Obj o(*i, "scene.irf");
        o.get_enum("shape", s.irf.shape,
                   {{"gaussian", IrfSpec::Shape::gaussian}, {"exp_modified", IrfSpec::Shape::exp_modified}});
        o.get("sigmas", s.irf.sigmas);
        o.get("taus", s.irf.taus);
        o.get("half_width", s.irf.half_width);
        o.get("right", s.irf.right);
        o.done();
    }
    if (auto* b = top.child("background")) {
        Obj o(*b, "scene.background");
        o.get_enum("mode", s.background_mode,
                   {{"passive", SceneSpec::BackgroundMode::passive}, {"constant", SceneSpec::BackgroundMode::constant}});
        o.get("levels", s.background_levels);
        o.done();
    }
    top.get_real("photons_per_pixel_band", s.photons_per_pixel_band);
    top.get_real("background_photons", s.background_photons);
    top.get_real("d_min", s.d_min);
    top.done();
    s.validate();
    return s;
}

std::string to_json(const SceneSpec& s) {
    json j;
    j["dims"] = {{"rows", s.dims.rows}, {"cols", s.dims.cols}, {"bands", s.dims.bands}, {"bins", s.dims.bins}};
    j["surfaces"] = json::array();
    for (const auto& f : s.surfaces)
        j["surfaces"].push_back({{"kind", kind_name(f.kind)},
                                 {"row0", f.row0},
                                 {"row1", f.row1},
                                 {"col0", f.col0},
                                 {"col1", f.col1},
                                 {"depth", f.depth},
                                 {"slope_row", f.slope_row},
                                 {"slope_col", f.slope_col},
                                 {"steps", f.steps},
                                 {"step_depth", f.step_depth},
                                 {"reflectivity", f.reflectivity},
                                 {"texture", f.texture},
                                 {"texture_period", f.texture_period},
                                 {"opacity", f.opacity}});
    j["irf"] = {{"shape", s.irf.shape == IrfSpec::Shape::gaussian ? "gaussian" : "exp_modified"},
                {"sigmas", s.irf.sigmas},
                {"taus", s.irf.taus},
                {"half_width", s.irf.half_width},
                {"right", s.irf.right}};
    j["background"] = {{"mode", s.background_mode == SceneSpec::BackgroundMode::passive ? "passive" : "constant"},
                       {"levels", s.background_levels}};
    j["photons_per_pixel_band"] = s.photons_per_pixel_band;
    j["background_photons"] = s.background_photons;
    j["d_min"] = s.d_min;
    return j.dump(2);
}

CodeDesignSpec parse_code_spec(const std::string& text) {
    json j = parse(text);
    CodeDesignSpec s;
    Obj o(j, "mask");
    o.get_size("rows", s.rows);
    o.get_size("cols", s.cols);
    o.get_size("bands", s.bands);
    o.get_size("w", s.w);
    o.get("radius", s.radius);
    o.get("weights", s.weights);
    o.get("seed", s.seed);
    o.get_size("sweeps", s.sweeps);
    o.done();
    s.validate();
    return s;
}

std::string to_json(const CodeDesignSpec& s) {
    json j = {{"rows", s.rows}, {"cols", s.cols}, {"bands", s.bands}, {"w", s.w},         {"radius", s.radius},
              {"weights", s.weights}, {"seed", s.seed}, {"sweeps", s.sweeps}};
    return j.dump(2);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace msl
