#pragma once

#include <filesystem>
#include <string>

#include "msl/codes.hpp"
#include "msl/multires.hpp"
#include "msl/simulator.hpp"

namespace msl {

struct RunPaths {
    std::string cube, mask, irf, out_dir;
};

struct RunConfig {
    MultiresConfig multires;
    RunPaths paths;
};

// JSON readers; unknown keys and wrong types throw ValidationError
RunConfig parse_run_config(const std::string& json_text);
SceneSpec parse_scene_spec(const std::string& json_text);
CodeDesignSpec parse_code_spec(const std::string& json_text);

std::string to_json(const RunConfig& cfg);
std::string to_json(const SceneSpec& spec);
std::string to_json(const CodeDesignSpec& spec);

std::string read_text_file(const std::filesystem::path& path);

} // namespace msl
