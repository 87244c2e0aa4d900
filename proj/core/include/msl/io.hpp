#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"
#include "msl/model.hpp"

namespace msl {

// Binary cube: "MSLCUBE1", u32 rows, cols, bands, bins, u8 mask flag (+ one byte per pixel-band),
// u64 record count, then u32 records (i, j, band, bin, count). Little-endian.
void write_cube_binary(const std::filesystem::path& path, const LidarCube& cube, const SamplingMask* mask = nullptr);
std::pair<LidarCube, std::optional<SamplingMask>> read_cube_binary(const std::filesystem::path& path);

// Event CSV: "msl-events,R,C,L,T" then i,j,band,bin,count lines.
void write_cube_csv(const std::filesystem::path& path, const LidarCube& cube);
LidarCube read_cube_csv(const std::filesystem::path& path);

// binary or CSV chosen by content
std::pair<LidarCube, std::optional<SamplingMask>> read_cube(const std::filesystem::path& path);

// Mask CSV: "msl-mask,R,C,L" then i,j,bits lines; bits is one 0/1 character per band.
void write_mask_csv(const std::filesystem::path& path, const SamplingMask& mask);
SamplingMask read_mask_csv(const std::filesystem::path& path);

// Impulse response CSV: "band,offset,value" with consecutive offsets per band.
void write_irf_csv(const std::filesystem::path& path, const ImpulseResponse& irf);
ImpulseResponse read_irf_csv(const std::filesystem::path& path);

// Point CSV: "x,y,t,m_1..m_L" with log-intensities.
void write_points_csv(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_points_csv(const std::filesystem::path& path, std::size_t rows, std::size_t cols);
// ASCII PLY with vertex x, y, t and intensities r_1..r_L
void write_points_ply(const std::filesystem::path& path, const PointCloud& cloud);

// Background CSV: "msl-background,R,C,L" then band,row,v_0..v_{C-1} lines.
void write_background_csv(const std::filesystem::path& path, const BackgroundField& bg);
BackgroundField read_background_csv(const std::filesystem::path& path);

} // namespace msl
