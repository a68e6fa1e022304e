#pragma once

#include <filesystem>
#include <span>

#include "transinv/sensitivity.hpp"

namespace transinv::sens {

// <stem>.csv with header "dx,dy,value" (one row per cell) and <stem>.json
// holding class, tap, metric, vector_dim, sample_count, degenerate_count,
// max_shift and seed.
void write_map(const SensitivityMap& map, const std::filesystem::path& stem);

// Reads <stem>.csv and its <stem>.json sidecar. Throws Error on a malformed
// file, a missing cell or a duplicated one.
SensitivityMap read_map(const std::filesystem::path& csv_path);

// Plain PGM (P2). Values in [vmin, vmax] map linearly onto 0..255.
void write_pgm(std::span<const double> values, int width, int height, const std::filesystem::path& path,
               double vmin, double vmax);
// Map rendered with dy as the row index, scaled over its own value range.
void write_pgm(const SensitivityMap& map, const std::filesystem::path& path);

// Header "radius,mean,count".
void write_profile_csv(const RadialProfile& profile, const std::filesystem::path& path);
RadialProfile read_profile_csv(const std::filesystem::path& path);

}  // namespace transinv::sens
