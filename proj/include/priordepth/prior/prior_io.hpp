#pragma once

#include <filesystem>

#include "priordepth/prior/types.hpp"

namespace priordepth {

// Text format: one header line "x,y,depth" then one "x,y,depth" record per
// point; pixel coordinates at the stated image resolution, depth in meters.
void write_prior_csv(const std::filesystem::path& path, const SparsePrior& prior);

// Throws DataError naming file and line on any malformed record.
SparsePrior read_prior_csv(const std::filesystem::path& path);

}  // namespace priordepth
