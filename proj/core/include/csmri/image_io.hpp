#pragma once

#include "csmri/kspace.hpp"

#include <filesystem>

namespace csmri {

// 8-bit binary PGM, linearly mapping [lo, hi] to [0, 255] with clamping.
void write_pgm(std::filesystem::path const &path, RealArray const &img, double lo, double hi);

// Maps [min, max] of the image itself.
void write_pgm(std::filesystem::path const &path, RealArray const &img);

} // namespace csmri
