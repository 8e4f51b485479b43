#pragma once

#include <filesystem>

#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Binary PGM (P5), 8- or 16-bit, mapped linearly to [0,1].
// 16-bit samples are most-significant-byte-first per the netpbm convention.

Mat read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Mat& values, int bit_depth = 8);

// Binary PPM (P6), 8-bit, for overlay renders.
void write_ppm(const std::filesystem::path& path, const Mat& red, const Mat& green,
               const Mat& blue);

}  // namespace bodyfit
