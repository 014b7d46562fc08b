#pragma once

#include <string>

#include "vecfont/raster.hpp"

namespace vecfont {

// Binary PGM (P5, maxval 255).
void save_pgm(const RasterImage& img, const std::string& path);
RasterImage load_pgm(const std::string& path);

// 8-bit grayscale PNG.
void save_png(const RasterImage& img, const std::string& path);

}  // namespace vecfont
