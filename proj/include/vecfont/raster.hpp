#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecfont/glyph.hpp"

namespace vecfont {

// Square grayscale image, row-major, origin top-left, intensities in [0,1].
struct RasterImage {
    int resolution = 0;
    std::vector<double> pixels;

    RasterImage() = default;
    explicit RasterImage(int res) : resolution(res), pixels(static_cast<size_t>(res) * res, 0.0) {}

    double& at(int row, int col) { return pixels[static_cast<size_t>(row) * resolution + col]; }
    double at(int row, int col) const { return pixels[static_cast<size_t>(row) * resolution + col]; }
};

enum class FillRule { NonZero, EvenOdd };

// Flattens the glyph outlines (tolerance 0.25 px) into closed polylines, one
// per subpath. Open subpaths are closed back to their Move point.
std::vector<std::vector<Vec2>> outline_polylines(const Glyph& g, double flatten_tol);

// Scanline fill with pixel-center sampling: filled = 1, empty = 0.
RasterImage rasterize(const Glyph& g, int resolution, FillRule fill_rule = FillRule::NonZero);

// 2x2 supersampled coverage, for export only.
RasterImage rasterize_supersampled(const Glyph& g, int resolution, FillRule fill_rule = FillRule::NonZero);

// Mean per-pixel absolute difference.
double l1_error(const RasterImage& a, const RasterImage& b);

// Intersection-over-union of the thresholded foregrounds (intensity >=
// threshold). Defined as 1 when both foregrounds are empty.
double iou(const RasterImage& a, const RasterImage& b, double threshold = 0.5);

}  // namespace vecfont
