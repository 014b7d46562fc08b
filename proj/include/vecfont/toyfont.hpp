#pragma once

#include <random>
#include <string>
#include <vector>

#include "vecfont/glyph.hpp"
#include "vecfont/raster.hpp"

namespace vecfont {

// Parametric 8-class toy alphabet: box, O-ring, L, T, S-curve, triangle, U, H.
// O and H are multi-contour; S and U are curve-heavy. Every glyph fits in 17
// commands.
inline constexpr int kToyClasses = 8;
const char* toy_class_name(int cls);

struct ToyStyle {
    double stroke = 0.16;     // bar/ring thickness
    double slant = 0.0;       // x shear per unit y, applied around the canvas center
    double roundness = 0.0;   // corner rounding fraction
    double aspect = 1.0;      // horizontal scale about the canvas center
};

ToyStyle sample_style(std::mt19937_64& rng);

// Compact glyph of one class in the given style, normalized through the SVG
// parser (canonical subpath order, closed outlines).
Glyph toy_glyph(int cls, const ToyStyle& style);

struct ToyDataset {
    std::vector<Font> fonts;                       // compact glyphs
    std::vector<std::vector<RasterImage>> images;  // [font][class]
    int resolution = 0;
};

struct DatasetSplits {
    ToyDataset train;
    ToyDataset test;
};

// Deterministic in seed. Fonts are split 90/10 by font (at least one test
// font); images are rasterized at the given resolution.
DatasetSplits gen_dataset(uint64_t seed, int n_fonts, int resolution);

void save_dataset(const DatasetSplits& splits, const std::string& dir);
DatasetSplits load_dataset(const std::string& dir);

}  // namespace vecfont
