#include "vecfont/raster.hpp"

#include <algorithm>
#include <cmath>

#include "vecfont/bezier.hpp"

namespace vecfont {

std::vector<std::vector<Vec2>> outline_polylines(const Glyph& g, double flatten_tol) {
    const Glyph* compact = &g;
    Glyph merged;
    if (g.rep_kind == RepKind::Relaxed) {
        merged = merge_relaxed(g);
        compact = &merged;
    }

    std::vector<std::vector<Vec2>> polys;
    Vec2 pen{};
    Vec2 home{};
    auto close_current = [&](std::vector<Vec2>& poly) {
        if (poly.size() > 1) {
            if (poly.back().x != home.x || poly.back().y != home.y) poly.push_back(home);
            polys.push_back(std::move(poly));
        }
        poly.clear();
    };

    std::vector<Vec2> cur;
    for (const auto& c : compact->commands) {
        switch (c.cmd) {
            case CommandType::MoveFromTo:
                close_current(cur);
                home = pen = c.end();
                cur.push_back(pen);
                break;
            case CommandType::LineFromTo:
                cur.push_back(c.end());
                pen = c.end();
                break;
            case CommandType::CurveFromTo: {
                CubicBezier b{{pen, c.point(1), c.point(2), c.point(3)}};
                auto pts = flatten(b, flatten_tol);
                cur.insert(cur.end(), pts.begin() + 1, pts.end());
                pen = c.end();
                break;
            }
            case CommandType::EOS:
                break;
        }
    }
    close_current(cur);
    return polys;
}

namespace {

struct Crossing {
    double x;
    int dir;  // +1 edge goes downward in image coordinates, -1 upward
};

RasterImage rasterize_grid(const Glyph& g, int resolution, FillRule rule, int ss) {
    if (resolution <= 0) throw DomainError("rasterize: resolution must be positive");
    const int n = resolution * ss;
    const double tol = 0.25 / n;  // quarter-pixel flattening
    const auto polys = outline_polylines(g, tol);

    std::vector<double> coverage(static_cast<size_t>(n) * n, 0.0);
    std::vector<Crossing> crossings;
    for (int row = 0; row < n; ++row) {
        const double y = (row + 0.5) / n;
        crossings.clear();
        for (const auto& poly : polys) {
            for (size_t i = 0; i + 1 < poly.size(); ++i) {
                const Vec2 a = poly[i], b = poly[i + 1];
                if (a.y == b.y) continue;
                // half-open span avoids double-counting shared vertices
                if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y)) {
                    const double t = (y - a.y) / (b.y - a.y);
                    crossings.push_back({a.x + t * (b.x - a.x), b.y > a.y ? +1 : -1});
                }
            }
        }
        std::sort(crossings.begin(), crossings.end(),
                  [](const Crossing& l, const Crossing& r) { return l.x < r.x; });

        size_t k = 0;
        int winding = 0;
        for (int col = 0; col < n; ++col) {
            const double x = (col + 0.5) / n;
            while (k < crossings.size() && crossings[k].x <= x) winding += crossings[k++].dir;
            const bool inside = rule == FillRule::NonZero ? winding != 0 : (winding & 1) != 0;
            if (inside) coverage[static_cast<size_t>(row) * n + col] = 1.0;
        }
    }

    RasterImage img(resolution);
    if (ss == 1) {
        img.pixels = std::move(coverage);
        return img;
    }
    const double inv = 1.0 / (ss * ss);
    for (int r = 0; r < resolution; ++r)
        for (int c = 0; c < resolution; ++c) {
            double acc = 0.0;
            for (int dr = 0; dr < ss; ++dr)
                for (int dc = 0; dc < ss; ++dc)
                    acc += coverage[static_cast<size_t>(r * ss + dr) * n + (c * ss + dc)];
            img.at(r, c) = acc * inv;
        }
    return img;
}

}  // namespace

RasterImage rasterize(const Glyph& g, int resolution, FillRule fill_rule) {
    return rasterize_grid(g, resolution, fill_rule, 1);
}

RasterImage rasterize_supersampled(const Glyph& g, int resolution, FillRule fill_rule) {
    return rasterize_grid(g, resolution, fill_rule, 2);
}

double l1_error(const RasterImage& a, const RasterImage& b) {
    if (a.resolution != b.resolution)
        throw ShapeError("l1_error: resolution mismatch " + std::to_string(a.resolution) + " vs " +
                         std::to_string(b.resolution));
    if (a.pixels.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) acc += std::abs(a.pixels[i] - b.pixels[i]);
    return acc / static_cast<double>(a.pixels.size());
}

double iou(const RasterImage& a, const RasterImage& b, double threshold) {
    if (a.resolution != b.resolution)
        throw ShapeError("iou: resolution mismatch " + std::to_string(a.resolution) + " vs " +
                         std::to_string(b.resolution));
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("iou: threshold must lie in (0,1)");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const bool fa = a.pixels[i] >= threshold;
        const bool fb = b.pixels[i] >= threshold;
        inter += fa && fb;
        uni += fa || fb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace vecfont
