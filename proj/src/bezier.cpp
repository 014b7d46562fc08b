#include "vecfont/bezier.hpp"

#include <algorithm>
#include <cmath>

namespace vecfont {

AuxParams AuxParams::uniform(int k) {
    AuxParams a;
    for (int i = 1; i <= k; ++i) a.r_values.push_back(static_cast<double>(i) / (k + 1));
    return a;
}

std::array<double, 4> bernstein3(double r) {
    const double s = 1.0 - r;
    return {s * s * s, 3.0 * r * s * s, 3.0 * r * r * s, r * r * r};
}

CubicBezier as_cubic(const DrawCommand& c) {
    if (c.cmd == CommandType::CurveFromTo) {
        return {{c.point(0), c.point(1), c.point(2), c.point(3)}};
    }
    if (c.cmd == CommandType::LineFromTo) {
        const Vec2 a = c.start();
        const Vec2 b = c.end();
        const Vec2 d = b - a;
        return {{a, a + (1.0 / 3.0) * d, a + (2.0 / 3.0) * d, b}};
    }
    throw UnsupportedCommandError(std::string("as_cubic: '") + command_name(c.cmd) +
                                  "' is not a line or curve");
}

Vec2 eval(const CubicBezier& b, double r) {
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("bezier parameter outside [0,1]");
    const auto w = bernstein3(r);
    // balanced summation keeps the line-as-cubic case exact to a few ulp
    const double x = (w[0] * b.p[0].x + w[1] * b.p[1].x) + (w[2] * b.p[2].x + w[3] * b.p[3].x);
    const double y = (w[0] * b.p[0].y + w[1] * b.p[1].y) + (w[2] * b.p[2].y + w[3] * b.p[3].y);
    return {x, y};
}

double alignment_distance(const DrawCommand& pred, const DrawCommand& gt, const AuxParams& aux) {
    const CubicBezier bp = as_cubic(pred);
    const CubicBezier bg = as_cubic(gt);
    double total = 0.0;
    for (double r : aux.r_values) {
        const Vec2 d = eval(bp, r) - eval(bg, r);
        total += d.x * d.x + d.y * d.y;
    }
    return total;
}

namespace {

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    const Vec2 q = a + t * ab;
    return std::hypot(p.x - q.x, p.y - q.y);
}

void split(const CubicBezier& b, CubicBezier& left, CubicBezier& right) {
    const Vec2 p01 = 0.5 * (b.p[0] + b.p[1]);
    const Vec2 p12 = 0.5 * (b.p[1] + b.p[2]);
    const Vec2 p23 = 0.5 * (b.p[2] + b.p[3]);
    const Vec2 p012 = 0.5 * (p01 + p12);
    const Vec2 p123 = 0.5 * (p12 + p23);
    const Vec2 mid = 0.5 * (p012 + p123);
    left = {{b.p[0], p01, p012, mid}};
    right = {{mid, p123, p23, b.p[3]}};
}

void flatten_rec(const CubicBezier& b, double tol, int depth, std::vector<Vec2>& out) {
    const double dev = std::max(point_segment_distance(b.p[1], b.p[0], b.p[3]),
                                point_segment_distance(b.p[2], b.p[0], b.p[3]));
    if (dev < tol || depth >= 24) {
        out.push_back(b.p[3]);
        return;
    }
    CubicBezier l, r;
    split(b, l, r);
    flatten_rec(l, tol, depth + 1, out);
    flatten_rec(r, tol, depth + 1, out);
}

}  // namespace

std::vector<Vec2> flatten(const CubicBezier& b, double tol) {
    if (!(tol > 0.0)) throw DomainError("flatten tolerance must be positive");
    std::vector<Vec2> out{b.p[0]};
    flatten_rec(b, tol, 0, out);
    out.back() = b.p[3];  // exact endpoint regardless of subdivision arithmetic
    return out;
}

}  // namespace vecfont
