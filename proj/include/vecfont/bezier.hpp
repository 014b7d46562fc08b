#pragma once

#include <array>
#include <vector>

#include "vecfont/glyph.hpp"

namespace vecfont {

struct CubicBezier {
    std::array<Vec2, 4> p;  // p1..p4 in canvas units
};

// Interior sample parameters for the curve alignment distance.
// Strictly increasing values in (0,1).
struct AuxParams {
    std::vector<double> r_values;

    // k uniformly spaced interior parameters i/(k+1), i = 1..k.
    static AuxParams uniform(int k);
};

// Bernstein basis weights of degree 3 at parameter r.
std::array<double, 4> bernstein3(double r);

// Lifts a Line or Curve to a cubic. A line from a to b becomes the cubic
// with control points uniformly distributed on the segment:
// (a, a + (b-a)/3, a + 2(b-a)/3, b). The command may be in either
// representation; a compact Line/Curve has no explicit starting point, so
// lifting requires the relaxed form (slot 0 carries the start).
CubicBezier as_cubic(const DrawCommand& c);

// Bernstein-form evaluation at r in [0,1].
Vec2 eval(const CubicBezier& b, double r);

// Sum over aux parameters of the squared Euclidean distance between the two
// lifted cubics.
double alignment_distance(const DrawCommand& pred, const DrawCommand& gt, const AuxParams& aux);

// Recursive subdivision until the control polygon deviates from the chord by
// less than tol. Endpoints are preserved exactly.
std::vector<Vec2> flatten(const CubicBezier& b, double tol);

}  // namespace vecfont
