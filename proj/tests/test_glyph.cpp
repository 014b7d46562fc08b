#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vecfont/glyph.hpp"

using namespace vecfont;

namespace {

// random well-formed compact glyph; subpaths already in canonical order
Glyph random_compact(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coord(0.05, 0.95);
    std::uniform_int_distribution<int> n_paths(1, 3);
    std::uniform_int_distribution<int> n_segs(2, 5);
    std::uniform_int_distribution<int> seg_kind(0, 1);

    Glyph g;
    g.rep_kind = RepKind::Compact;
    std::vector<std::pair<Vec2, std::vector<DrawCommand>>> paths;
    const int np = n_paths(rng);
    for (int p = 0; p < np; ++p) {
        Vec2 mv{coord(rng), coord(rng)};
        std::vector<DrawCommand> segs;
        const int ns = n_segs(rng);
        for (int s = 0; s < ns; ++s) {
            if (seg_kind(rng)) {
                segs.push_back(make_command(CommandType::CurveFromTo, RepKind::Compact,
                                            {0, 0, coord(rng), coord(rng), coord(rng), coord(rng),
                                             coord(rng), coord(rng)}));
            } else {
                segs.push_back(make_command(CommandType::LineFromTo, RepKind::Compact,
                                            {0, 0, 0, 0, 0, 0, coord(rng), coord(rng)}));
            }
        }
        paths.push_back({mv, std::move(segs)});
    }
    std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) {
        return a.first.y != b.first.y ? a.first.y < b.first.y : a.first.x < b.first.x;
    });
    for (auto& [mv, segs] : paths) {
        g.commands.push_back(
            make_command(CommandType::MoveFromTo, RepKind::Compact, {0, 0, 0, 0, 0, 0, mv.x, mv.y}));
        for (auto& s : segs) g.commands.push_back(s);
    }
    g.update_extent();
    return g;
}

bool same_geometry(const Glyph& a, const Glyph& b, double tol) {
    if (a.commands.size() != b.commands.size()) return false;
    for (size_t i = 0; i < a.commands.size(); ++i) {
        if (a.commands[i].cmd != b.commands[i].cmd) return false;
        for (int j = 0; j < 8; ++j)
            if (std::abs(a.commands[i].pts[j] - b.commands[i].pts[j]) > tol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("parse unit square") {
    Glyph g = parse_svg_path("M 0 0 L 64 0 L 64 64 L 0 64 Z", 64.0);
    REQUIRE(g.commands.size() == 5);
    CHECK(g.commands[0].cmd == CommandType::MoveFromTo);
    for (int i = 1; i < 5; ++i) CHECK(g.commands[i].cmd == CommandType::LineFromTo);
    for (const auto& c : g.commands)
        for (int i = 0; i < 8; ++i)
            if (c.mask[i]) CHECK((c.pts[i] == 0.0 || c.pts[i] == 1.0));
    CHECK(g.width == 1.0);
    CHECK(g.height == 1.0);
}

TEST_CASE("parse empty input") {
    Glyph g = parse_svg_path("", 64.0);
    CHECK(g.commands.empty());
    auto padded = g.padded(8);
    CHECK(padded.size() == 8);
    for (const auto& c : padded) CHECK(c.cmd == CommandType::EOS);
}

TEST_CASE("subpaths sorted top-left first") {
    Glyph g = parse_svg_path("M 32 32 L 40 32 Z M 6.4 6.4 L 12 6.4 Z", 64.0);
    REQUIRE(g.commands[0].cmd == CommandType::MoveFromTo);
    CHECK(g.commands[0].pts[6] == doctest::Approx(0.1));
    CHECK(g.commands[0].pts[7] == doctest::Approx(0.1));
    // oracle: sort move points lexicographically on (y, x)
    std::vector<std::pair<double, double>> moves;
    for (const auto& c : g.commands)
        if (c.cmd == CommandType::MoveFromTo) moves.push_back({c.pts[7], c.pts[6]});
    CHECK(std::is_sorted(moves.begin(), moves.end()));
}

TEST_CASE("Z emits closing line only when pen is away") {
    Glyph g = parse_svg_path("M 0 0 L 64 0 L 0 0 Z", 64.0);
    CHECK(g.commands.size() == 3);  // pen already home, no extra line
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_svg_path("M 0 0 Q 1 1 2 2", 64.0), UnsupportedCommandError);
    CHECK_THROWS_AS(parse_svg_path("m 0 0", 64.0), UnsupportedCommandError);
    CHECK_THROWS_AS(parse_svg_path("M 0 0 L x y", 64.0), ParseError);
    CHECK_THROWS_AS(parse_svg_path("M 0 0 L 100 0", 64.0), ParseError);  // out of canvas
    CHECK_THROWS_AS(parse_svg_path("3 4", 64.0), ParseError);
    try {
        parse_svg_path("M 0 0 H 3", 64.0);
        FAIL("expected throw");
    } catch (const UnsupportedCommandError& e) {
        CHECK(std::string(e.what()).find('H') != std::string::npos);
    }
}

TEST_CASE("to_relaxed copies starting points") {
    Glyph g = parse_svg_path("M 6.4 6.4 L 32 6.4", 64.0);
    Glyph r = to_relaxed(g);
    REQUIRE(r.commands.size() == 2);
    CHECK(r.rep_kind == RepKind::Relaxed);
    CHECK(r.commands[1].start().x == doctest::Approx(0.1));
    CHECK(r.commands[1].start().y == doctest::Approx(0.1));
    CHECK(r.commands[1].end().x == doctest::Approx(0.5));
    // first Move starts at its own destination
    CHECK(r.commands[0].start().x == r.commands[0].end().x);
}

TEST_CASE("to_relaxed rejects glyphs that do not start with Move") {
    Glyph g;
    g.rep_kind = RepKind::Compact;
    g.commands.push_back(
        make_command(CommandType::LineFromTo, RepKind::Compact, {0, 0, 0, 0, 0, 0, 0.5, 0.5}));
    CHECK_THROWS_AS(to_relaxed(g), StructureError);
}

TEST_CASE("relaxed chain consistency on curve chains") {
    Glyph g = parse_svg_path("M 0 0 C 8 8 16 8 24 0 C 32 -0 40 8 48 0 C 56 8 64 8 64 0", 64.0);
    Glyph r = to_relaxed(g);
    for (size_t j = 1; j < r.commands.size(); ++j) {
        CHECK(r.commands[j].start().x == r.commands[j - 1].end().x);
        CHECK(r.commands[j].start().y == r.commands[j - 1].end().y);
    }
    CHECK(r.commands.size() == g.commands.size());
    for (size_t j = 0; j < r.commands.size(); ++j) CHECK(r.commands[j].cmd == g.commands[j].cmd);
}

TEST_CASE("merge averages junction points") {
    Glyph g;
    g.rep_kind = RepKind::Relaxed;
    g.commands.push_back(
        make_command(CommandType::MoveFromTo, RepKind::Relaxed, {0.1, 0.1, 0, 0, 0, 0, 0.1, 0.1}));
    g.commands.push_back(
        make_command(CommandType::LineFromTo, RepKind::Relaxed, {0.1, 0.1, 0, 0, 0, 0, 0.4, 0.4}));
    g.commands.push_back(
        make_command(CommandType::LineFromTo, RepKind::Relaxed, {0.6, 0.6, 0, 0, 0, 0, 0.9, 0.9}));
    Glyph m = merge_relaxed(g);
    CHECK(m.commands[1].end().x == doctest::Approx(0.5));
    CHECK(m.commands[1].end().y == doctest::Approx(0.5));
    CHECK(m.commands[2].end().x == doctest::Approx(0.9));
}

TEST_CASE("merge-relax round trip is exact identity") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        Glyph g = random_compact(rng);
        Glyph back = merge_relaxed(to_relaxed(g));
        REQUIRE(same_geometry(g, back, 0.0));  // exact
    }
}

TEST_CASE("merge leaves consistent junctions untouched") {
    std::mt19937_64 rng(8);
    Glyph g = to_relaxed(random_compact(rng));
    Glyph m = merge_relaxed(g);
    Glyph r2 = to_relaxed(m);
    for (size_t i = 0; i < g.commands.size(); ++i)
        for (int j = 0; j < 8; ++j) CHECK(r2.commands[i].pts[j] == g.commands[i].pts[j]);
}

TEST_CASE("post-merge junctions sit at midpoints of random gaps") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> coord(0.1, 0.9);
    std::uniform_real_distribution<double> gap(-0.05, 0.05);
    Glyph g;
    g.rep_kind = RepKind::Relaxed;
    g.commands.push_back(
        make_command(CommandType::MoveFromTo, RepKind::Relaxed, {0.1, 0.1, 0, 0, 0, 0, 0.1, 0.1}));
    Vec2 pen{0.1, 0.1};
    std::vector<std::pair<Vec2, Vec2>> junctions;  // (end_prev, start_next)
    for (int s = 0; s < 6; ++s) {
        Vec2 start = s == 0 ? pen : Vec2{pen.x + gap(rng), pen.y + gap(rng)};
        Vec2 end{coord(rng), coord(rng)};
        if (s > 0) junctions.push_back({pen, start});
        g.commands.push_back(make_command(CommandType::LineFromTo, RepKind::Relaxed,
                                          {start.x, start.y, 0, 0, 0, 0, end.x, end.y}));
        pen = end;
    }
    Glyph m = merge_relaxed(g);
    for (size_t j = 0; j < junctions.size(); ++j) {
        const Vec2 mid = 0.5 * (junctions[j].first + junctions[j].second);
        CHECK(m.commands[j + 1].end().x == doctest::Approx(mid.x).epsilon(1e-12));
        CHECK(m.commands[j + 1].end().y == doctest::Approx(mid.y).epsilon(1e-12));
    }
    // merged glyph has no residual gaps
    for (double v : junction_gaps(to_relaxed(m))) CHECK(v == 0.0);
}

TEST_CASE("serialize and parse round trip") {
    Glyph g = parse_svg_path("M 0 0 L 64 0 L 64 64 L 0 64 Z", 64.0);
    const std::string svg = serialize_svg(g, 64.0);
    CHECK(svg.substr(0, 23) == "M 0.000000 0.000000 L 6");
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        Glyph a = random_compact(rng);
        Glyph b = parse_svg_path(serialize_svg(a, 64.0), 64.0);
        REQUIRE(same_geometry(a, b, 1e-5));
    }
}

TEST_CASE("serialize rejects relaxed glyphs") {
    std::mt19937_64 rng(3);
    Glyph r = to_relaxed(random_compact(rng));
    CHECK_THROWS_AS(serialize_svg(r, 64.0), StructureError);
}

TEST_CASE("json round trip") {
    std::mt19937_64 rng(4);
    Glyph g = to_relaxed(random_compact(rng));
    g.char_class = 5;
    std::string style;
    Glyph back = glyph_from_json(glyph_to_json(g, "demo"), &style);
    CHECK(style == "demo");
    CHECK(back.char_class == 5);
    CHECK(back.rep_kind == RepKind::Relaxed);
    CHECK(same_geometry(g, back, 0.0));
}
