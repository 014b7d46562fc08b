#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vecfont/error.hpp"

namespace vecfont {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

enum class CommandType : uint8_t { MoveFromTo = 0, LineFromTo = 1, CurveFromTo = 2, EOS = 3 };

inline const char* command_name(CommandType t) {
    switch (t) {
        case CommandType::MoveFromTo: return "move";
        case CommandType::LineFromTo: return "line";
        case CommandType::CurveFromTo: return "curve";
        case CommandType::EOS: return "eos";
    }
    return "?";
}

CommandType command_from_name(const std::string& name);

enum class RepKind : uint8_t { Compact = 0, Relaxed = 1 };

// One drawing command on the unit-square canvas (y grows downward).
// Four coordinate pairs are always stored; `mask` marks the arguments a
// consumer may read. Unused slots are kept at 0.
//
// Slot layout: pair 0 = starting point, pairs 1-2 = curve control points,
// pair 3 = ending point. In compact form the starting point is implicit
// (inherited from the previous command), so slot 0 is unused for
// Line/Curve and Move keeps only its destination in slot 3.
struct DrawCommand {
    CommandType cmd = CommandType::EOS;
    std::array<double, 8> pts{};   // x1,y1, x2,y2, x3,y3, x4,y4
    std::array<bool, 8> mask{};

    Vec2 point(int i) const { return {pts[2 * i], pts[2 * i + 1]}; }
    void set_point(int i, Vec2 p) {
        pts[2 * i] = p.x;
        pts[2 * i + 1] = p.y;
    }
    Vec2 start() const { return point(0); }
    Vec2 end() const { return point(3); }
};

// Argument mask implied by a command type in the given representation.
std::array<bool, 8> mask_for(CommandType cmd, RepKind rep);

DrawCommand make_command(CommandType cmd, RepKind rep, const std::array<double, 8>& pts);

struct Glyph {
    std::vector<DrawCommand> commands;  // no EOS padding stored
    int char_class = 0;
    double width = 0.0;
    double height = 0.0;
    RepKind rep_kind = RepKind::Compact;

    size_t size() const { return commands.size(); }
    bool empty() const { return commands.empty(); }

    // Recomputes width/height from the used coordinates.
    void update_extent();

    // Commands padded with EOS to total length n_max.
    std::vector<DrawCommand> padded(size_t n_max) const;
};

struct Font {
    std::vector<Glyph> glyphs;  // one per character class
    std::string style_id;
};

// --- SVG path subset -------------------------------------------------------
//
// Absolute M/L/C/Z only. Coordinates must lie in [0, canvas_size] and are
// normalized to the unit square. Z closes the subpath with an explicit
// LineFromTo when the pen is away from the subpath's Move point. Subpaths
// are ordered top-left first: lexicographic (y, x) of their Move point.
Glyph parse_svg_path(const std::string& path_text, double canvas_size);

// Emits absolute M/L/C with coordinates scaled by canvas_size, 6 decimals.
// Compact glyphs only.
std::string serialize_svg(const Glyph& g, double canvas_size);

// --- Compact <-> relaxed ---------------------------------------------------

// Gives every command an explicit starting point copied from the previous
// command's ending point. The first command must be a Move; its starting
// point duplicates its own destination.
Glyph to_relaxed(const Glyph& g);

enum class MergeMode { Average };

// Averages the predicted junction points of consecutive Line/Curve commands
// within one path; Move resets the junction chain. Returns a compact glyph.
Glyph merge_relaxed(const Glyph& g, MergeMode mode = MergeMode::Average);

// Euclidean gaps end(j-1) -> start(j) at every within-path junction of a
// relaxed glyph (consecutive Line/Curve pairs). Empty if no junctions.
std::vector<double> junction_gaps(const Glyph& g);

// --- JSON-lines glyph container ---------------------------------------------
// One glyph per line:
// {style_id, char_class, rep_kind, commands:[{cmd, pts:[8], mask:[8]}], width, height}

std::string glyph_to_json(const Glyph& g, const std::string& style_id);
Glyph glyph_from_json(const std::string& line, std::string* style_id_out = nullptr);

void save_fonts_jsonl(const std::vector<Font>& fonts, const std::string& path);
std::vector<Font> load_fonts_jsonl(const std::string& path);

}  // namespace vecfont
