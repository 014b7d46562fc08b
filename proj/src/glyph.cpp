#include "vecfont/glyph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace vecfont {

CommandType command_from_name(const std::string& name) {
    if (name == "move") return CommandType::MoveFromTo;
    if (name == "line") return CommandType::LineFromTo;
    if (name == "curve") return CommandType::CurveFromTo;
    if (name == "eos") return CommandType::EOS;
    throw ParseError("unknown command name '" + name + "'", 0);
}

std::array<bool, 8> mask_for(CommandType cmd, RepKind rep) {
    std::array<bool, 8> m{};
    switch (cmd) {
        case CommandType::MoveFromTo:
            if (rep == RepKind::Relaxed) m[0] = m[1] = true;
            m[6] = m[7] = true;
            break;
        case CommandType::LineFromTo:
            if (rep == RepKind::Relaxed) m[0] = m[1] = true;
            m[6] = m[7] = true;
            break;
        case CommandType::CurveFromTo:
            if (rep == RepKind::Relaxed) m[0] = m[1] = true;
            m[2] = m[3] = m[4] = m[5] = m[6] = m[7] = true;
            break;
        case CommandType::EOS:
            break;
    }
    return m;
}

DrawCommand make_command(CommandType cmd, RepKind rep, const std::array<double, 8>& pts) {
    DrawCommand c;
    c.cmd = cmd;
    c.mask = mask_for(cmd, rep);
    for (int i = 0; i < 8; ++i) c.pts[i] = c.mask[i] ? pts[i] : 0.0;
    return c;
}

void Glyph::update_extent() {
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = std::numeric_limits<double>::infinity(), max_y = -min_y;
    bool any = false;
    for (const auto& c : commands) {
        for (int i = 0; i < 8; i += 2) {
            if (!c.mask[i]) continue;
            any = true;
            min_x = std::min(min_x, c.pts[i]);
            max_x = std::max(max_x, c.pts[i]);
            min_y = std::min(min_y, c.pts[i + 1]);
            max_y = std::max(max_y, c.pts[i + 1]);
        }
    }
    width = any ? max_x - min_x : 0.0;
    height = any ? max_y - min_y : 0.0;
}

std::vector<DrawCommand> Glyph::padded(size_t n_max) const {
    if (commands.size() > n_max)
        throw StructureError("glyph has " + std::to_string(commands.size()) +
                             " commands, exceeds N_max=" + std::to_string(n_max));
    std::vector<DrawCommand> out = commands;
    out.resize(n_max);  // default DrawCommand is EOS with empty mask
    return out;
}

// --- SVG parsing -------------------------------------------------------------

namespace {

struct PathScanner {
    const std::string& text;
    size_t pos = 0;

    explicit PathScanner(const std::string& t) : text(t) {}

    void skip_separators() {
        while (pos < text.size() && (std::isspace(static_cast<unsigned char>(text[pos])) || text[pos] == ','))
            ++pos;
    }

    bool done() {
        skip_separators();
        return pos >= text.size();
    }

    bool peek_is_number() {
        skip_separators();
        if (pos >= text.size()) return false;
        char c = text[pos];
        return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
    }

    char next_command() {
        skip_separators();
        return text[pos++];
    }

    double next_number() {
        skip_separators();
        if (pos >= text.size()) throw ParseError("expected number, got end of input", pos);
        const char* begin = text.c_str() + pos;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError(std::string("malformed token '") + text[pos] + "'", pos);
        if (!std::isfinite(v)) throw ParseError("non-finite coordinate", pos);
        pos += static_cast<size_t>(end - begin);
        return v;
    }
};

struct Subpath {
    Vec2 move_to;
    std::vector<DrawCommand> segments;  // Line/Curve only, compact form
};

}  // namespace

Glyph parse_svg_path(const std::string& path_text, double canvas_size) {
    if (!(canvas_size > 0)) throw DomainError("canvas_size must be positive");

    PathScanner sc(path_text);
    std::vector<Subpath> subpaths;
    Vec2 pen{};
    bool have_subpath = false;
    char cur_cmd = 0;

    auto read_point = [&]() -> Vec2 {
        size_t at = sc.pos;
        double x = sc.next_number();
        double y = sc.next_number();
        if (x < 0 || x > canvas_size || y < 0 || y > canvas_size)
            throw ParseError("coordinate outside [0, canvas_size]", at);
        return {x / canvas_size, y / canvas_size};
    };

    auto emit_line = [&](Vec2 p) {
        subpaths.back().segments.push_back(
            make_command(CommandType::LineFromTo, RepKind::Compact, {0, 0, 0, 0, 0, 0, p.x, p.y}));
        pen = p;
    };
    auto emit_curve = [&]() {
        Vec2 c1 = read_point();
        Vec2 c2 = read_point();
        Vec2 p = read_point();
        subpaths.back().segments.push_back(make_command(
            CommandType::CurveFromTo, RepKind::Compact, {0, 0, c1.x, c1.y, c2.x, c2.y, p.x, p.y}));
        pen = p;
    };

    while (!sc.done()) {
        if (sc.peek_is_number()) {
            // implicit command repetition; after M the repeat is a lineto
            if (cur_cmd == 0) throw ParseError("coordinates not attached to a command", sc.pos);
            if (cur_cmd == 'M') cur_cmd = 'L';
            if (cur_cmd == 'L')
                emit_line(read_point());
            else
                emit_curve();
            continue;
        }
        size_t at = sc.pos;
        char c = sc.next_command();
        switch (c) {
            case 'M': {
                Vec2 p = read_point();
                subpaths.push_back({p, {}});
                pen = p;
                have_subpath = true;
                cur_cmd = 'M';
                break;
            }
            case 'L':
                if (!have_subpath) throw ParseError("L before M", at);
                emit_line(read_point());
                cur_cmd = 'L';
                break;
            case 'C':
                if (!have_subpath) throw ParseError("C before M", at);
                emit_curve();
                cur_cmd = 'C';
                break;
            case 'Z': {
                if (!have_subpath) throw ParseError("Z before M", at);
                Vec2 home = subpaths.back().move_to;
                if (pen.x != home.x || pen.y != home.y) emit_line(home);
                pen = home;
                cur_cmd = 0;  // Z takes no arguments; require an explicit next command
                break;
            }
            case 'm':
            case 'l':
            case 'c':
            case 'z':
                throw UnsupportedCommandError(std::string("relative command '") + c +
                                              "' is not supported (byte " + std::to_string(at) + ")");
            default:
                if (std::isalpha(static_cast<unsigned char>(c)))
                    throw UnsupportedCommandError(std::string("unsupported command '") + c +
                                                  "' (byte " + std::to_string(at) + ")");
                throw ParseError(std::string("malformed token '") + c + "'", at);
        }
    }

    std::stable_sort(subpaths.begin(), subpaths.end(), [](const Subpath& a, const Subpath& b) {
        if (a.move_to.y != b.move_to.y) return a.move_to.y < b.move_to.y;
        return a.move_to.x < b.move_to.x;
    });

    Glyph g;
    g.rep_kind = RepKind::Compact;
    for (const auto& sp : subpaths) {
        g.commands.push_back(make_command(CommandType::MoveFromTo, RepKind::Compact,
                                          {0, 0, 0, 0, 0, 0, sp.move_to.x, sp.move_to.y}));
        for (const auto& seg : sp.segments) g.commands.push_back(seg);
    }
    g.update_extent();
    return g;
}

std::string serialize_svg(const Glyph& g, double canvas_size) {
    if (!(canvas_size > 0)) throw DomainError("canvas_size must be positive");
    if (g.rep_kind != RepKind::Compact)
        throw StructureError("serialize_svg expects a compact glyph");

    std::string out;
    char buf[64];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof buf, " %.6f", v * canvas_size);
        out += buf;
    };
    for (const auto& c : g.commands) {
        switch (c.cmd) {
            case CommandType::MoveFromTo:
                out += out.empty() ? "M" : " M";
                emit(c.pts[6]);
                emit(c.pts[7]);
                break;
            case CommandType::LineFromTo:
                out += " L";
                emit(c.pts[6]);
                emit(c.pts[7]);
                break;
            case CommandType::CurveFromTo:
                out += " C";
                for (int i = 2; i < 8; ++i) emit(c.pts[i]);
                break;
            case CommandType::EOS:
                break;
        }
    }
    return out;
}

// --- compact <-> relaxed ------------------------------------------------------

Glyph to_relaxed(const Glyph& g) {
    if (g.rep_kind != RepKind::Compact) throw StructureError("to_relaxed expects a compact glyph");
    if (!g.commands.empty() && g.commands.front().cmd != CommandType::MoveFromTo)
        throw StructureError("compact glyph must start with a Move");

    Glyph out = g;
    out.rep_kind = RepKind::Relaxed;
    out.commands.clear();
    Vec2 pen{};
    bool first = true;
    for (const auto& c : g.commands) {
        if (c.cmd == CommandType::EOS) break;
        if (first) pen = c.end();  // the opening Move starts at its own destination
        std::array<double, 8> pts = c.pts;
        pts[0] = pen.x;
        pts[1] = pen.y;
        out.commands.push_back(make_command(c.cmd, RepKind::Relaxed, pts));
        pen = c.end();
        first = false;
    }
    out.update_extent();
    return out;
}

namespace {
inline bool is_segment(CommandType t) {
    return t == CommandType::LineFromTo || t == CommandType::CurveFromTo;
}
}  // namespace

Glyph merge_relaxed(const Glyph& g, MergeMode) {
    if (g.rep_kind != RepKind::Relaxed) throw StructureError("merge_relaxed expects a relaxed glyph");

    Glyph out = g;
    out.rep_kind = RepKind::Compact;
    out.commands.clear();
    for (size_t j = 0; j < g.commands.size(); ++j) {
        const auto& c = g.commands[j];
        if (c.cmd == CommandType::EOS) break;
        std::array<double, 8> pts = c.pts;
        pts[0] = pts[1] = 0.0;
        out.commands.push_back(make_command(c.cmd, RepKind::Compact, pts));
        // junction with the next command: average the two predictions
        if (j + 1 < g.commands.size() && is_segment(c.cmd) && is_segment(g.commands[j + 1].cmd)) {
            Vec2 shared = 0.5 * (c.end() + g.commands[j + 1].start());
            out.commands.back().set_point(3, shared);
        }
    }
    out.update_extent();
    return out;
}

std::vector<double> junction_gaps(const Glyph& g) {
    if (g.rep_kind != RepKind::Relaxed) throw StructureError("junction_gaps expects a relaxed glyph");
    std::vector<double> gaps;
    for (size_t j = 1; j < g.commands.size(); ++j) {
        if (is_segment(g.commands[j - 1].cmd) && is_segment(g.commands[j].cmd)) {
            Vec2 d = g.commands[j].start() - g.commands[j - 1].end();
            gaps.push_back(std::hypot(d.x, d.y));
        }
    }
    return gaps;
}

// --- JSON-lines ---------------------------------------------------------------

using nlohmann::json;

std::string glyph_to_json(const Glyph& g, const std::string& style_id) {
    json j;
    j["style_id"] = style_id;
    j["char_class"] = g.char_class;
    j["rep_kind"] = g.rep_kind == RepKind::Compact ? "compact" : "relaxed";
    j["width"] = g.width;
    j["height"] = g.height;
    json cmds = json::array();
    for (const auto& c : g.commands) {
        json jc;
        jc["cmd"] = command_name(c.cmd);
        jc["pts"] = c.pts;
        jc["mask"] = c.mask;
        cmds.push_back(std::move(jc));
    }
    j["commands"] = std::move(cmds);
    return j.dump();
}

Glyph glyph_from_json(const std::string& line, std::string* style_id_out) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad glyph json: ") + e.what(), 0);
    }
    Glyph g;
    if (style_id_out) *style_id_out = j.at("style_id").get<std::string>();
    g.char_class = j.at("char_class").get<int>();
    g.rep_kind = j.at("rep_kind").get<std::string>() == "relaxed" ? RepKind::Relaxed : RepKind::Compact;
    g.width = j.at("width").get<double>();
    g.height = j.at("height").get<double>();
    for (const auto& jc : j.at("commands")) {
        DrawCommand c;
        c.cmd = command_from_name(jc.at("cmd").get<std::string>());
        auto pts = jc.at("pts").get<std::vector<double>>();
        auto mask = jc.at("mask").get<std::vector<bool>>();
        if (pts.size() != 8 || mask.size() != 8) throw ParseError("command needs 8 pts and 8 mask entries", 0);
        for (int i = 0; i < 8; ++i) {
            c.pts[i] = pts[i];
            c.mask[i] = mask[i];
        }
        g.commands.push_back(c);
    }
    return g;
}

void save_fonts_jsonl(const std::vector<Font>& fonts, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const auto& font : fonts)
        for (const auto& g : font.glyphs) f << glyph_to_json(g, font.style_id) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

std::vector<Font> load_fonts_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<Font> fonts;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::string style;
        Glyph g = glyph_from_json(line, &style);
        if (fonts.empty() || fonts.back().style_id != style) {
            fonts.push_back({{}, style});
        }
        fonts.back().glyphs.push_back(std::move(g));
    }
    return fonts;
}

}  // namespace vecfont
