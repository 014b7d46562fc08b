#include "vecfont/toyfont.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vecfont/image_io.hpp"

namespace fs = std::filesystem;

namespace vecfont {

const char* toy_class_name(int cls) {
    static const char* names[kToyClasses] = {"box", "oring", "lshape", "tshape",
                                             "scurve", "triangle", "ushape", "hshape"};
    if (cls < 0 || cls >= kToyClasses) throw DomainError("toy class out of range");
    return names[cls];
}

ToyStyle sample_style(std::mt19937_64& rng) {
    auto u = [&](double lo, double hi) {
        return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    };
    ToyStyle s;
    s.stroke = u(0.12, 0.24);
    s.slant = u(-0.12, 0.12);
    s.roundness = u(0.0, 0.35);
    s.aspect = u(0.70, 1.0);
    return s;
}

namespace {

constexpr double kArc = 0.55228474983;  // cubic approximation of a quarter circle

struct PathBuilder {
    std::string text;
    char buf[160];

    void move(Vec2 p) { emit("M %.6f %.6f", p.x, p.y); }
    void line(Vec2 p) { emit("L %.6f %.6f", p.x, p.y); }
    void curve(Vec2 c1, Vec2 c2, Vec2 p) {
        emit("C %.6f %.6f %.6f %.6f %.6f %.6f", c1.x, c1.y, c2.x, c2.y, p.x, p.y);
    }
    void close() { text += "Z "; }

    template <typename... A>
    void emit(const char* fmt, A... a) {
        std::snprintf(buf, sizeof buf, fmt, a...);
        text += buf;
        text += ' ';
    }
};

Vec2 lerp(Vec2 a, Vec2 b, double t) { return a + t * (b - a); }

// Closed polygon with optionally rounded corners.
void polygon(PathBuilder& pb, const std::vector<Vec2>& v, double roundness) {
    const size_t n = v.size();
    if (roundness < 0.02) {
        pb.move(v[0]);
        for (size_t i = 1; i < n; ++i) pb.line(v[i]);
        pb.close();
        return;
    }
    auto cut = [&](size_t i) {
        const Vec2 prev = v[(i + n - 1) % n], cur = v[i], next = v[(i + 1) % n];
        const double lp = std::hypot(cur.x - prev.x, cur.y - prev.y);
        const double ln = std::hypot(next.x - cur.x, next.y - cur.y);
        const double t = roundness * 0.5 * std::min(lp, ln);
        const Vec2 in = lerp(cur, prev, t / lp);
        const Vec2 out = lerp(cur, next, t / ln);
        return std::pair<Vec2, Vec2>(in, out);
    };
    pb.move(cut(0).second);
    for (size_t i = 1; i <= n; ++i) {
        const size_t j = i % n;
        const auto [in, out] = cut(j);
        pb.line(in);
        pb.curve(lerp(in, v[j], kArc), lerp(out, v[j], kArc), out);
    }
    pb.close();
}

// Full circle from four cubic arcs; dir=+1 runs east->south->west->north
// (clockwise with y pointing down), dir=-1 the reverse.
void circle(PathBuilder& pb, Vec2 c, double r, int dir) {
    const double k = kArc * r;
    const Vec2 e{c.x + r, c.y}, s{c.x, c.y + r}, w{c.x - r, c.y}, nn{c.x, c.y - r};
    pb.move(e);
    if (dir > 0) {
        pb.curve({e.x, e.y + k}, {s.x + k, s.y}, s);
        pb.curve({s.x - k, s.y}, {w.x, w.y + k}, w);
        pb.curve({w.x, w.y - k}, {nn.x - k, nn.y}, nn);
        pb.curve({nn.x + k, nn.y}, {e.x, e.y - k}, e);
    } else {
        pb.curve({e.x, e.y - k}, {nn.x + k, nn.y}, nn);
        pb.curve({nn.x - k, nn.y}, {w.x, w.y - k}, w);
        pb.curve({w.x, w.y + k}, {s.x - k, s.y}, s);
        pb.curve({s.x + k, s.y}, {e.x, e.y + k}, e);
    }
    pb.close();
}

void build_class(PathBuilder& pb, int cls, const ToyStyle& st) {
    const double l = 0.20, r = 0.80, t = 0.18, b = 0.82;
    const double cx = 0.5, cy = 0.5;
    const double s = st.stroke;

    switch (cls) {
        case 0:  // box
            polygon(pb, {{l, t}, {r, t}, {r, b}, {l, b}}, st.roundness);
            break;
        case 1: {  // O-ring: outer clockwise, inner hole counter-clockwise
            const double R = 0.32;
            circle(pb, {cx, cy}, R, +1);
            circle(pb, {cx, cy}, R - s, -1);
            break;
        }
        case 2:  // L
            polygon(pb, {{l, t}, {l + s, t}, {l + s, b - s}, {r, b - s}, {r, b}, {l, b}},
                    st.roundness);
            break;
        case 3:  // T
            polygon(pb,
                    {{l, t},
                     {r, t},
                     {r, t + s},
                     {cx + s / 2, t + s},
                     {cx + s / 2, b},
                     {cx - s / 2, b},
                     {cx - s / 2, t + s},
                     {l, t + s}},
                    st.roundness);
            break;
        case 4: {  // S band around a y-monotone centerline
            const double o = 0.4 * s;
            const Vec2 p0{0.65, 0.18}, p1{0.15, 0.35}, p2{0.85, 0.62}, p3{0.35, 0.82};
            pb.move({p0.x - o, p0.y});
            pb.curve({p1.x - o, p1.y}, {p2.x - o, p2.y}, {p3.x - o, p3.y});
            pb.line({p3.x + o, p3.y});
            pb.curve({p2.x + o, p2.y}, {p1.x + o, p1.y}, {p0.x + o, p0.y});
            pb.close();
            break;
        }
        case 5:  // triangle
            polygon(pb, {{cx, t}, {r, b}, {l, b}}, st.roundness);
            break;
        case 6: {  // U band with a semicircular bottom
            const double R = (r - l) / 2.0;
            const double rn = R - s;
            const double by = b - R;
            const double k = kArc;
            pb.move({l, t});
            pb.line({l, by});
            pb.curve({l, by + k * R}, {cx - k * R, by + R}, {cx, by + R});
            pb.curve({cx + k * R, by + R}, {r, by + k * R}, {r, by});
            pb.line({r, t});
            pb.line({r - s, t});
            pb.line({r - s, by});
            pb.curve({r - s, by + k * rn}, {cx + k * rn, by + rn}, {cx, by + rn});
            pb.curve({cx - k * rn, by + rn}, {l + s, by + k * rn}, {l + s, by});
            pb.line({l + s, t});
            pb.close();
            break;
        }
        case 7: {  // H as three overlapping bars, unioned by the nonzero rule
            polygon(pb, {{l, t}, {l + s, t}, {l + s, b}, {l, b}}, 0.0);
            polygon(pb, {{r - s, t}, {r, t}, {r, b}, {r - s, b}}, 0.0);
            polygon(pb,
                    {{l + s / 2, cy - s / 2},
                     {r - s / 2, cy - s / 2},
                     {r - s / 2, cy + s / 2},
                     {l + s / 2, cy + s / 2}},
                    0.0);
            break;
        }
        default:
            throw DomainError("toy class out of range");
    }
}

}  // namespace

Glyph toy_glyph(int cls, const ToyStyle& st) {
    PathBuilder pb;
    build_class(pb, cls, st);

    // aspect about the vertical center line, then slant about mid-height
    Glyph raw = parse_svg_path(pb.text, 1.0);
    for (auto& c : raw.commands)
        for (int i = 0; i < 8; i += 2) {
            if (!c.mask[i]) continue;
            double x = c.pts[i];
            const double y = c.pts[i + 1];
            x = 0.5 + (x - 0.5) * st.aspect;
            x += st.slant * (y - 0.5);
            c.pts[i] = x;
        }
    // re-parse to restore the canonical subpath order under the transform
    Glyph g = parse_svg_path(serialize_svg(raw, 1.0), 1.0);
    g.char_class = cls;
    return g;
}

DatasetSplits gen_dataset(uint64_t seed, int n_fonts, int resolution) {
    if (n_fonts < 2) throw DomainError("gen_dataset: need at least 2 fonts");
    if (resolution <= 0) throw DomainError("gen_dataset: resolution must be positive");
    std::mt19937_64 rng(seed);

    DatasetSplits out;
    out.train.resolution = out.test.resolution = resolution;
    const int n_test = std::max(1, n_fonts / 10);
    char style_name[32];
    for (int i = 0; i < n_fonts; ++i) {
        const ToyStyle style = sample_style(rng);
        std::snprintf(style_name, sizeof style_name, "toy_%04d", i);
        Font font;
        font.style_id = style_name;
        std::vector<RasterImage> imgs;
        for (int cls = 0; cls < kToyClasses; ++cls) {
            Glyph g = toy_glyph(cls, style);
            imgs.push_back(rasterize(g, resolution, FillRule::NonZero));
            font.glyphs.push_back(std::move(g));
        }
        ToyDataset& split = (i < n_fonts - n_test) ? out.train : out.test;
        split.fonts.push_back(std::move(font));
        split.images.push_back(std::move(imgs));
    }
    return out;
}

namespace {

void save_split(const ToyDataset& d, const std::string& dir, const std::string& name) {
    save_fonts_jsonl(d.fonts, dir + "/" + name + ".jsonl");
    for (size_t f = 0; f < d.fonts.size(); ++f)
        for (size_t c = 0; c < d.fonts[f].glyphs.size(); ++c)
            save_pgm(d.images[f][c],
                     dir + "/images/" + d.fonts[f].style_id + "_" + std::to_string(c) + ".pgm");
}

ToyDataset load_split(const std::string& dir, const std::string& name, int resolution) {
    ToyDataset d;
    d.resolution = resolution;
    d.fonts = load_fonts_jsonl(dir + "/" + name + ".jsonl");
    for (const auto& font : d.fonts) {
        std::vector<RasterImage> imgs;
        for (size_t c = 0; c < font.glyphs.size(); ++c)
            imgs.push_back(load_pgm(dir + "/images/" + font.style_id + "_" + std::to_string(c) + ".pgm"));
        d.images.push_back(std::move(imgs));
    }
    return d;
}

}  // namespace

void save_dataset(const DatasetSplits& splits, const std::string& dir) {
    fs::create_directories(dir + "/images");
    save_split(splits.train, dir, "train");
    save_split(splits.test, dir, "test");
    nlohmann::json meta{{"resolution", splits.train.resolution},
                        {"n_char", kToyClasses},
                        {"train_fonts", splits.train.fonts.size()},
                        {"test_fonts", splits.test.fonts.size()}};
    std::ofstream f(dir + "/meta.json");
    if (!f) throw IoError("cannot open for writing: " + dir + "/meta.json");
    f << meta.dump(2) << '\n';
}

DatasetSplits load_dataset(const std::string& dir) {
    std::ifstream f(dir + "/meta.json");
    if (!f) throw IoError("cannot open: " + dir + "/meta.json");
    nlohmann::json meta;
    try {
        f >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad dataset meta: ") + e.what());
    }
    const int res = meta.at("resolution").get<int>();
    DatasetSplits out;
    out.train = load_split(dir, "train", res);
    out.test = load_split(dir, "test", res);
    return out;
}

}  // namespace vecfont
