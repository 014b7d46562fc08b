#include "vecfont/embedding.hpp"

#include <algorithm>
#include <cmath>

namespace vecfont {

int quantize(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return static_cast<int>(std::lround(x * 255.0));
}

double dequantize(int bin) {
    if (bin < 0 || bin >= kBins) throw DomainError("dequantize: bin out of range");
    return bin / 255.0;
}

QuantizedCommand quantize_command(const DrawCommand& c, double width, double height) {
    QuantizedCommand q;
    q.cmd_id = static_cast<int>(c.cmd);
    q.mask = c.mask;
    for (int i = 0; i < 8; ++i) q.arg_bins[i] = c.mask[i] ? quantize(c.pts[i]) : 0;
    q.w_bin = quantize(width);
    q.h_bin = quantize(height);
    return q;
}

std::vector<QuantizedCommand> quantize_glyph(const Glyph& g, int n_max) {
    const auto padded = g.padded(static_cast<size_t>(n_max));
    std::vector<QuantizedCommand> rows;
    rows.reserve(padded.size());
    for (const auto& c : padded) rows.push_back(quantize_command(c, g.width, g.height));
    return rows;
}

EmbeddingParams EmbeddingParams::init(int d_e, std::mt19937_64& rng) {
    EmbeddingParams p;
    p.d_e = d_e;
    const double s = 0.02;
    p.w_cmd = Tensor::randn({d_e, kNumCommandTypes}, rng, s, true);
    p.w_args_b = Tensor::randn({d_e, kBins}, rng, s, true);
    p.w_args_a = Tensor::randn({d_e, 8LL * d_e}, rng, s, true);
    p.w_w = Tensor::randn({d_e, kBins}, rng, s, true);
    p.w_h = Tensor::randn({d_e, kBins}, rng, s, true);
    p.modality_token = Tensor::randn({d_e}, rng, s, true);
    return p;
}

void EmbeddingParams::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w_cmd", w_cmd);
    out.emplace_back(prefix + ".w_args_b", w_args_b);
    out.emplace_back(prefix + ".w_args_a", w_args_a);
    out.emplace_back(prefix + ".w_w", w_w);
    out.emplace_back(prefix + ".w_h", w_h);
    out.emplace_back(prefix + ".modality_token", modality_token);
}

Tensor positional_encoding(int max_pos, int d_e) {
    std::vector<double> pe(static_cast<size_t>(max_pos + 1) * d_e);
    for (int pos = 0; pos <= max_pos; ++pos)
        for (int i = 0; i < d_e; ++i) {
            const double angle = pos / std::pow(10000.0, (2.0 * (i / 2)) / d_e);
            pe[static_cast<size_t>(pos) * d_e + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return Tensor::from({max_pos + 1, d_e}, std::move(pe));
}

Tensor embed_rows(const std::vector<QuantizedCommand>& rows, const Shape& lead_shape,
                  const std::vector<int>& positions, const EmbeddingParams& p) {
    const int64_t n = static_cast<int64_t>(rows.size());
    if (shape_numel(lead_shape) != n || positions.size() != rows.size())
        throw ShapeError("embed_rows: lead_shape/positions do not match row count");
    const int64_t d = p.d_e;

    // tables in row-lookup orientation
    const Tensor cmd_t = transpose(p.w_cmd, 0, 1);       // [4, d]
    const Tensor args_b_t = transpose(p.w_args_b, 0, 1); // [256, d]
    const Tensor args_a_t = transpose(p.w_args_a, 0, 1); // [8d, d]
    const Tensor w_t = transpose(p.w_w, 0, 1);
    const Tensor h_t = transpose(p.w_h, 0, 1);

    std::vector<int> cmd_ids(rows.size()), w_ids(rows.size()), h_ids(rows.size());
    std::vector<int> arg_ids(rows.size() * 8);
    std::vector<double> arg_mask(rows.size() * 8 * static_cast<size_t>(d));
    int max_pos = 0;
    for (int pos : positions) max_pos = std::max(max_pos, pos);
    std::vector<double> pe_rows(rows.size() * static_cast<size_t>(d));
    const Tensor pe = positional_encoding(max_pos, static_cast<int>(d));
    for (size_t r = 0; r < rows.size(); ++r) {
        cmd_ids[r] = rows[r].cmd_id;
        w_ids[r] = rows[r].w_bin;
        h_ids[r] = rows[r].h_bin;
        for (int a = 0; a < 8; ++a) {
            arg_ids[r * 8 + a] = rows[r].arg_bins[a];
            const double m = rows[r].mask[a] ? 1.0 : 0.0;
            std::fill_n(arg_mask.begin() + (r * 8 + a) * d, d, m);
        }
        std::copy_n(pe.data().begin() + static_cast<size_t>(positions[r]) * d, d,
                    pe_rows.begin() + r * static_cast<size_t>(d));
    }

    const Tensor e_cmd = embedding_lookup(cmd_t, cmd_ids, {n});  // [n, d]
    // per-argument embeddings; masked-out arguments contribute zero columns
    Tensor e_arg = embedding_lookup(args_b_t, arg_ids, {n, 8});  // [n, 8, d]
    e_arg = mul(e_arg, Tensor::from({n, 8, d}, arg_mask));
    e_arg = matmul(reshape(e_arg, {n, 8 * d}), args_a_t);        // [n, d]
    const Tensor e_wh = add(embedding_lookup(w_t, w_ids, {n}), embedding_lookup(h_t, h_ids, {n}));
    const Tensor e_pos = Tensor::from({n, d}, std::move(pe_rows));

    Tensor e = add(add(e_cmd, e_arg), add(e_wh, e_pos));
    Shape out_shape = lead_shape;
    out_shape.push_back(d);
    return reshape(e, out_shape);
}

Tensor embed_command(const QuantizedCommand& q, int position, const EmbeddingParams& p) {
    return reshape(embed_rows({q}, {1}, {position}, p), {p.d_e});
}

Tensor embed_sequence(const Glyph& g, int n_max, const EmbeddingParams& p) {
    if (g.rep_kind != RepKind::Relaxed) throw StructureError("embed_sequence expects a relaxed glyph");
    const auto rows = quantize_glyph(g, n_max);
    std::vector<int> positions(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) positions[i] = static_cast<int>(i) + 1;
    const Tensor cmds = embed_rows(rows, {n_max}, positions, p);             // [n_max, d]
    const Tensor tok = reshape(p.modality_token, {1, p.d_e});
    return concat({tok, cmds}, 0);  // [n_max+1, d]
}

}  // namespace vecfont
