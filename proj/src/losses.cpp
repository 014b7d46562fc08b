#include "vecfont/losses.hpp"

#include <cmath>

namespace vecfont {

namespace {

inline bool is_seg_id(int cmd_id) {
    return cmd_id == static_cast<int>(CommandType::LineFromTo) ||
           cmd_id == static_cast<int>(CommandType::CurveFromTo);
}

struct GtBatch {
    int64_t B = 0, T = 0;
    std::vector<std::vector<QuantizedCommand>> rows;  // [B][T]
    std::vector<int> valid;                           // commands + EOS step, capped at T
};

GtBatch quantize_targets(const std::vector<Glyph>& targets, int n_max) {
    GtBatch gt;
    gt.B = static_cast<int64_t>(targets.size());
    gt.T = n_max;
    for (const auto& g : targets) {
        if (g.rep_kind != RepKind::Relaxed) throw StructureError("loss targets must be relaxed glyphs");
        gt.rows.push_back(quantize_glyph(g, n_max));
        gt.valid.push_back(std::min<int>(static_cast<int>(g.commands.size()) + 1, n_max));
    }
    return gt;
}

// dequantized ground-truth coordinates [B,T,8]; unused slots are zero
Tensor gt_coord_tensor(const GtBatch& gt) {
    std::vector<double> data(static_cast<size_t>(gt.B) * gt.T * 8, 0.0);
    for (int64_t b = 0; b < gt.B; ++b)
        for (int64_t t = 0; t < gt.T; ++t) {
            const auto& q = gt.rows[b][t];
            for (int a = 0; a < 8; ++a)
                if (q.mask[a]) data[(b * gt.T + t) * 8 + a] = dequantize(q.arg_bins[a]);
        }
    return Tensor::from({gt.B, gt.T, 8}, std::move(data));
}

}  // namespace

Tensor soft_coords(const Tensor& arg_logits) {
    const int64_t B = arg_logits.dim(0), T = arg_logits.dim(1);
    std::vector<double> bins(kBins);
    for (int i = 0; i < kBins; ++i) bins[i] = dequantize(i);
    Tensor binval = Tensor::from({kBins, 1}, std::move(bins));
    Tensor probs = softmax(arg_logits);                 // [B,T,8,256]
    return reshape(matmul(probs, binval), {B, T, 8});
}

Tensor loss_img(const ModelParams& p, const Tensor& img_logits,
                const std::vector<const RasterImage*>& targets) {
    const int64_t B = img_logits.dim(0);
    const int res = p.cfg.resolution;
    if (static_cast<int64_t>(targets.size()) != B) throw ShapeError("loss_img: batch mismatch");
    std::vector<double> tgt(static_cast<size_t>(B) * res * res);
    for (int64_t b = 0; b < B; ++b) {
        if (targets[b]->resolution != res)
            throw ShapeError("loss_img: target resolution " + std::to_string(targets[b]->resolution) +
                             " vs model " + std::to_string(res));
        std::copy(targets[b]->pixels.begin(), targets[b]->pixels.end(),
                  tgt.begin() + static_cast<size_t>(b) * res * res);
    }
    Tensor target = Tensor::from({B, static_cast<int64_t>(res) * res}, std::move(tgt));
    Tensor pred = sigmoid(img_logits);
    Tensor d = sub(pred, target);
    Tensor l1 = mean(add(relu(d), relu(scale(d, -1.0))));
    if (!p.cfg.use_perceptual) return l1;

    Tensor x = reshape(pred, {B, 1, res, res});
    Tensor y = reshape(target, {B, 1, res, res});
    Tensor out = l1;
    for (const auto& c : p.percep) {
        x = relu(conv2d(x, c.w, c.b, 2, 1));
        y = relu(conv2d(y, c.w, c.b, 2, 1));
        Tensor fd = sub(x, y);
        out = add(out, mean(mul(fd, fd)));
    }
    return out;
}

Tensor loss_ce(const SeqPrediction& pred, const std::vector<Glyph>& targets, int n_max,
               double w_cmd) {
    const GtBatch gt = quantize_targets(targets, n_max);
    const int64_t B = gt.B, T = gt.T;
    if (pred.cmd_logits.dim(0) != B || pred.cmd_logits.dim(1) != T)
        throw ShapeError("loss_ce: prediction/target batch mismatch");

    std::vector<int> cmd_targets(static_cast<size_t>(B) * T, 0);
    std::vector<double> step_mask(static_cast<size_t>(B) * T, 0.0);
    std::vector<int> arg_targets(static_cast<size_t>(B) * T * 8, 0);
    std::vector<double> arg_mask(static_cast<size_t>(B) * T * 8, 0.0);
    int64_t total_valid = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            const auto& q = gt.rows[b][t];
            cmd_targets[b * T + t] = q.cmd_id;
            if (t < gt.valid[b]) {
                step_mask[b * T + t] = 1.0;
                ++total_valid;
            }
            for (int a = 0; a < 8; ++a) {
                arg_targets[(b * T + t) * 8 + a] = q.arg_bins[a];
                if (q.mask[a]) arg_mask[(b * T + t) * 8 + a] = 1.0;
            }
        }
    if (total_valid == 0) return Tensor::scalar(0.0);

    Tensor ce_cmd = cross_entropy_with_logits(pred.cmd_logits, cmd_targets);      // [B,T]
    ce_cmd = mul(ce_cmd, Tensor::from({B, T}, std::move(step_mask)));
    Tensor ce_arg = cross_entropy_with_logits(pred.arg_logits, arg_targets);      // [B,T,8]
    ce_arg = mul(ce_arg, Tensor::from({B, T, 8}, std::move(arg_mask)));
    Tensor totals = add(scale(sum(ce_cmd), w_cmd), sum(ce_arg));
    return scale(totals, 1.0 / static_cast<double>(total_valid));
}

CeBreakdown ce_breakdown(const SeqPrediction& pred, const std::vector<Glyph>& targets, int n_max) {
    NoGradGuard ng;
    const GtBatch gt = quantize_targets(targets, n_max);
    const int64_t B = gt.B, T = gt.T;
    std::vector<int> cmd_targets(static_cast<size_t>(B) * T, 0);
    std::vector<int> arg_targets(static_cast<size_t>(B) * T * 8, 0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            cmd_targets[b * T + t] = gt.rows[b][t].cmd_id;
            for (int a = 0; a < 8; ++a)
                arg_targets[(b * T + t) * 8 + a] = gt.rows[b][t].arg_bins[a];
        }
    const Tensor ce_cmd = cross_entropy_with_logits(pred.cmd_logits, cmd_targets);
    const Tensor ce_arg = cross_entropy_with_logits(pred.arg_logits, arg_targets);
    CeBreakdown out;
    int64_t n_steps = 0, n_args = 0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            if (t < gt.valid[b]) {
                out.cmd_ce += ce_cmd.data()[b * T + t];
                ++n_steps;
            }
            for (int a = 0; a < 8; ++a)
                if (gt.rows[b][t].mask[a]) {
                    out.arg_ce += ce_arg.data()[(b * T + t) * 8 + a];
                    ++n_args;
                }
        }
    if (n_steps) out.cmd_ce /= static_cast<double>(n_steps);
    if (n_args) out.arg_ce /= static_cast<double>(n_args);
    return out;
}

namespace {

// Σ over gated junctions of the squared gap between end(j-1) and start(j).
Tensor cons_term(const Tensor& arg_logits, const GtBatch& gt) {
    const int64_t B = gt.B, T = gt.T;
    Tensor coords = soft_coords(arg_logits);            // [B,T,8]
    Tensor starts = slice(coords, 2, 0, 2);             // [B,T,2]
    Tensor ends = slice(coords, 2, 6, 8);
    Tensor gaps = sub(slice(starts, 1, 1, T), slice(ends, 1, 0, T - 1));  // [B,T-1,2]

    std::vector<double> gate(static_cast<size_t>(B) * (T - 1) * 2, 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 1; j < T; ++j) {
            const bool on = is_seg_id(gt.rows[b][j].cmd_id) && is_seg_id(gt.rows[b][j - 1].cmd_id);
            if (on) {
                gate[(b * (T - 1) + (j - 1)) * 2] = 1.0;
                gate[(b * (T - 1) + (j - 1)) * 2 + 1] = 1.0;
            }
        }
    Tensor sq = mul(mul(gaps, gaps), Tensor::from({B, T - 1, 2}, std::move(gate)));
    return sum(sq);
}

// Bernstein application matrices: coords [.,8] -> point [.,2] at parameter r,
// for a native cubic and for a line lifted to a cubic.
void bezier_matrices(double r, std::vector<double>& m_curve, std::vector<double>& m_line) {
    const auto w = bernstein3(r);
    m_curve.assign(16, 0.0);
    m_line.assign(16, 0.0);
    for (int k = 0; k < 4; ++k) {
        m_curve[(2 * k) * 2] = w[k];
        m_curve[(2 * k + 1) * 2 + 1] = w[k];
    }
    const double wa = w[0] + 2.0 * w[1] / 3.0 + w[2] / 3.0;
    const double wb = w[1] / 3.0 + 2.0 * w[2] / 3.0 + w[3];
    m_line[0] = wa;
    m_line[1 * 2 + 1] = wa;
    m_line[6 * 2] = wb;
    m_line[7 * 2 + 1] = wb;
}

// Σ over aux parameters and gated steps of the squared distance between the
// predicted and ground-truth curve points.
Tensor bezier_term(const Tensor& arg_logits, const Tensor& gt_coords, const GtBatch& gt,
                   const AuxParams& aux) {
    const int64_t B = gt.B, T = gt.T;
    Tensor coords = soft_coords(arg_logits);  // [B,T,8]

    std::vector<double> curve_gate(static_cast<size_t>(B) * T * 2, 0.0);
    std::vector<double> line_gate(static_cast<size_t>(B) * T * 2, 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            const int id = gt.rows[b][t].cmd_id;
            if (id == static_cast<int>(CommandType::CurveFromTo)) {
                curve_gate[(b * T + t) * 2] = curve_gate[(b * T + t) * 2 + 1] = 1.0;
            } else if (id == static_cast<int>(CommandType::LineFromTo)) {
                line_gate[(b * T + t) * 2] = line_gate[(b * T + t) * 2 + 1] = 1.0;
            }
        }
    const Tensor cg = Tensor::from({B, T, 2}, std::move(curve_gate));
    const Tensor lg = Tensor::from({B, T, 2}, std::move(line_gate));

    Tensor acc = Tensor::scalar(0.0);
    std::vector<double> mc, ml;
    for (double r : aux.r_values) {
        bezier_matrices(r, mc, ml);
        const Tensor Mc = Tensor::from({8, 2}, mc);
        const Tensor Ml = Tensor::from({8, 2}, ml);
        Tensor pred_pt = add(mul(matmul(coords, Mc), cg), mul(matmul(coords, Ml), lg));
        Tensor gt_pt = add(mul(matmul(gt_coords, Mc), cg), mul(matmul(gt_coords, Ml), lg));
        Tensor d = sub(pred_pt, gt_pt);
        acc = add(acc, sum(mul(d, d)));
    }
    return acc;
}

}  // namespace

Tensor loss_cons(const SeqPrediction& initial, const SeqPrediction* refined,
                 const std::vector<Glyph>& targets, int n_max) {
    const GtBatch gt = quantize_targets(targets, n_max);
    Tensor acc = cons_term(initial.arg_logits, gt);
    if (refined) acc = add(acc, cons_term(refined->arg_logits, gt));
    return scale(acc, 1.0 / static_cast<double>(gt.B));
}

Tensor loss_bezier(const SeqPrediction& initial, const SeqPrediction* refined,
                   const std::vector<Glyph>& targets, int n_max, const AuxParams& aux) {
    if (aux.r_values.empty()) return Tensor::scalar(0.0);
    const GtBatch gt = quantize_targets(targets, n_max);
    const Tensor gtc = gt_coord_tensor(gt);
    Tensor acc = bezier_term(initial.arg_logits, gtc, gt, aux);
    if (refined) acc = add(acc, bezier_term(refined->arg_logits, gtc, gt, aux));
    return scale(acc, 1.0 / static_cast<double>(gt.B));
}

Tensor loss_kl(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape()) throw ShapeError("loss_kl: mu/logvar shape mismatch");
    const int64_t B = mu.ndim() > 1 ? mu.dim(0) : 1;
    Tensor t = sub(sub(add(logvar, Tensor::scalar(1.0)), mul(mu, mu)), exp(logvar));
    return scale(sum(t), -0.5 / static_cast<double>(B));
}

Tensor total_loss(const Tensor& l_img, const Tensor& l_ce_init, const Tensor& l_ce_refine,
                  const Tensor& l_cons, const Tensor& l_bezier, const Tensor& l_kl,
                  const LossWeights& w, LossReport* report) {
    const Tensor* terms[6] = {&l_img, &l_ce_init, &l_ce_refine, &l_cons, &l_bezier, &l_kl};
    const double weights[6] = {w.w_img, w.w_ce_init, w.w_ce_refine, w.w_cons, w.w_bezier, w.w_kl};
    const char* names[6] = {"l_img", "l_ce_init", "l_ce_refine", "l_cons", "l_bezier", "l_kl"};
    for (int i = 0; i < 6; ++i)
        if (!std::isfinite(terms[i]->item()))
            throw NumericError(std::string("total_loss: non-finite term ") + names[i]);

    Tensor total = scale(l_img, w.w_img);
    for (int i = 1; i < 6; ++i) total = add(total, scale(*terms[i], weights[i]));
    if (report) {
        report->l_img = l_img.item();
        report->l_ce_init = l_ce_init.item();
        report->l_ce_refine = l_ce_refine.item();
        report->l_cons = l_cons.item();
        report->l_bezier = l_bezier.item();
        report->l_kl = l_kl.item();
        report->total = total.item();
    }
    return total;
}

}  // namespace vecfont
