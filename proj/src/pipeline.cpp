#include "vecfont/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

namespace vecfont {

namespace {

struct Adam {
    double lr, beta1, beta2, eps;
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;

    explicit Adam(const NamedParams& params, const TrainConfig& cfg)
        : lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps) {
        for (const auto& [name, p] : params) {
            m.emplace_back(p.numel(), 0.0);
            v.emplace_back(p.numel(), 0.0);
        }
    }

    void step(NamedParams& params, double lr_now) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i].second;
            const auto& g = p.grad();
            auto& val = p.raw();
            for (size_t j = 0; j < val.size(); ++j) {
                m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g[j];
                v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g[j] * g[j];
                val[j] -= lr_now * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
            }
        }
    }
};

// relaxed glyphs of a dataset, cached once
std::vector<std::vector<Glyph>> relax_all(const ToyDataset& d) {
    std::vector<std::vector<Glyph>> out(d.fonts.size());
    for (size_t f = 0; f < d.fonts.size(); ++f)
        for (const auto& g : d.fonts[f].glyphs) out[f].push_back(to_relaxed(g));
    return out;
}

struct Batch {
    std::vector<std::vector<Glyph>> refs;                  // [B][n_r]
    std::vector<std::vector<const RasterImage*>> ref_imgs; // [B][n_r]
    std::vector<Glyph> targets;                            // relaxed
    std::vector<const RasterImage*> target_imgs;
    std::vector<int> classes;
};

Batch sample_batch(const ToyDataset& data, const std::vector<std::vector<Glyph>>& relaxed,
                   int batch_size, int n_r, std::mt19937_64& rng) {
    Batch b;
    std::uniform_int_distribution<int> font_dist(0, static_cast<int>(data.fonts.size()) - 1);
    std::uniform_int_distribution<int> cls_dist(0, kToyClasses - 1);
    for (int i = 0; i < batch_size; ++i) {
        const int f = font_dist(rng);
        const int target = cls_dist(rng);
        // n_r distinct reference classes via a partial shuffle
        std::array<int, kToyClasses> order;
        for (int c = 0; c < kToyClasses; ++c) order[c] = c;
        for (int c = 0; c < n_r; ++c) {
            std::uniform_int_distribution<int> pick(c, kToyClasses - 1);
            std::swap(order[c], order[pick(rng)]);
        }
        std::vector<Glyph> refs;
        std::vector<const RasterImage*> imgs;
        for (int c = 0; c < n_r; ++c) {
            refs.push_back(relaxed[f][order[c]]);
            imgs.push_back(&data.images[f][order[c]]);
        }
        b.refs.push_back(std::move(refs));
        b.ref_imgs.push_back(std::move(imgs));
        b.targets.push_back(relaxed[f][target]);
        b.target_imgs.push_back(&data.images[f][target]);
        b.classes.push_back(target);
    }
    return b;
}

void snapshot_params(const NamedParams& params, std::vector<std::vector<double>>& snap) {
    snap.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) snap[i] = params[i].second.data();
}

void write_log_line(std::ofstream& log, int step, const LossReport& r) {
    nlohmann::json j{{"step", step},       {"l_img", r.l_img},       {"l_ce_init", r.l_ce_init},
                     {"l_ce_refine", r.l_ce_refine}, {"l_cons", r.l_cons}, {"l_bezier", r.l_bezier},
                     {"l_kl", r.l_kl},     {"total", r.total}};
    log << j.dump() << '\n';
}

}  // namespace

ModelParams train(const TrainConfig& cfg, const ToyDataset& data, TrainResult* result) {
    if (data.fonts.empty()) throw DomainError("train: empty dataset");
    if (data.resolution != cfg.model.resolution)
        throw ConfigError("train: dataset resolution " + std::to_string(data.resolution) +
                          " does not match model resolution " +
                          std::to_string(cfg.model.resolution));

    std::mt19937_64 rng(cfg.seed);
    ModelParams params = ModelParams::init(cfg.model, rng);
    NamedParams named = params.trainable();
    Adam opt(named, cfg);
    const auto relaxed = relax_all(data);
    const AuxParams aux = AuxParams::uniform(cfg.model.aux_points);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw IoError("cannot open for writing: " + cfg.log_path);
    }

    auto save_ckpt = [&]() {
        if (!cfg.ckpt_path.empty()) params.save(cfg.ckpt_path, cfg.config_path);
    };

    std::vector<std::vector<double>> last_good;
    snapshot_params(named, last_good);
    TrainResult res;

    for (int step = 0; step < cfg.steps; ++step) {
        const Batch batch = sample_batch(data, relaxed, cfg.batch_size, cfg.model.n_r, rng);

        EncodedRefs enc = encode_refs(params, batch.refs, batch.ref_imgs);
        Tensor f0 = reshape(slice(enc.f_seq, 1, 0, 1), {static_cast<int64_t>(batch.refs.size()),
                                                        static_cast<int64_t>(cfg.model.d_e)});
        StyleFeature style = fuse(params, enc.f_img, f0, FuseMode::Stochastic, &rng);
        Tensor f_c = condition_on_class(params, style.f, batch.classes);
        Tensor img_logits = decode_image(params, f_c);
        Tensor memory = build_memory(params, f_c, enc.f_seq);

        SeqPrediction initial = decode_sequence_tf(params, memory, batch.targets);
        std::optional<SeqPrediction> refined;
        if (cfg.model.use_refiner) refined = refine(params, initial, memory);

        Tensor l_img = loss_img(params, img_logits, batch.target_imgs);
        Tensor l_ce_init = loss_ce(initial, batch.targets, cfg.model.n_max, cfg.weights.w_cmd);
        Tensor l_ce_ref = refined ? loss_ce(*refined, batch.targets, cfg.model.n_max, cfg.weights.w_cmd)
                                  : Tensor::scalar(0.0);
        const SeqPrediction* refp = refined ? &*refined : nullptr;
        Tensor l_cons = loss_cons(initial, refp, batch.targets, cfg.model.n_max);
        Tensor l_bez = loss_bezier(initial, refp, batch.targets, cfg.model.n_max, aux);
        Tensor l_kl = loss_kl(style.mu, style.logvar);

        LossReport report;
        Tensor total;
        try {
            total = total_loss(l_img, l_ce_init, l_ce_ref, l_cons, l_bez, l_kl, cfg.weights, &report);
        } catch (const NumericError&) {
            // restore and save the last parameters that produced a finite loss
            for (size_t i = 0; i < named.size(); ++i) named[i].second.raw() = last_good[i];
            save_ckpt();
            throw;
        }
        snapshot_params(named, last_good);

        for (auto& [name, p] : named) p.zero_grad();
        backward(total);
        const double lr_now =
            cfg.lr * (cfg.warmup > 0 ? std::min(1.0, (step + 1.0) / cfg.warmup) : 1.0);
        opt.step(named, lr_now);

        if (log.is_open()) write_log_line(log, step, report);
        res.last = report;
        res.steps_run = step + 1;

        if (step + 1 == cfg.steps || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)) {
            if (cfg.early_stop_l1 > 0 || step + 1 == cfg.steps) {
                const EvalResult ev = evaluate_resynthesis(params, data);
                res.eval_l1 = ev.mean_l1;
                res.eval_gap = ev.mean_junction_gap;
                if (cfg.early_stop_l1 > 0 && ev.mean_l1 <= cfg.early_stop_l1) {
                    std::cerr << "early stop at step " << step + 1 << " (eval L1 " << ev.mean_l1
                              << ")\n";
                    break;
                }
            }
        }
    }

    // converged cross-entropy comparison on a deterministic final batch
    {
        NoGradGuard ng;
        std::mt19937_64 eval_rng(cfg.seed + 1);
        const Batch batch = sample_batch(data, relaxed, cfg.batch_size, cfg.model.n_r, eval_rng);
        EncodedRefs enc = encode_refs(params, batch.refs, batch.ref_imgs);
        Tensor f0 = reshape(slice(enc.f_seq, 1, 0, 1), {static_cast<int64_t>(batch.refs.size()),
                                                        static_cast<int64_t>(cfg.model.d_e)});
        StyleFeature style = fuse(params, enc.f_img, f0, FuseMode::Deterministic, nullptr);
        Tensor f_c = condition_on_class(params, style.f, batch.classes);
        Tensor memory = build_memory(params, f_c, enc.f_seq);
        SeqPrediction initial = decode_sequence_tf(params, memory, batch.targets);
        res.ce_init = ce_breakdown(initial, batch.targets, cfg.model.n_max);
        if (cfg.model.use_refiner) {
            SeqPrediction refined = refine(params, initial, memory);
            res.ce_refined = ce_breakdown(refined, batch.targets, cfg.model.n_max);
        }
    }

    save_ckpt();
    if (result) *result = res;
    return params;
}

// --- synthesis ------------------------------------------------------------------

namespace {

struct DecodedCandidate {
    Glyph relaxed;
    Glyph merged;
    double gap = 0.0;
};

DecodedCandidate decode_candidate(const ModelParams& p, const Tensor& memory, int target_class) {
    DecodedCandidate out;
    SeqPrediction pred = decode_sequence_ar(p, memory, p.cfg.n_max);
    if (p.cfg.use_refiner) pred = refine(p, pred, memory);
    out.relaxed = prediction_to_glyph(pred.cmd_ids[0], pred.arg_bins[0], pred.length[0], target_class);
    const auto gaps = junction_gaps(out.relaxed);
    out.gap = gaps.empty() ? 0.0
                           : std::accumulate(gaps.begin(), gaps.end(), 0.0) /
                                 static_cast<double>(gaps.size());
    out.merged = merge_relaxed(out.relaxed);
    return out;
}

std::vector<Glyph> relax_refs(const std::vector<Glyph>& refs) {
    std::vector<Glyph> out;
    for (const auto& g : refs) out.push_back(g.rep_kind == RepKind::Compact ? to_relaxed(g) : g);
    return out;
}

}  // namespace

SynthResult synthesize(const ModelParams& p, const std::vector<Glyph>& refs,
                       const std::vector<const RasterImage*>& ref_images, int target_class, int n_s,
                       std::mt19937_64& rng, double iou_threshold) {
    if (n_s < 1) throw DomainError("synthesize: n_s must be at least 1");
    NoGradGuard ng;
    const int64_t d = p.cfg.d_e;

    EncodedRefs enc = encode_refs(p, {relax_refs(refs)}, {ref_images});
    Tensor f0 = reshape(slice(enc.f_seq, 1, 0, 1), {1, d});
    const std::vector<int> cls{target_class};

    // the synthesized image comes from the noise-free style feature
    StyleFeature det = fuse(p, enc.f_img, f0, FuseMode::Deterministic, nullptr);
    Tensor img = sigmoid(decode_image(p, condition_on_class(p, det.f, cls)));
    SynthResult res;
    res.synth_image.resolution = p.cfg.resolution;
    res.synth_image.pixels = img.data();

    double best = -1.0;
    int n_nonempty = 0;
    for (int s = 0; s < n_s; ++s) {
        Tensor noise = Tensor::randn({1, d}, rng, 1.0);
        StyleFeature cand = fuse(p, enc.f_img, add(f0, noise), FuseMode::Deterministic, nullptr);
        Tensor memory = build_memory(p, condition_on_class(p, cand.f, cls), enc.f_seq);
        DecodedCandidate dec = decode_candidate(p, memory, target_class);
        if (!dec.merged.empty()) ++n_nonempty;
        const RasterImage raster = rasterize(dec.merged, p.cfg.resolution, FillRule::NonZero);
        const double score = iou(raster, res.synth_image, iou_threshold);
        res.ious.push_back(score);
        if (score > best) {
            best = score;
            res.chosen = s;
            res.glyph = dec.merged;
            res.relaxed = dec.relaxed;
            res.mean_junction_gap = dec.gap;
        }
    }
    res.all_empty = n_nonempty == 0;
    if (res.all_empty) std::cerr << "synthesize: all candidates empty\n";
    return res;
}

std::vector<Glyph> interpolate(const ModelParams& p, const std::vector<Glyph>& refs_a,
                               const std::vector<const RasterImage*>& imgs_a,
                               const std::vector<Glyph>& refs_b,
                               const std::vector<const RasterImage*>& imgs_b, double lambda,
                               const std::vector<int>& classes) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("interpolate: lambda outside [0,1]");
    NoGradGuard ng;
    const int64_t d = p.cfg.d_e;

    EncodedRefs ea = encode_refs(p, {relax_refs(refs_a)}, {imgs_a});
    EncodedRefs eb = encode_refs(p, {relax_refs(refs_b)}, {imgs_b});
    StyleFeature sa = fuse(p, ea.f_img, reshape(slice(ea.f_seq, 1, 0, 1), {1, d}),
                           FuseMode::Deterministic, nullptr);
    StyleFeature sb = fuse(p, eb.f_img, reshape(slice(eb.f_seq, 1, 0, 1), {1, d}),
                           FuseMode::Deterministic, nullptr);

    // endpoints reproduce the corresponding style bit-exactly
    Tensor f_int, seq_int;
    if (lambda == 0.0) {
        f_int = sa.f;
        seq_int = ea.f_seq;
    } else if (lambda == 1.0) {
        f_int = sb.f;
        seq_int = eb.f_seq;
    } else {
        f_int = add(scale(sa.f, 1.0 - lambda), scale(sb.f, lambda));
        seq_int = add(scale(ea.f_seq, 1.0 - lambda), scale(eb.f_seq, lambda));
    }

    std::vector<Glyph> out;
    for (int cls : classes) {
        Tensor memory = build_memory(p, condition_on_class(p, f_int, {cls}), seq_int);
        out.push_back(decode_candidate(p, memory, cls).merged);
    }
    return out;
}

InterpFeatures interpolate_features(const ModelParams& p, const std::vector<Glyph>& refs_a,
                                    const std::vector<const RasterImage*>& imgs_a,
                                    const std::vector<Glyph>& refs_b,
                                    const std::vector<const RasterImage*>& imgs_b, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("interpolate: lambda outside [0,1]");
    NoGradGuard ng;
    const int64_t d = p.cfg.d_e;
    EncodedRefs ea = encode_refs(p, {relax_refs(refs_a)}, {imgs_a});
    EncodedRefs eb = encode_refs(p, {relax_refs(refs_b)}, {imgs_b});
    InterpFeatures out;
    out.f_a = fuse(p, ea.f_img, reshape(slice(ea.f_seq, 1, 0, 1), {1, d}), FuseMode::Deterministic,
                   nullptr)
                  .f;
    out.f_b = fuse(p, eb.f_img, reshape(slice(eb.f_seq, 1, 0, 1), {1, d}), FuseMode::Deterministic,
                   nullptr)
                  .f;
    if (lambda == 0.0)
        out.f_inter = out.f_a;
    else if (lambda == 1.0)
        out.f_inter = out.f_b;
    else
        out.f_inter = add(scale(out.f_a, 1.0 - lambda), scale(out.f_b, lambda));
    return out;
}

// --- evaluation -----------------------------------------------------------------

EvalResult evaluate_resynthesis(const ModelParams& p, const ToyDataset& data) {
    NoGradGuard ng;
    const int64_t d = p.cfg.d_e;
    EvalResult out;
    double gap_acc = 0.0;
    int gap_n = 0;
    for (size_t f = 0; f < data.fonts.size(); ++f) {
        std::vector<Glyph> refs;
        std::vector<const RasterImage*> imgs;
        for (int c = 0; c < p.cfg.n_r; ++c) {
            refs.push_back(to_relaxed(data.fonts[f].glyphs[c % kToyClasses]));
            imgs.push_back(&data.images[f][c % kToyClasses]);
        }
        EncodedRefs enc = encode_refs(p, {refs}, {imgs});
        StyleFeature det = fuse(p, enc.f_img, reshape(slice(enc.f_seq, 1, 0, 1), {1, d}),
                                FuseMode::Deterministic, nullptr);
        for (int cls = 0; cls < static_cast<int>(data.fonts[f].glyphs.size()); ++cls) {
            Tensor memory = build_memory(p, condition_on_class(p, det.f, {cls}), enc.f_seq);
            DecodedCandidate dec = decode_candidate(p, memory, cls);
            const RasterImage raster = rasterize(dec.merged, data.resolution, FillRule::NonZero);
            out.mean_l1 += l1_error(raster, data.images[f][cls]);
            gap_acc += dec.gap;
            ++gap_n;
            ++out.n_glyphs;
        }
    }
    if (out.n_glyphs) out.mean_l1 /= out.n_glyphs;
    if (gap_n) out.mean_junction_gap = gap_acc / gap_n;
    return out;
}

EvalResult evaluate_fewshot(const ModelParams& p, const ToyDataset& data, int n_s, uint64_t seed) {
    std::mt19937_64 rng(seed);
    EvalResult out;
    double gap_acc = 0.0;
    for (size_t f = 0; f < data.fonts.size(); ++f) {
        std::vector<Glyph> refs;
        std::vector<const RasterImage*> imgs;
        for (int c = 0; c < p.cfg.n_r; ++c) {
            refs.push_back(data.fonts[f].glyphs[c % kToyClasses]);
            imgs.push_back(&data.images[f][c % kToyClasses]);
        }
        for (int cls = 0; cls < static_cast<int>(data.fonts[f].glyphs.size()); ++cls) {
            SynthResult s = synthesize(p, refs, imgs, cls, n_s, rng);
            const RasterImage raster = rasterize(s.glyph, data.resolution, FillRule::NonZero);
            out.mean_l1 += l1_error(raster, data.images[f][cls]);
            gap_acc += s.mean_junction_gap;
            ++out.n_glyphs;
        }
    }
    if (out.n_glyphs) {
        out.mean_l1 /= out.n_glyphs;
        out.mean_junction_gap = gap_acc / out.n_glyphs;
    }
    return out;
}

}  // namespace vecfont
