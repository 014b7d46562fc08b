#pragma once

#include <functional>
#include <optional>
#include <string>

#include "vecfont/losses.hpp"
#include "vecfont/toyfont.hpp"

namespace vecfont {

struct TrainConfig {
    ModelConfig model;
    int batch_size = 8;
    int steps = 5000;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int warmup = 100;
    uint64_t seed = 0;
    LossWeights weights;
    int eval_every = 0;        // run the re-synthesis eval every k steps (0 = never)
    double early_stop_l1 = 0;  // stop once the eval L1 falls below this (0 = off)
    std::string log_path;      // per-step metric JSON-lines (empty = no log)
    std::string ckpt_path;     // tensor container path (empty = no checkpoint)
    std::string config_path;   // model config path, next to the checkpoint
};

struct TrainResult {
    LossReport last;
    int steps_run = 0;
    double eval_l1 = -1.0;
    double eval_gap = -1.0;
    CeBreakdown ce_init;
    CeBreakdown ce_refined;
};

// Teacher-forced training per the full objective; Adam updates, per-step
// metric log, checkpoint at the end. Aborts (saving the last parameters that
// produced a finite loss) when the loss turns non-finite.
ModelParams train(const TrainConfig& cfg, const ToyDataset& data, TrainResult* result = nullptr);

struct SynthOptions {
    int n_s = 10;
    double iou_threshold = 0.5;
    int refs_from = 0;  // first reference class index; refs are classes refs_from..refs_from+n_r-1
};

struct SynthResult {
    Glyph glyph;                  // merged compact output
    Glyph relaxed;                // relaxed output before merging
    RasterImage synth_image;      // image-branch output used for candidate selection
    std::vector<double> ious;     // one per candidate
    int chosen = 0;
    double mean_junction_gap = 0; // pre-merge junction gap of the chosen candidate
    bool all_empty = false;
};

// Few-shot synthesis: deterministic image decode, N_s noise-perturbed
// sequence candidates, IOU selection against the synthesized image.
SynthResult synthesize(const ModelParams& p, const std::vector<Glyph>& refs,
                       const std::vector<const RasterImage*>& ref_images, int target_class, int n_s,
                       std::mt19937_64& rng, double iou_threshold = 0.5);

// Deterministic blend of two reference styles; lambda must lie in [0,1] and
// the endpoints reproduce the corresponding style bit-exactly.
std::vector<Glyph> interpolate(const ModelParams& p, const std::vector<Glyph>& refs_a,
                               const std::vector<const RasterImage*>& imgs_a,
                               const std::vector<Glyph>& refs_b,
                               const std::vector<const RasterImage*>& imgs_b, double lambda,
                               const std::vector<int>& classes);

// Interpolated style features only (position 0 of the blended memory).
struct InterpFeatures {
    Tensor f_a, f_b, f_inter;
};
InterpFeatures interpolate_features(const ModelParams& p, const std::vector<Glyph>& refs_a,
                                    const std::vector<const RasterImage*>& imgs_a,
                                    const std::vector<Glyph>& refs_b,
                                    const std::vector<const RasterImage*>& imgs_b, double lambda);

struct EvalResult {
    double mean_l1 = 0;
    double mean_junction_gap = 0;
    int n_glyphs = 0;
};

// Noise-free autoregressive re-synthesis of every glyph in the dataset,
// scored against the ground-truth rasters.
EvalResult evaluate_resynthesis(const ModelParams& p, const ToyDataset& data);

// Few-shot synthesis over a (test) split with the candidate-selection
// protocol; deterministic in the seed.
EvalResult evaluate_fewshot(const ModelParams& p, const ToyDataset& data, int n_s, uint64_t seed);

}  // namespace vecfont
