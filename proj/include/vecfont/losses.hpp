#pragma once

#include <optional>
#include <vector>

#include "vecfont/bezier.hpp"
#include "vecfont/model.hpp"

namespace vecfont {

struct LossWeights {
    double w_img = 1.0;
    double w_ce_init = 1.0;
    double w_ce_refine = 1.0;
    double w_cons = 10.0;
    double w_bezier = 1.0;
    double w_kl = 0.01;
    double w_cmd = 1.0;  // command-type weight inside the CE terms
};

struct LossReport {
    double l_img = 0, l_ce_init = 0, l_ce_refine = 0, l_cons = 0, l_bezier = 0, l_kl = 0;
    double total = 0;
};

// Ground-truth batch views shared by the loss terms.
struct TargetBatch {
    std::vector<Glyph> glyphs;                 // relaxed targets
    std::vector<const RasterImage*> images;    // target rasters
    std::vector<int> classes;
};

// mean |sigmoid(pred) - target| plus the frozen-feature perceptual term.
Tensor loss_img(const ModelParams& p, const Tensor& img_logits,
                const std::vector<const RasterImage*>& targets);

// Masked cross-entropy of Eq.-style command/argument logits vs the quantized
// targets, averaged over the valid (non-padding) steps; the step that should
// predict EOS counts as valid for the command term only.
Tensor loss_ce(const SeqPrediction& pred, const std::vector<Glyph>& targets, int n_max,
               double w_cmd);

struct CeBreakdown {
    double cmd_ce = 0;       // mean per valid step
    double arg_ce = 0;       // mean per used argument
};
CeBreakdown ce_breakdown(const SeqPrediction& pred, const std::vector<Glyph>& targets, int n_max);

// Expected coordinate values under the argument-bin softmax: [B,T,8] in [0,1].
Tensor soft_coords(const Tensor& arg_logits);

// Squared junction gaps between consecutive Line/Curve commands (ground-truth
// gated), summed per sample and averaged over the batch. `refined` may be
// null when the refiner is disabled.
Tensor loss_cons(const SeqPrediction& initial, const SeqPrediction* refined,
                 const std::vector<Glyph>& targets, int n_max);

// Curve alignment at the auxiliary parameters for the initial and refined
// predictions against the ground truth.
Tensor loss_bezier(const SeqPrediction& initial, const SeqPrediction* refined,
                   const std::vector<Glyph>& targets, int n_max, const AuxParams& aux);

Tensor loss_kl(const Tensor& mu, const Tensor& logvar);

// Weighted sum per the training objective; report keeps the unweighted terms.
Tensor total_loss(const Tensor& l_img, const Tensor& l_ce_init, const Tensor& l_ce_refine,
                  const Tensor& l_cons, const Tensor& l_bezier, const Tensor& l_kl,
                  const LossWeights& w, LossReport* report);

}  // namespace vecfont
