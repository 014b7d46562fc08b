#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vecfont/embedding.hpp"
#include "vecfont/raster.hpp"

namespace vecfont {

struct ModelConfig {
    int d_e = 128;
    int n_max = 24;
    int n_char = 8;
    int n_r = 4;
    int resolution = 64;
    int heads = 4;
    int dec_depth = 4;
    int ffn_mult = 4;
    int img_base_ch = 32;
    int aux_points = 3;
    bool use_refiner = true;
    bool use_perceptual = true;

    // fixed by the architecture
    static constexpr int enc_depth = 6;
    static constexpr int refiner_depth = 2;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct AttnParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

// Pre-norm Transformer block; cross-attention members are used by decoder
// blocks only.
struct BlockParams {
    Tensor ln1_g, ln1_b;
    AttnParams self_attn;
    bool has_cross = false;
    Tensor lnc_g, lnc_b;
    AttnParams cross_attn;
    Tensor ln2_g, ln2_b;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct HeadParams {
    Tensor w1, b1, w2, b2;  // d -> d -> 4 + 8*256
};

struct ConvParams {
    Tensor w, b;
};

struct ModelParams {
    ModelConfig cfg;
    EmbeddingParams embed;
    Tensor class_emb;  // [n_char, d_E], conditions decoding on the target class

    std::vector<BlockParams> encoder;  // 6 blocks
    Tensor enc_ln_g, enc_ln_b;
    Tensor agg_w, agg_b;  // [n_r*d, d]

    std::vector<ConvParams> img_enc;  // 4 stride-2 convs
    Tensor img_enc_lin_w, img_enc_lin_b;
    Tensor img_dec_lin_w, img_dec_lin_b;
    std::vector<ConvParams> img_dec;  // 4 stride-2 transposed convs, last to 1 channel

    Tensor fuse_w, fuse_b;  // [2d, 2d] -> (mu, logvar)
    Tensor bos_token;       // [d]

    std::vector<BlockParams> decoder;
    Tensor dec_ln_g, dec_ln_b;
    HeadParams head;

    std::vector<BlockParams> refiner;  // 2 blocks
    Tensor ref_ln_g, ref_ln_b;
    HeadParams ref_head;

    std::vector<ConvParams> percep;  // frozen random 3-block feature stack

    static ModelParams init(const ModelConfig& cfg, std::mt19937_64& rng);
    NamedParams trainable() const;
    NamedParams all_named() const;  // trainable + frozen, for checkpoints

    void save(const std::string& tensor_path, const std::string& config_path) const;
    static ModelParams load(const std::string& tensor_path, const std::string& config_path);
};

struct StyleFeature {
    Tensor f;       // [B, d]
    Tensor mu;      // [B, d]
    Tensor logvar;  // [B, d]
};

struct SeqPrediction {
    Tensor cmd_logits;  // [B, T, 4]
    Tensor arg_logits;  // [B, T, 8, 256]
    std::vector<std::vector<int>> cmd_ids;                 // [B][T]
    std::vector<std::vector<std::array<int, 8>>> arg_bins; // [B][T]
    std::vector<int> length;                               // first EOS per sample, or T
};

struct EncodedRefs {
    Tensor f_seq;  // [B, n_max+1, d]
    Tensor f_img;  // [B, d]
};

enum class FuseMode { Stochastic, Deterministic };

// Embeds and encodes the reference glyphs, aggregates the per-position tokens
// across references, and encodes the channel-stacked reference images.
EncodedRefs encode_refs(const ModelParams& p, const std::vector<std::vector<Glyph>>& refs,
                        const std::vector<std::vector<const RasterImage*>>& ref_images);

Tensor encode_image(const ModelParams& p, const Tensor& imgs);  // [B,N_r,res,res] -> [B,d]
Tensor decode_image(const ModelParams& p, const Tensor& f);     // [B,d] -> [B,res*res] logits

StyleFeature fuse(const ModelParams& p, const Tensor& f_img, const Tensor& f0_seq, FuseMode mode,
                  std::mt19937_64* rng);

// Adds the target-class embedding to the fused style feature. Both decoders
// consume the conditioned feature.
Tensor condition_on_class(const ModelParams& p, const Tensor& f, const std::vector<int>& classes);

// Decoder memory: the conditioned fused feature replaces the modality token
// at position 0.
Tensor build_memory(const ModelParams& p, const Tensor& f_c, const Tensor& f_seq);

// Teacher-forced pass over the whole batch.
SeqPrediction decode_sequence_tf(const ModelParams& p, const Tensor& memory,
                                 const std::vector<Glyph>& targets);

// Greedy autoregressive decoding for one sample (memory [1, n_max+1, d]).
SeqPrediction decode_sequence_ar(const ModelParams& p, const Tensor& memory, int max_len);

// Non-autoregressive 2-block refinement of the initial predictions. Queries
// re-embed the argmax commands; self-attention keys beyond each sample's
// predicted length are masked out.
SeqPrediction refine(const ModelParams& p, const SeqPrediction& initial, const Tensor& memory);

// Relaxed glyph from predicted ids/bins. Leading non-Move commands are
// dropped so the result satisfies the structural invariants.
Glyph prediction_to_glyph(const std::vector<int>& cmd_ids,
                          const std::vector<std::array<int, 8>>& arg_bins, int length,
                          int char_class);

}  // namespace vecfont
