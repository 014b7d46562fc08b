#include "vecfont/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vecfont/checkpoint.hpp"

namespace vecfont {

void ModelConfig::validate() const {
    if (d_e <= 0 || d_e % heads != 0)
        throw ConfigError("d_e must be positive and divisible by heads");
    if (n_max <= 0 || n_char <= 0 || n_r <= 0 || dec_depth <= 0) throw ConfigError("bad model config");
    if (resolution < 16 || (resolution & (resolution - 1)) != 0)
        throw ConfigError("resolution must be a power of 2 and at least 16");
    if (aux_points < 0) throw ConfigError("aux_points must be nonnegative");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j{{"d_e", d_e},
                     {"n_max", n_max},
                     {"n_char", n_char},
                     {"n_r", n_r},
                     {"resolution", resolution},
                     {"heads", heads},
                     {"dec_depth", dec_depth},
                     {"ffn_mult", ffn_mult},
                     {"img_base_ch", img_base_ch},
                     {"aux_points", aux_points},
                     {"use_refiner", use_refiner},
                     {"use_perceptual", use_perceptual},
                     {"enc_depth", enc_depth},
                     {"refiner_depth", refiner_depth}};
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    ModelConfig c;
    c.d_e = j.at("d_e").get<int>();
    c.n_max = j.at("n_max").get<int>();
    c.n_char = j.at("n_char").get<int>();
    c.n_r = j.at("n_r").get<int>();
    c.resolution = j.at("resolution").get<int>();
    c.heads = j.at("heads").get<int>();
    c.dec_depth = j.at("dec_depth").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.img_base_ch = j.at("img_base_ch").get<int>();
    c.aux_points = j.at("aux_points").get<int>();
    c.use_refiner = j.at("use_refiner").get<bool>();
    c.use_perceptual = j.at("use_perceptual").get<bool>();
    c.validate();
    return c;
}

// --- init ----------------------------------------------------------------------

namespace {

Tensor lin_w(int64_t in, int64_t out, std::mt19937_64& rng) {
    return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
}

Tensor zeros_p(Shape s) { return Tensor::zeros(std::move(s), true); }
Tensor ones_p(Shape s) { return Tensor::full(std::move(s), 1.0, true); }

AttnParams attn_init(int d, std::mt19937_64& rng) {
    AttnParams a;
    a.wq = lin_w(d, d, rng);
    a.bq = zeros_p({d});
    a.wk = lin_w(d, d, rng);
    a.bk = zeros_p({d});
    a.wv = lin_w(d, d, rng);
    a.bv = zeros_p({d});
    a.wo = lin_w(d, d, rng);
    a.bo = zeros_p({d});
    return a;
}

BlockParams block_init(int d, int ffn_mult, bool cross, std::mt19937_64& rng) {
    BlockParams b;
    b.ln1_g = ones_p({d});
    b.ln1_b = zeros_p({d});
    b.self_attn = attn_init(d, rng);
    b.has_cross = cross;
    if (cross) {
        b.lnc_g = ones_p({d});
        b.lnc_b = zeros_p({d});
        b.cross_attn = attn_init(d, rng);
    }
    b.ln2_g = ones_p({d});
    b.ln2_b = zeros_p({d});
    b.ff_w1 = lin_w(d, static_cast<int64_t>(ffn_mult) * d, rng);
    b.ff_b1 = zeros_p({static_cast<int64_t>(ffn_mult) * d});
    b.ff_w2 = lin_w(static_cast<int64_t>(ffn_mult) * d, d, rng);
    b.ff_b2 = zeros_p({d});
    return b;
}

HeadParams head_init(int d, std::mt19937_64& rng) {
    HeadParams h;
    h.w1 = lin_w(d, d, rng);
    h.b1 = zeros_p({d});
    // small output scale keeps the initial logits near uniform
    h.w2 = Tensor::randn({d, 4 + 8LL * kBins}, rng, 0.02, true);
    h.b2 = zeros_p({4 + 8LL * kBins});
    return h;
}

ConvParams conv_init(int64_t c_out, int64_t c_in, int64_t k, std::mt19937_64& rng, bool grad = true) {
    ConvParams c;
    c.w = Tensor::randn({c_out, c_in, k, k}, rng, std::sqrt(2.0 / static_cast<double>(c_in * k * k)),
                        grad);
    c.b = Tensor::zeros({c_out}, grad);
    return c;
}

ConvParams tconv_init(int64_t c_in, int64_t c_out, int64_t k, std::mt19937_64& rng) {
    ConvParams c;
    c.w = Tensor::randn({c_in, c_out, k, k}, rng, std::sqrt(2.0 / static_cast<double>(c_in * k * k)),
                        true);
    c.b = Tensor::zeros({c_out}, true);
    return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

// Broadcast a vector [d] to [n, d] through a lookup so gradients accumulate.
Tensor tile_vector(const Tensor& v, int64_t n) {
    const int64_t d = v.numel();
    return embedding_lookup(reshape(v, {1, d}), std::vector<int>(static_cast<size_t>(n), 0), {n});
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.d_e;

    p.embed = EmbeddingParams::init(d, rng);
    p.class_emb = Tensor::randn({cfg.n_char, d}, rng, 0.02, true);

    for (int i = 0; i < ModelConfig::enc_depth; ++i)
        p.encoder.push_back(block_init(d, cfg.ffn_mult, false, rng));
    p.enc_ln_g = ones_p({d});
    p.enc_ln_b = zeros_p({d});
    p.agg_w = lin_w(static_cast<int64_t>(cfg.n_r) * d, d, rng);
    p.agg_b = zeros_p({d});

    const int bc = cfg.img_base_ch;
    const int chans[5] = {cfg.n_r, bc, 2 * bc, 4 * bc, 8 * bc};
    for (int i = 0; i < 4; ++i) p.img_enc.push_back(conv_init(chans[i + 1], chans[i], 3, rng));
    const int64_t spatial = cfg.resolution / 16;
    const int64_t flat = static_cast<int64_t>(chans[4]) * spatial * spatial;
    p.img_enc_lin_w = lin_w(flat, d, rng);
    p.img_enc_lin_b = zeros_p({d});

    p.img_dec_lin_w = lin_w(d, flat, rng);
    p.img_dec_lin_b = zeros_p({flat});
    const int dec_ch[5] = {8 * bc, 4 * bc, 2 * bc, bc, 1};
    for (int i = 0; i < 4; ++i) p.img_dec.push_back(tconv_init(dec_ch[i], dec_ch[i + 1], 4, rng));

    p.fuse_w = lin_w(2LL * d, 2LL * d, rng);
    p.fuse_b = zeros_p({2LL * d});
    p.bos_token = Tensor::randn({d}, rng, 0.02, true);

    for (int i = 0; i < cfg.dec_depth; ++i) p.decoder.push_back(block_init(d, cfg.ffn_mult, true, rng));
    p.dec_ln_g = ones_p({d});
    p.dec_ln_b = zeros_p({d});
    p.head = head_init(d, rng);

    for (int i = 0; i < ModelConfig::refiner_depth; ++i)
        p.refiner.push_back(block_init(d, cfg.ffn_mult, true, rng));
    p.ref_ln_g = ones_p({d});
    p.ref_ln_b = zeros_p({d});
    p.ref_head = head_init(d, rng);

    // frozen random feature stack for the perceptual term
    const int pc[4] = {1, 8, 16, 16};
    for (int i = 0; i < 3; ++i) p.percep.push_back(conv_init(pc[i + 1], pc[i], 3, rng, false));

    return p;
}

namespace {

void collect_attn(NamedParams& out, const std::string& pre, const AttnParams& a) {
    out.emplace_back(pre + ".wq", a.wq);
    out.emplace_back(pre + ".bq", a.bq);
    out.emplace_back(pre + ".wk", a.wk);
    out.emplace_back(pre + ".bk", a.bk);
    out.emplace_back(pre + ".wv", a.wv);
    out.emplace_back(pre + ".bv", a.bv);
    out.emplace_back(pre + ".wo", a.wo);
    out.emplace_back(pre + ".bo", a.bo);
}

void collect_block(NamedParams& out, const std::string& pre, const BlockParams& b) {
    out.emplace_back(pre + ".ln1.g", b.ln1_g);
    out.emplace_back(pre + ".ln1.b", b.ln1_b);
    collect_attn(out, pre + ".att", b.self_attn);
    if (b.has_cross) {
        out.emplace_back(pre + ".lnc.g", b.lnc_g);
        out.emplace_back(pre + ".lnc.b", b.lnc_b);
        collect_attn(out, pre + ".xatt", b.cross_attn);
    }
    out.emplace_back(pre + ".ln2.g", b.ln2_g);
    out.emplace_back(pre + ".ln2.b", b.ln2_b);
    out.emplace_back(pre + ".ff.w1", b.ff_w1);
    out.emplace_back(pre + ".ff.b1", b.ff_b1);
    out.emplace_back(pre + ".ff.w2", b.ff_w2);
    out.emplace_back(pre + ".ff.b2", b.ff_b2);
}

void collect_head(NamedParams& out, const std::string& pre, const HeadParams& h) {
    out.emplace_back(pre + ".w1", h.w1);
    out.emplace_back(pre + ".b1", h.b1);
    out.emplace_back(pre + ".w2", h.w2);
    out.emplace_back(pre + ".b2", h.b2);
}

}  // namespace

NamedParams ModelParams::trainable() const {
    NamedParams out;
    embed.collect(out, "embed");
    out.emplace_back("class_emb", class_emb);
    for (size_t i = 0; i < encoder.size(); ++i)
        collect_block(out, "enc." + std::to_string(i), encoder[i]);
    out.emplace_back("enc.ln.g", enc_ln_g);
    out.emplace_back("enc.ln.b", enc_ln_b);
    out.emplace_back("agg.w", agg_w);
    out.emplace_back("agg.b", agg_b);
    for (size_t i = 0; i < img_enc.size(); ++i) {
        out.emplace_back("img_enc." + std::to_string(i) + ".w", img_enc[i].w);
        out.emplace_back("img_enc." + std::to_string(i) + ".b", img_enc[i].b);
    }
    out.emplace_back("img_enc.lin.w", img_enc_lin_w);
    out.emplace_back("img_enc.lin.b", img_enc_lin_b);
    out.emplace_back("img_dec.lin.w", img_dec_lin_w);
    out.emplace_back("img_dec.lin.b", img_dec_lin_b);
    for (size_t i = 0; i < img_dec.size(); ++i) {
        out.emplace_back("img_dec." + std::to_string(i) + ".w", img_dec[i].w);
        out.emplace_back("img_dec." + std::to_string(i) + ".b", img_dec[i].b);
    }
    out.emplace_back("fuse.w", fuse_w);
    out.emplace_back("fuse.b", fuse_b);
    out.emplace_back("bos", bos_token);
    for (size_t i = 0; i < decoder.size(); ++i)
        collect_block(out, "dec." + std::to_string(i), decoder[i]);
    out.emplace_back("dec.ln.g", dec_ln_g);
    out.emplace_back("dec.ln.b", dec_ln_b);
    collect_head(out, "head", head);
    if (cfg.use_refiner) {
        for (size_t i = 0; i < refiner.size(); ++i)
            collect_block(out, "ref." + std::to_string(i), refiner[i]);
        out.emplace_back("ref.ln.g", ref_ln_g);
        out.emplace_back("ref.ln.b", ref_ln_b);
        collect_head(out, "ref_head", ref_head);
    }
    return out;
}

NamedParams ModelParams::all_named() const {
    NamedParams out = trainable();
    if (!cfg.use_refiner) {
        for (size_t i = 0; i < refiner.size(); ++i)
            collect_block(out, "ref." + std::to_string(i), refiner[i]);
        out.emplace_back("ref.ln.g", ref_ln_g);
        out.emplace_back("ref.ln.b", ref_ln_b);
        collect_head(out, "ref_head", ref_head);
    }
    for (size_t i = 0; i < percep.size(); ++i) {
        out.emplace_back("percep." + std::to_string(i) + ".w", percep[i].w);
        out.emplace_back("percep." + std::to_string(i) + ".b", percep[i].b);
    }
    return out;
}

void ModelParams::save(const std::string& tensor_path, const std::string& config_path) const {
    save_tensors(tensor_path, all_named());
    std::ofstream f(config_path);
    if (!f) throw IoError("cannot open for writing: " + config_path);
    f << cfg.to_json() << '\n';
}

ModelParams ModelParams::load(const std::string& tensor_path, const std::string& config_path) {
    std::ifstream f(config_path);
    if (!f) throw IoError("cannot open: " + config_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const ModelConfig cfg = ModelConfig::from_json(text);

    std::mt19937_64 rng(0);
    ModelParams p = init(cfg, rng);
    auto stored = load_tensors(tensor_path);
    for (auto& [name, t] : p.all_named()) {
        auto it = stored.find(name);
        if (it == stored.end()) throw IoError("checkpoint missing tensor '" + name + "'");
        if (it->second.shape() != t.shape())
            throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                             shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
        Tensor dst = t;
        dst.raw() = it->second.data();
    }
    return p;
}

// --- attention and blocks --------------------------------------------------------

namespace {

// Multi-head attention. attn_mask, when given, holds one byte per
// [B, h, Tq, Tk] score; nonzero bytes are filled with kNegInf before softmax.
Tensor mha(const Tensor& x_q, const Tensor& x_kv, const AttnParams& a, int heads,
           const std::vector<uint8_t>* attn_mask) {
    const int64_t B = x_q.dim(0), Tq = x_q.dim(1), d = x_q.dim(2);
    const int64_t Tk = x_kv.dim(1);
    const int64_t dk = d / heads;

    auto split_heads = [&](const Tensor& t, int64_t T) {
        return transpose(reshape(t, {B, T, heads, dk}), 1, 2);  // [B,h,T,dk]
    };
    Tensor q = split_heads(linear(x_q, a.wq, a.bq), Tq);
    Tensor k = split_heads(linear(x_kv, a.wk, a.bk), Tk);
    Tensor v = split_heads(linear(x_kv, a.wv, a.bv), Tk);

    Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dk)));
    if (attn_mask) scores = masked_fill(scores, *attn_mask, kNegInf);
    Tensor attn = softmax(scores);                     // [B,h,Tq,Tk]
    Tensor ctx = transpose(matmul(attn, v), 1, 2);     // [B,Tq,h,dk]
    return linear(reshape(ctx, {B, Tq, d}), a.wo, a.bo);
}

Tensor ffn(const Tensor& x, const BlockParams& b) {
    return linear(gelu(linear(x, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2);
}

Tensor encoder_block(const Tensor& x, const BlockParams& b, int heads) {
    Tensor n1 = layer_norm(x, b.ln1_g, b.ln1_b);
    Tensor h = add(x, mha(n1, n1, b.self_attn, heads, nullptr));
    return add(h, ffn(layer_norm(h, b.ln2_g, b.ln2_b), b));
}

Tensor decoder_block(const Tensor& x, const Tensor& memory, const BlockParams& b, int heads,
                     const std::vector<uint8_t>* self_mask) {
    Tensor n1 = layer_norm(x, b.ln1_g, b.ln1_b);
    Tensor h = add(x, mha(n1, n1, b.self_attn, heads, self_mask));
    h = add(h, mha(layer_norm(h, b.lnc_g, b.lnc_b), memory, b.cross_attn, heads, nullptr));
    return add(h, ffn(layer_norm(h, b.ln2_g, b.ln2_b), b));
}

std::vector<uint8_t> causal_mask(int64_t B, int heads, int64_t T) {
    std::vector<uint8_t> m(static_cast<size_t>(B) * heads * T * T, 0);
    for (int64_t b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
            for (int64_t q = 0; q < T; ++q)
                for (int64_t k = q + 1; k < T; ++k)
                    m[((static_cast<size_t>(b) * heads + h) * T + q) * T + k] = 1;
    return m;
}

struct HeadOut {
    Tensor cmd_logits;  // [B,T,4]
    Tensor arg_logits;  // [B,T,8,256]
};

HeadOut apply_head(const Tensor& x, const HeadParams& h) {
    const int64_t B = x.dim(0), T = x.dim(1);
    Tensor hidden = gelu(linear(x, h.w1, h.b1));
    Tensor logits = linear(hidden, h.w2, h.b2);  // [B,T,4+8*256]
    HeadOut out;
    out.cmd_logits = slice(logits, 2, 0, kNumCommandTypes);
    out.arg_logits = reshape(slice(logits, 2, kNumCommandTypes, kNumCommandTypes + 8 * kBins),
                             {B, T, 8, kBins});
    return out;
}

void fill_argmax(SeqPrediction& pred) {
    const int64_t B = pred.cmd_logits.dim(0), T = pred.cmd_logits.dim(1);
    const auto& cv = pred.cmd_logits.data();
    const auto& av = pred.arg_logits.data();
    pred.cmd_ids.assign(B, std::vector<int>(T, static_cast<int>(CommandType::EOS)));
    pred.arg_bins.assign(B, std::vector<std::array<int, 8>>(T));
    pred.length.assign(B, static_cast<int>(T));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            const double* c = cv.data() + (b * T + t) * kNumCommandTypes;
            int best = 0;
            for (int i = 1; i < kNumCommandTypes; ++i)
                if (c[i] > c[best]) best = i;
            pred.cmd_ids[b][t] = best;
            for (int a = 0; a < 8; ++a) {
                const double* bins = av.data() + (((b * T + t) * 8 + a) * kBins);
                int bb = 0;
                for (int i = 1; i < kBins; ++i)
                    if (bins[i] > bins[bb]) bb = i;
                pred.arg_bins[b][t][a] = bb;
            }
        }
        for (int64_t t = 0; t < T; ++t)
            if (pred.cmd_ids[b][t] == static_cast<int>(CommandType::EOS)) {
                pred.length[b] = static_cast<int>(t);
                break;
            }
    }
}

// Query rows for the decoder input or the refiner: predicted/target commands
// re-quantized with the relaxed mask of their own type. Width/height bins are
// zero on this side; the style information lives in the memory.
QuantizedCommand command_row(int cmd_id, const std::array<int, 8>& bins) {
    QuantizedCommand q;
    q.cmd_id = cmd_id;
    q.mask = mask_for(static_cast<CommandType>(cmd_id), RepKind::Relaxed);
    for (int i = 0; i < 8; ++i) q.arg_bins[i] = q.mask[i] ? bins[i] : 0;
    q.w_bin = q.h_bin = 0;
    return q;
}

}  // namespace

// --- reference encoding ------------------------------------------------------------

Tensor encode_image(const ModelParams& p, const Tensor& imgs) {
    Tensor x = imgs;
    for (const auto& c : p.img_enc) x = relu(conv2d(x, c.w, c.b, 2, 1));
    const int64_t B = x.dim(0);
    x = reshape(x, {B, x.numel() / B});
    return linear(x, p.img_enc_lin_w, p.img_enc_lin_b);
}

Tensor decode_image(const ModelParams& p, const Tensor& f) {
    const int64_t B = f.dim(0);
    const int64_t spatial = p.cfg.resolution / 16;
    const int64_t ch = 8LL * p.cfg.img_base_ch;
    Tensor x = relu(linear(f, p.img_dec_lin_w, p.img_dec_lin_b));
    x = reshape(x, {B, ch, spatial, spatial});
    for (size_t i = 0; i < p.img_dec.size(); ++i) {
        x = transposed_conv2d(x, p.img_dec[i].w, p.img_dec[i].b, 2, 1);
        if (i + 1 < p.img_dec.size()) x = relu(x);
    }
    return reshape(x, {B, static_cast<int64_t>(p.cfg.resolution) * p.cfg.resolution});
}

EncodedRefs encode_refs(const ModelParams& p, const std::vector<std::vector<Glyph>>& refs,
                        const std::vector<std::vector<const RasterImage*>>& ref_images) {
    const int64_t B = static_cast<int64_t>(refs.size());
    const int nr = p.cfg.n_r;
    const int T = p.cfg.n_max;
    const int d = p.cfg.d_e;
    if (B == 0) throw ShapeError("encode_refs: empty batch");
    for (const auto& r : refs)
        if (static_cast<int>(r.size()) != nr)
            throw ShapeError("encode_refs: expected " + std::to_string(nr) + " references, got " +
                             std::to_string(r.size()));
    for (const auto& r : ref_images)
        if (static_cast<int>(r.size()) != nr) throw ShapeError("encode_refs: reference image count");

    // embed all B*nr sequences in one batch
    std::vector<QuantizedCommand> rows;
    std::vector<int> positions;
    rows.reserve(static_cast<size_t>(B) * nr * T);
    for (const auto& sample : refs)
        for (const auto& g : sample) {
            if (g.rep_kind != RepKind::Relaxed)
                throw StructureError("encode_refs: reference glyphs must be relaxed");
            auto q = quantize_glyph(g, T);
            rows.insert(rows.end(), q.begin(), q.end());
            for (int t = 1; t <= T; ++t) positions.push_back(t);
        }
    Tensor cmds = embed_rows(rows, {B * nr, T}, positions, p.embed);        // [B*nr, T, d]
    Tensor tok = reshape(tile_vector(p.embed.modality_token, B * nr), {B * nr, 1, d});
    Tensor x = concat({tok, cmds}, 1);  // [B*nr, T+1, d]

    for (const auto& blk : p.encoder) x = encoder_block(x, blk, p.cfg.heads);
    x = layer_norm(x, p.enc_ln_g, p.enc_ln_b);

    // gather the j-th token of every reference and project to d
    x = reshape(x, {B, nr, T + 1, d});
    x = transpose(x, 1, 2);                       // [B, T+1, nr, d]
    x = reshape(x, {B, T + 1, static_cast<int64_t>(nr) * d});
    Tensor f_seq = linear(x, p.agg_w, p.agg_b);   // [B, T+1, d]

    // stack reference images channel-wise
    const int res = p.cfg.resolution;
    std::vector<double> img_data(static_cast<size_t>(B) * nr * res * res);
    for (int64_t b = 0; b < B; ++b)
        for (int r = 0; r < nr; ++r) {
            const RasterImage* im = ref_images[b][r];
            if (im->resolution != res) throw ShapeError("encode_refs: reference image resolution");
            std::copy(im->pixels.begin(), im->pixels.end(),
                      img_data.begin() + (static_cast<size_t>(b) * nr + r) * res * res);
        }
    Tensor imgs = Tensor::from({B, nr, res, res}, std::move(img_data));
    return {f_seq, encode_image(p, imgs)};
}

StyleFeature fuse(const ModelParams& p, const Tensor& f_img, const Tensor& f0_seq, FuseMode mode,
                  std::mt19937_64* rng) {
    const int64_t B = f_img.dim(0), d = f_img.dim(1);
    Tensor h = linear(concat({f_img, f0_seq}, 1), p.fuse_w, p.fuse_b);  // [B, 2d]
    StyleFeature s;
    s.mu = slice(h, 1, 0, d);
    s.logvar = slice(h, 1, d, 2 * d);
    if (mode == FuseMode::Deterministic) {
        s.f = s.mu;
    } else {
        if (!rng) throw DomainError("fuse: stochastic mode needs an rng");
        Tensor eps = Tensor::randn({B, d}, *rng, 1.0);
        s.f = add(s.mu, mul(exp(scale(s.logvar, 0.5)), eps));
    }
    return s;
}

Tensor condition_on_class(const ModelParams& p, const Tensor& f, const std::vector<int>& classes) {
    const int64_t B = f.dim(0);
    for (int c : classes)
        if (c < 0 || c >= p.cfg.n_char) throw DomainError("condition_on_class: class out of range");
    return add(f, embedding_lookup(p.class_emb, classes, {B}));
}

Tensor build_memory(const ModelParams& p, const Tensor& f_c, const Tensor& f_seq) {
    (void)p;
    const int64_t B = f_c.dim(0), d = f_c.dim(1);
    Tensor f0 = reshape(f_c, {B, 1, d});
    Tensor rest = slice(f_seq, 1, 1, f_seq.dim(1));
    return concat({f0, rest}, 1);
}

// --- sequence decoding ---------------------------------------------------------------

namespace {

Tensor run_decoder(const ModelParams& p, const Tensor& x_in, const Tensor& memory,
                   const std::vector<BlockParams>& blocks, const Tensor& ln_g, const Tensor& ln_b,
                   const std::vector<uint8_t>* self_mask) {
    Tensor x = x_in;
    for (const auto& blk : blocks) x = decoder_block(x, memory, blk, p.cfg.heads, self_mask);
    return layer_norm(x, ln_g, ln_b);
}

Tensor decoder_inputs(const ModelParams& p, const std::vector<std::vector<QuantizedCommand>>& rows,
                      int t_len) {
    const int64_t B = static_cast<int64_t>(rows.size());
    const int d = p.cfg.d_e;
    Tensor bos = reshape(tile_vector(p.bos_token, B), {B, 1, d});
    if (t_len == 1) return bos;
    std::vector<QuantizedCommand> flat;
    std::vector<int> positions;
    for (const auto& r : rows) {
        for (int t = 0; t + 1 < t_len; ++t) {
            flat.push_back(r[t]);
            positions.push_back(t + 1);
        }
    }
    Tensor emb = embed_rows(flat, {B, t_len - 1}, positions, p.embed);
    return concat({bos, emb}, 1);  // [B, t_len, d]
}

}  // namespace

SeqPrediction decode_sequence_tf(const ModelParams& p, const Tensor& memory,
                                 const std::vector<Glyph>& targets) {
    const int64_t B = memory.dim(0);
    const int T = p.cfg.n_max;
    if (static_cast<int64_t>(targets.size()) != B)
        throw ShapeError("decode_sequence_tf: target count does not match memory batch");

    std::vector<std::vector<QuantizedCommand>> rows;
    rows.reserve(targets.size());
    for (const auto& g : targets) {
        if (g.rep_kind != RepKind::Relaxed)
            throw StructureError("decode_sequence_tf: targets must be relaxed");
        auto q = quantize_glyph(g, T);  // throws on overlong targets
        for (auto& qc : q) qc = command_row(qc.cmd_id, qc.arg_bins);
        rows.push_back(std::move(q));
    }

    Tensor x = decoder_inputs(p, rows, T);
    const auto mask = causal_mask(B, p.cfg.heads, T);
    x = run_decoder(p, x, memory, p.decoder, p.dec_ln_g, p.dec_ln_b, &mask);
    HeadOut h = apply_head(x, p.head);

    SeqPrediction pred;
    pred.cmd_logits = h.cmd_logits;
    pred.arg_logits = h.arg_logits;
    fill_argmax(pred);
    return pred;
}

SeqPrediction decode_sequence_ar(const ModelParams& p, const Tensor& memory, int max_len) {
    if (memory.dim(0) != 1) throw ShapeError("decode_sequence_ar: batch must be 1");
    NoGradGuard ng;
    const int T = std::min(max_len, p.cfg.n_max);

    SeqPrediction pred;
    pred.cmd_ids.assign(1, {});
    pred.arg_bins.assign(1, {});
    pred.length = {0};

    std::vector<std::vector<QuantizedCommand>> rows(1);
    for (int t = 1; t <= T; ++t) {
        Tensor x = decoder_inputs(p, rows, t);
        const auto mask = causal_mask(1, p.cfg.heads, t);
        x = run_decoder(p, x, memory, p.decoder, p.dec_ln_g, p.dec_ln_b, &mask);
        HeadOut h = apply_head(slice(x, 1, t - 1, t), p.head);  // last position only

        const double* cv = h.cmd_logits.data().data();
        int cmd = 0;
        for (int i = 1; i < kNumCommandTypes; ++i)
            if (cv[i] > cv[cmd]) cmd = i;
        std::array<int, 8> bins{};
        const double* av = h.arg_logits.data().data();
        for (int a = 0; a < 8; ++a) {
            const double* row = av + a * kBins;
            int bb = 0;
            for (int i = 1; i < kBins; ++i)
                if (row[i] > row[bb]) bb = i;
            bins[a] = bb;
        }
        if (cmd == static_cast<int>(CommandType::EOS)) break;
        pred.cmd_ids[0].push_back(cmd);
        const QuantizedCommand q = command_row(cmd, bins);
        pred.arg_bins[0].push_back(q.arg_bins);
        rows[0].push_back(q);
        pred.length[0] = t;
    }

    // pad to n_max with EOS rows
    pred.cmd_ids[0].resize(p.cfg.n_max, static_cast<int>(CommandType::EOS));
    pred.arg_bins[0].resize(p.cfg.n_max);
    return pred;
}

SeqPrediction refine(const ModelParams& p, const SeqPrediction& initial, const Tensor& memory) {
    const int64_t B = memory.dim(0);
    const int T = p.cfg.n_max;
    const int heads = p.cfg.heads;
    if (static_cast<int64_t>(initial.cmd_ids.size()) != B)
        throw ShapeError("refine: initial prediction batch does not match memory");

    std::vector<QuantizedCommand> flat;
    std::vector<int> positions;
    flat.reserve(static_cast<size_t>(B) * T);
    for (int64_t b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            flat.push_back(command_row(initial.cmd_ids[b][t], initial.arg_bins[b][t]));
            positions.push_back(t + 1);
        }
    Tensor x = embed_rows(flat, {B, T}, positions, p.embed);

    // keys beyond each sample's predicted length are invalid
    std::vector<uint8_t> mask(static_cast<size_t>(B) * heads * T * T, 0);
    for (int64_t b = 0; b < B; ++b) {
        const int len = initial.length[b];
        for (int h = 0; h < heads; ++h)
            for (int q = 0; q < T; ++q)
                for (int k = len; k < T; ++k)
                    mask[((static_cast<size_t>(b) * heads + h) * T + q) * T + k] = 1;
    }

    x = run_decoder(p, x, memory, p.refiner, p.ref_ln_g, p.ref_ln_b, &mask);
    HeadOut h = apply_head(x, p.ref_head);

    SeqPrediction out;
    out.cmd_logits = h.cmd_logits;
    out.arg_logits = h.arg_logits;
    fill_argmax(out);
    return out;
}

Glyph prediction_to_glyph(const std::vector<int>& cmd_ids,
                          const std::vector<std::array<int, 8>>& arg_bins, int length,
                          int char_class) {
    Glyph g;
    g.rep_kind = RepKind::Relaxed;
    g.char_class = char_class;
    bool seen_move = false;
    for (int t = 0; t < length; ++t) {
        const auto cmd = static_cast<CommandType>(cmd_ids[t]);
        if (cmd == CommandType::EOS) break;
        if (!seen_move) {
            if (cmd != CommandType::MoveFromTo) continue;  // drop leading segments
            seen_move = true;
        }
        std::array<double, 8> pts{};
        const auto mask = mask_for(cmd, RepKind::Relaxed);
        for (int i = 0; i < 8; ++i) pts[i] = mask[i] ? dequantize(arg_bins[t][i]) : 0.0;
        g.commands.push_back(make_command(cmd, RepKind::Relaxed, pts));
    }
    g.update_extent();
    return g;
}

}  // namespace vecfont
