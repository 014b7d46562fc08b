#pragma once

#include <array>
#include <random>
#include <vector>

#include "vecfont/glyph.hpp"
#include "vecfont/tensor.hpp"

namespace vecfont {

inline constexpr int kBins = 256;
inline constexpr int kNumCommandTypes = 4;

// round(x * 255) with clamping; halves round away from zero.
int quantize(double x);
double dequantize(int bin);

struct QuantizedCommand {
    int cmd_id = static_cast<int>(CommandType::EOS);
    std::array<int, 8> arg_bins{};
    std::array<bool, 8> mask{};
    int w_bin = 0;
    int h_bin = 0;
};

QuantizedCommand quantize_command(const DrawCommand& c, double width, double height);

// Quantized rows of a relaxed glyph padded with EOS to n_max. Every row
// carries the glyph's width/height bins.
std::vector<QuantizedCommand> quantize_glyph(const Glyph& g, int n_max);

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Learnable tables of the command embedding. Tables are stored with the
// embedding dimension first; the forward pass transposes them into row-lookup
// form once per evaluation.
struct EmbeddingParams {
    int d_e = 0;
    Tensor w_cmd;            // [d_E, 4]
    Tensor w_args_b;         // [d_E, 256]
    Tensor w_args_a;         // [d_E, 8*d_E]
    Tensor w_w;              // [d_E, 256]
    Tensor w_h;              // [d_E, 256]
    Tensor modality_token;   // [d_E]

    static EmbeddingParams init(int d_e, std::mt19937_64& rng);
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Sinusoidal absolute positional encoding, rows 0..max_pos.
Tensor positional_encoding(int max_pos, int d_e);

// Embeds a batch of quantized command rows: the sum of the command-type,
// argument, width/height and positional terms. `positions` gives the
// positional-encoding index of each row; lead_shape describes the row layout
// (the result has shape lead_shape + [d_E]).
Tensor embed_rows(const std::vector<QuantizedCommand>& rows, const Shape& lead_shape,
                  const std::vector<int>& positions, const EmbeddingParams& p);

Tensor embed_command(const QuantizedCommand& q, int position, const EmbeddingParams& p);

// [n_max+1, d_E]: column 0 is the modality token, columns 1..n_max the
// commands of the padded glyph at positions 1..n_max.
Tensor embed_sequence(const Glyph& g, int n_max, const EmbeddingParams& p);

}  // namespace vecfont
