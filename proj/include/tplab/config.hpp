// Model hyperparameters and the frame grid.
#pragma once

#include <string>

#include "tplab/common.hpp"

namespace tplab {

enum class PeMode : int { None = 0, Rotary1d = 1, Rotary3d = 2 };

inline const char* pe_mode_name(PeMode m) {
    switch (m) {
        case PeMode::None: return "none";
        case PeMode::Rotary1d: return "rotary_1d";
        case PeMode::Rotary3d: return "rotary_3d";
    }
    return "?";
}

struct FrameGrid {
    int t = 4;  // frames
    int h = 4;  // rows per frame
    int w = 4;  // cols per frame

    int tokens_per_frame() const { return h * w; }
    int visual_tokens() const { return t * h * w; }
    bool operator==(const FrameGrid&) const = default;
};

struct ModelConfig {
    int n_layers = 6;
    int d_model = 64;
    int n_heads = 4;
    int d_head = 16;
    int ffn_mult = 4;
    PeMode pe_mode = PeMode::Rotary3d;
    int vocab_size = 64;
    FrameGrid grid;

    int d_ffn() const { return d_model * ffn_mult; }

    void validate() const {
        if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 || ffn_mult < 1 ||
            vocab_size < 2 || grid.t < 1 || grid.h < 1 || grid.w < 1) {
            throw ConfigError("ModelConfig: all dimensions must be positive");
        }
        if (d_model != n_heads * d_head) {
            throw ConfigError("ModelConfig: d_model " + std::to_string(d_model) +
                              " != n_heads*d_head " + std::to_string(n_heads * d_head));
        }
        // rotary_3d splits each head as d/2 | d/4 | d/4 and every band needs
        // an even width, so d_head must be a multiple of 8.
        if (pe_mode == PeMode::Rotary3d && d_head % 8 != 0) {
            throw ConfigError("ModelConfig: rotary_3d needs d_head % 8 == 0, got " +
                              std::to_string(d_head));
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

// Layer bands as depth fractions, resolved by rounding to the nearest layer.
// The breakpoints 10/28 and 20/28 partition depth into early/middle/deep.
inline constexpr double kEarlyBandEnd = 10.0 / 28.0;
inline constexpr double kMiddleBandEnd = 20.0 / 28.0;

struct LayerBand {
    double lo = 0.0;  // fraction of depth, inclusive
    double hi = 1.0;  // fraction of depth, exclusive

    std::vector<int> resolve(int n_layers) const {
        const int a = static_cast<int>(std::lround(lo * n_layers));
        const int b = static_cast<int>(std::lround(hi * n_layers));
        std::vector<int> layers;
        for (int l = std::max(0, a); l < std::min(b, n_layers); ++l) layers.push_back(l);
        return layers;
    }
};

}  // namespace tplab
