#pragma once

#include <cstdint>
#include <string>

#include "stan/errors.hpp"

namespace stan {

enum class CrossFrameVariant { self_attention, conv3d };

std::string to_string(CrossFrameVariant v);
CrossFrameVariant cross_frame_variant_from_string(const std::string& s);

// All architecture hyperparameters. Desk-scale defaults keep every gradient
// check and training run in the seconds range.
struct ModelConfig {
    int T = 8;       // frames per clip
    int grid_h = 4;
    int grid_w = 4;
    int patch_size = 4;
    int D = 64;
    int depth = 8;   // backbone layers
    int heads = 4;
    int K = 4;       // branch layers
    int level_interval = 1;
    int level_range_end = 8; // backbone layer index (1-based) of the last selected level

    CrossFrameVariant cross_frame_variant = CrossFrameVariant::self_attention;
    bool use_cross_frame = true;
    bool use_intra_frame = true;
    bool use_branch = true;
    bool use_multilevel = true;

    double dropout_p = 0.0;
    bool zero_init_branch = true;

    int text_vocab = 64;
    int text_len = 8;
    int text_depth = 2;
    double nce_temperature = 0.05;

    int num_classes = 8;

    int L() const { return grid_h * grid_w; }
    int patch_dim() const { return patch_size * patch_size; } // single channel
    int frame_px_h() const { return grid_h * patch_size; }
    int frame_px_w() const { return grid_w * patch_size; }

    void validate() const {
        if (grid_h <= 0 || grid_w <= 0 || patch_size <= 0 || T <= 0)
            throw ConfigError("frame geometry must be positive");
        if (D % heads != 0) throw ConfigError("D must be divisible by heads");
        if (D % 8 != 0) throw ConfigError("D must be divisible by 8 (conv bottleneck)");
        if (K < 1 || K > depth) throw ConfigError("K must satisfy 1 <= K <= depth");
        if (level_interval < 1) throw ConfigError("level_interval must be positive");
        if (level_range_end < 1 || level_range_end > depth)
            throw ConfigError("level_range_end must be within [1, depth]");
        if (level_range_end - (K - 1) * level_interval < 1)
            throw ConfigError("selected levels underflow below layer 1: end=" +
                              std::to_string(level_range_end) + " K=" + std::to_string(K) +
                              " interval=" + std::to_string(level_interval));
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");
        if (text_vocab <= 0 || text_len <= 0 || text_depth < 0)
            throw ConfigError("invalid text encoder configuration");
        if (nce_temperature <= 0.0) throw ConfigError("nce_temperature must be positive");
    }
};

} // namespace stan
