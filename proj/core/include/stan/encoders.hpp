#pragma once

#include <vector>

#include "stan/config.hpp"
#include "stan/nn.hpp"
#include "stan/tensor.hpp"

namespace stan {

// Frame token grid after one backbone level: [T, L+1, D], token 0 per frame
// is that frame's CLS.
struct LevelFeatures {
    int level_index = 0;
    Tensor tokens;
};

// Frozen mini vision transformer. Gradients never reach these parameters.
struct BackboneParams {
    Tensor patch_proj;   // [patch_dim, D]
    Tensor patch_bias;   // [D]
    Tensor cls;          // [D]
    Tensor pos;          // [L+1, D]
    std::vector<EncoderLayerParams> layers;
    LayerNormParams final_ln;
    Tensor w_out;        // [D, D]

    static BackboneParams init(const ModelConfig& cfg, Rng& rng);
    ParamList params() const;
    void freeze();
};

struct TextEncoderParams {
    Tensor token_emb; // [vocab, D]
    Tensor pos_emb;   // [text_len, D]
    std::vector<EncoderLayerParams> layers;
    LayerNormParams final_ln;
    Tensor w_out; // [D, D]

    static TextEncoderParams init(const ModelConfig& cfg, Rng& rng);
    ParamList params() const;
};

// frames [T, C, H, W] -> tokens [T, L+1, D]
Tensor patchify(const Tensor& frames, const BackboneParams& p, const ModelConfig& cfg);

Tensor backbone_layer_forward(const Tensor& tokens, const EncoderLayerParams& layer);

// Ascending 1-based backbone layer indices, last one == level_range_end.
std::vector<int> select_levels(const ModelConfig& cfg);

struct BackboneOutput {
    std::vector<LevelFeatures> levels; // detached copies at the selected layers
    Tensor final_tokens;               // [T, L+1, D] after the last layer
};

BackboneOutput backbone_forward_multilevel(const Tensor& frames, const BackboneParams& p,
                                           const ModelConfig& cfg);

// Full-attention text encoder with padding masked; returns the projected
// state of the last real token, [D].
Tensor text_encode(const std::vector<int>& token_ids, const TextEncoderParams& p,
                   const ModelConfig& cfg);

} // namespace stan
