#pragma once

#include <optional>
#include <vector>

#include "stan/encoders.hpp"

namespace stan {

// Branch state for a batch of clips: one video CLS vector per clip plus the
// T x L patch grid. Single-clip callers use B = 1.
struct StanSequence {
    Tensor video_cls; // [B, D]
    Tensor patches;   // [B, T, L, D]
};

// Backbone level features stacked across a batch of clips.
struct LevelBatch {
    int level_index = 0;
    Tensor tokens; // [B, T, L+1, D]
};

LevelBatch batch_of_one(const LevelFeatures& v);

struct PositionEmbeddings {
    Tensor pos_t; // [T, D]
    Tensor pos_s; // [L, D]

    static PositionEmbeddings init(const ModelConfig& cfg, Rng& rng);
    ParamList params() const;
};

// D -> D/8 pointwise, temporal conv kernel 3 (spatial 1x1), D/8 -> D pointwise.
struct ConvModuleParams {
    Tensor down_w, down_b; // [D, D/8], [D/8]
    Tensor conv_w;         // [3, D/8, D/8], taps t-1, t, t+1
    Tensor conv_b;         // [D/8]
    Tensor up_w, up_b;     // [D/8, D], [D]

    static ConvModuleParams init(int D, Rng& rng, bool zero_up);
    ParamList params(const std::string& prefix) const;
};

struct StanLayerParams {
    Tensor w_proj; // [D, D]; undefined at layer 1
    EncoderLayerParams intra;
    // exactly one of the two cross-frame parameter sets is populated
    std::optional<AttentionParams> cross_attn;
    LayerNormParams cross_ln; // pre-norm for the attention variant
    std::optional<ConvModuleParams> cross_conv;

    static StanLayerParams init(const ModelConfig& cfg, bool first, Rng& rng);
    ParamList params(const std::string& prefix) const;
};

struct StanParams {
    PositionEmbeddings pos;
    std::vector<StanLayerParams> layers; // K of them
    Tensor alpha;                        // scalar fusion gate

    static StanParams init(const ModelConfig& cfg, Rng& rng);
    ParamList params() const;
};

StanSequence build_first_input(const LevelBatch& v1, const PositionEmbeddings& pos,
                               double dropout_p, bool training, Rng& rng);

StanSequence fuse_level_input(const StanSequence& prev_out, const LevelBatch& vk,
                              const Tensor& w_proj);

StanSequence intra_frame_forward(const StanSequence& seq, const EncoderLayerParams& params);

StanSequence cross_frame_attention(const StanSequence& seq, const StanLayerParams& params,
                                   const ModelConfig& cfg);

StanSequence cross_frame_conv(const StanSequence& seq, const ConvModuleParams& params,
                              const ModelConfig& cfg);

StanSequence stan_layer_forward(const StanSequence& seq, const StanLayerParams& params,
                                const ModelConfig& cfg);

StanSequence stan_forward(const std::vector<LevelBatch>& levels, const StanParams& params,
                          const ModelConfig& cfg, bool training, Rng& rng);

// v = W_out . LN(mean_i CLS_i + alpha * branch CLS), reusing the backbone's
// final norm and projection. With use_branch off the branch CLS alone feeds
// the norm/projection (posterior mode); callers then pass the backbone output
// as the only input level.
Tensor fuse_final(const Tensor& backbone_final, const StanSequence& stan_out,
                  const BackboneParams& backbone, const Tensor& alpha, bool use_branch);

} // namespace stan
