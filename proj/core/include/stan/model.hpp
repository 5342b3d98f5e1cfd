#pragma once

#include "stan/branch.hpp"
#include "stan/encoders.hpp"

namespace stan {

// Frozen backbone + trainable branch, text encoder and classification head.
struct VideoTextModel {
    ModelConfig cfg;
    BackboneParams backbone;
    StanParams stan;
    TextEncoderParams text;
    Tensor head_w, head_b; // [D, num_classes], [num_classes]

    static VideoTextModel init(const ModelConfig& cfg, std::uint64_t seed);

    ParamList trainable_params() const;
    ParamList backbone_params() const { return backbone.params(); }

    // Full video path including ablation switches.
    Tensor video_embedding(const Tensor& frames, bool training, Rng& rng) const;

    // Same, from cached backbone features (the backbone is frozen, so its
    // output per clip never changes across training steps).
    Tensor video_embedding_cached(const BackboneOutput& features, bool training, Rng& rng) const;

    // Whole batch of clips in one graph; returns [B, D]. This is the path the
    // harness trains through: one large matmul per op instead of B small ones.
    Tensor video_embeddings_batch(const std::vector<const BackboneOutput*>& features,
                                  bool training, Rng& rng) const;

    Tensor class_logits(const Tensor& video_emb) const; // [D] or [B, D] -> logits
    Tensor text_embedding(const std::vector<int>& caption) const;

    bool baseline_only() const { return !cfg.use_cross_frame && !cfg.use_intra_frame; }
};

} // namespace stan
