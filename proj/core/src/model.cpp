#include "stan/model.hpp"

#include <cmath>

namespace stan {

VideoTextModel VideoTextModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    VideoTextModel m;
    m.cfg = cfg;
    Rng root(seed);
    Rng backbone_rng = root.split(1);
    Rng stan_rng = root.split(2);
    Rng text_rng = root.split(3);
    Rng head_rng = root.split(4);
    m.backbone = BackboneParams::init(cfg, backbone_rng);
    m.stan = StanParams::init(cfg, stan_rng);
    m.text = TextEncoderParams::init(cfg, text_rng);
    m.head_w = Tensor::randn({cfg.D, cfg.num_classes}, head_rng,
                             1.0 / std::sqrt(static_cast<double>(cfg.D)));
    m.head_b = Tensor::zeros({cfg.num_classes});

    ParamList trainable = m.trainable_params();
    set_requires_grad(trainable, true);
    return m;
}

ParamList VideoTextModel::trainable_params() const {
    ParamList out = stan.params();
    for (auto& kv : text.params()) out.push_back(kv);
    out.emplace_back("head.w", head_w);
    out.emplace_back("head.b", head_b);
    return out;
}

Tensor VideoTextModel::video_embedding(const Tensor& frames, bool training, Rng& rng) const {
    return video_embedding_cached(backbone_forward_multilevel(frames, backbone, cfg), training, rng);
}

Tensor VideoTextModel::video_embedding_cached(const BackboneOutput& features, bool training,
                                              Rng& rng) const {
    return reshape(video_embeddings_batch({&features}, training, rng), {cfg.D});
}

Tensor VideoTextModel::video_embeddings_batch(const std::vector<const BackboneOutput*>& features,
                                              bool training, Rng& rng) const {
    if (features.empty()) throw ParamError("video_embeddings_batch: empty batch");
    const int B = static_cast<int>(features.size());
    std::vector<Tensor> finals;
    finals.reserve(features.size());
    for (const auto* f : features) finals.push_back(f->final_tokens);
    Tensor final_batch = stack0(finals); // [B, T, L+1, D]
    const int T = final_batch.shape()[1];

    if (baseline_only()) {
        // Mean-pool baseline: no branch in the graph at all.
        Tensor frame_cls = reshape(slice(final_batch, 2, 0, 1), {B, T, cfg.D});
        Tensor pooled = mean_axis0(permute(frame_cls, {1, 0, 2})); // [B, D]
        Tensor normed = layer_norm(pooled, backbone.final_ln.gamma, backbone.final_ln.beta);
        return matmul(normed, backbone.w_out);
    }
    std::vector<LevelBatch> inputs;
    if (cfg.use_branch) {
        for (int k = 0; k < cfg.K; ++k) {
            std::vector<Tensor> level_tokens;
            level_tokens.reserve(features.size());
            for (const auto* f : features) level_tokens.push_back(f->levels[k].tokens);
            inputs.push_back({features[0]->levels[k].level_index, stack0(level_tokens)});
        }
    } else {
        // Posterior mode: the branch sits after the backbone and sees only
        // its final output.
        inputs.assign(cfg.K, LevelBatch{cfg.depth, final_batch});
    }
    StanSequence out = stan_forward(inputs, stan, cfg, training, rng);
    return fuse_final(final_batch, out, backbone, stan.alpha, cfg.use_branch);
}

Tensor VideoTextModel::class_logits(const Tensor& video_emb) const {
    if (video_emb.rank() == 2) return affine(video_emb, head_w, head_b);
    return reshape(affine(reshape(video_emb, {1, cfg.D}), head_w, head_b), {cfg.num_classes});
}

Tensor VideoTextModel::text_embedding(const std::vector<int>& caption) const {
    return text_encode(caption, text, cfg);
}

} // namespace stan
