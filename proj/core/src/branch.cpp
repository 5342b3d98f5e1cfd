#include "stan/branch.hpp"

#include <cmath>

namespace stan {

PositionEmbeddings PositionEmbeddings::init(const ModelConfig& cfg, Rng& rng) {
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg.D));
    return {Tensor::randn({cfg.T, cfg.D}, rng, std), Tensor::randn({cfg.L(), cfg.D}, rng, std)};
}

ParamList PositionEmbeddings::params() const {
    return {{"stan.pos_t", pos_t}, {"stan.pos_s", pos_s}};
}

ConvModuleParams ConvModuleParams::init(int D, Rng& rng, bool zero_up) {
    const int C = D / 8;
    ConvModuleParams p;
    p.down_w = Tensor::randn({D, C}, rng, 1.0 / std::sqrt(static_cast<double>(D)));
    p.down_b = Tensor::zeros({C});
    p.conv_w = Tensor::randn({3, C, C}, rng, 1.0 / std::sqrt(3.0 * C));
    p.conv_b = Tensor::zeros({C});
    p.up_w = zero_up ? Tensor::zeros({C, D}) : Tensor::randn({C, D}, rng, 1.0 / std::sqrt(static_cast<double>(C)));
    p.up_b = Tensor::zeros({D});
    return p;
}

ParamList ConvModuleParams::params(const std::string& prefix) const {
    return {{prefix + ".down_w", down_w}, {prefix + ".down_b", down_b},
            {prefix + ".conv_w", conv_w}, {prefix + ".conv_b", conv_b},
            {prefix + ".up_w", up_w},     {prefix + ".up_b", up_b}};
}

StanLayerParams StanLayerParams::init(const ModelConfig& cfg, bool first, Rng& rng) {
    const int D = cfg.D;
    StanLayerParams p;
    if (!first) p.w_proj = Tensor::randn({D, D}, rng, 1.0 / std::sqrt(static_cast<double>(D)));
    p.intra = EncoderLayerParams::init(D, cfg.heads, rng, cfg.zero_init_branch);
    p.cross_ln = LayerNormParams::init(D);
    if (cfg.cross_frame_variant == CrossFrameVariant::self_attention)
        p.cross_attn = AttentionParams::init(D, cfg.heads, rng, cfg.zero_init_branch);
    else
        p.cross_conv = ConvModuleParams::init(D, rng, cfg.zero_init_branch);
    return p;
}

ParamList StanLayerParams::params(const std::string& prefix) const {
    ParamList out;
    if (w_proj.defined()) out.emplace_back(prefix + ".w_proj", w_proj);
    for (auto& kv : intra.params(prefix + ".intra")) out.push_back(kv);
    if (cross_attn) {
        for (auto& kv : cross_ln.params(prefix + ".cross_ln")) out.push_back(kv);
        for (auto& kv : cross_attn->params(prefix + ".cross_attn")) out.push_back(kv);
    }
    if (cross_conv)
        for (auto& kv : cross_conv->params(prefix + ".cross_conv")) out.push_back(kv);
    return out;
}

StanParams StanParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    StanParams p;
    p.pos = PositionEmbeddings::init(cfg, rng);
    for (int k = 0; k < cfg.K; ++k) p.layers.push_back(StanLayerParams::init(cfg, k == 0, rng));
    p.alpha = Tensor::scalar(cfg.zero_init_branch ? 0.0 : 1.0);
    return p;
}

ParamList StanParams::params() const {
    ParamList out = pos.params();
    for (size_t k = 0; k < layers.size(); ++k)
        for (auto& kv : layers[k].params("stan.layer" + std::to_string(k))) out.push_back(kv);
    out.emplace_back("stan.alpha", alpha);
    return out;
}

LevelBatch batch_of_one(const LevelFeatures& v) {
    if (v.tokens.rank() != 3)
        throw ShapeError("batch_of_one: expected (T, L+1, D), got " + shape_str(v.tokens.shape()));
    Shape s = v.tokens.shape();
    return {v.level_index, reshape(v.tokens, {1, s[0], s[1], s[2]})};
}

static void check_level(const LevelBatch& v, int D) {
    if (v.tokens.rank() != 4 || v.tokens.shape()[3] != D || v.tokens.shape()[2] < 2)
        throw ShapeError("level batch must be (B, T, L+1, D), got " + shape_str(v.tokens.shape()));
}

// [B, T, D] -> [B, D]
static Tensor mean_axis1(const Tensor& x) { return mean_axis0(permute(x, {1, 0, 2})); }

StanSequence build_first_input(const LevelBatch& v1, const PositionEmbeddings& pos,
                               double dropout_p, bool training, Rng& rng) {
    check_level(v1, pos.pos_t.shape()[1]);
    const int B = v1.tokens.shape()[0], T = v1.tokens.shape()[1];
    const int L = v1.tokens.shape()[2] - 1, D = v1.tokens.shape()[3];
    Tensor frame_cls = reshape(slice(v1.tokens, 2, 0, 1), {B, T, D});
    StanSequence seq;
    seq.video_cls = mean_axis1(frame_cls);
    Tensor patches = slice(v1.tokens, 2, 1, L);
    // The video CLS receives neither position embeddings nor dropout.
    seq.patches = dropout(add_positions(patches, pos.pos_t, pos.pos_s), dropout_p, training, rng);
    return seq;
}

StanSequence fuse_level_input(const StanSequence& prev_out, const LevelBatch& vk,
                              const Tensor& w_proj) {
    const int D = prev_out.video_cls.shape()[1];
    check_level(vk, D);
    const int B = vk.tokens.shape()[0], T = vk.tokens.shape()[1], L = vk.tokens.shape()[2] - 1;
    if (prev_out.patches.shape() != Shape{B, T, L, D})
        throw ShapeError("fuse_level_input: sequence " + shape_str(prev_out.patches.shape()) +
                         " does not match level " + shape_str(vk.tokens.shape()));
    Tensor frame_cls = reshape(slice(vk.tokens, 2, 0, 1), {B, T, D});
    Tensor patches = slice(vk.tokens, 2, 1, L);
    StanSequence seq;
    seq.video_cls = add(prev_out.video_cls, matmul(mean_axis1(frame_cls), w_proj));
    seq.patches = add(prev_out.patches, matmul(patches, w_proj));
    return seq;
}

StanSequence intra_frame_forward(const StanSequence& seq, const EncoderLayerParams& params) {
    const int B = seq.patches.shape()[0], T = seq.patches.shape()[1];
    const int L = seq.patches.shape()[2], D = seq.patches.shape()[3];
    Tensor x = prepend_cls(seq.video_cls, seq.patches); // [B, T, L+1, D]
    Tensor y = reshape(encoder_layer_forward(reshape(x, {B * T, L + 1, D}), params),
                       {B, T, L + 1, D});
    StanSequence out;
    // Per-frame CLS duplicates are averaged back into the single video CLS.
    out.video_cls = mean_axis1(reshape(slice(y, 2, 0, 1), {B, T, D}));
    out.patches = slice(y, 2, 1, L);
    return out;
}

StanSequence cross_frame_attention(const StanSequence& seq, const StanLayerParams& params,
                                   const ModelConfig& cfg) {
    if (cfg.cross_frame_variant != CrossFrameVariant::self_attention || !params.cross_attn)
        throw ConfigError("cross_frame_attention called with variant " +
                          to_string(cfg.cross_frame_variant));
    const int B = seq.patches.shape()[0], T = seq.patches.shape()[1];
    const int L = seq.patches.shape()[2], D = seq.patches.shape()[3];
    // [B, T, L, D] -> [B*L, T, D]: one attention batch per spatial position.
    Tensor y = permute(seq.patches, {0, 2, 1, 3});
    Tensor normed = layer_norm(y, params.cross_ln.gamma, params.cross_ln.beta);
    Tensor att = multi_head_attention(reshape(normed, {B * L, T, D}), *params.cross_attn);
    Tensor updated = add(reshape(att, {B, L, T, D}), y);
    StanSequence out;
    out.video_cls = seq.video_cls; // untouched by cross-frame modules
    out.patches = permute(updated, {0, 2, 1, 3});
    return out;
}

StanSequence cross_frame_conv(const StanSequence& seq, const ConvModuleParams& params,
                              const ModelConfig& cfg) {
    if (cfg.cross_frame_variant != CrossFrameVariant::conv3d)
        throw ConfigError("cross_frame_conv called with variant " +
                          to_string(cfg.cross_frame_variant));
    const int L = seq.patches.shape()[2];
    if (L != cfg.grid_h * cfg.grid_w)
        throw ShapeError("cross_frame_conv: L=" + std::to_string(L) + " does not factor as " +
                         std::to_string(cfg.grid_h) + "x" + std::to_string(cfg.grid_w));
    // Spatial kernel is 1x1, so the cube layout reduces to per-position maps;
    // only the temporal taps mix across frames.
    Tensor h = affine(seq.patches, params.down_w, params.down_b); // [B, T, L, C]
    const int C = params.down_b.size();
    Tensor ht = permute(h, {1, 0, 2, 3}); // time-major for the temporal taps
    Tensor acc;
    for (int tap = 0; tap < 3; ++tap) {
        Tensor shifted = temporal_shift(ht, tap - 1); // taps at t-1, t, t+1
        Tensor w = reshape(slice(params.conv_w, 0, tap, 1), {C, C});
        Tensor term = matmul(shifted, w);
        acc = tap == 0 ? term : add(acc, term);
    }
    acc = add(acc, params.conv_b);
    Tensor up = affine(gelu(acc), params.up_w, params.up_b); // [T, B, L, D]
    StanSequence out;
    out.video_cls = seq.video_cls;
    out.patches = add(permute(up, {1, 0, 2, 3}), seq.patches);
    return out;
}

StanSequence stan_layer_forward(const StanSequence& seq, const StanLayerParams& params,
                                const ModelConfig& cfg) {
    StanSequence cur = seq;
    if (cfg.use_cross_frame) {
        cur = cfg.cross_frame_variant == CrossFrameVariant::self_attention
                  ? cross_frame_attention(cur, params, cfg)
                  : cross_frame_conv(cur, *params.cross_conv, cfg);
    }
    if (cfg.use_intra_frame) cur = intra_frame_forward(cur, params.intra);
    return cur;
}

StanSequence stan_forward(const std::vector<LevelBatch>& levels, const StanParams& params,
                          const ModelConfig& cfg, bool training, Rng& rng) {
    if (static_cast<int>(levels.size()) != cfg.K)
        throw ShapeError("stan_forward: got " + std::to_string(levels.size()) + " levels, expected K=" +
                         std::to_string(cfg.K));
    auto level_at = [&](int k) -> const LevelBatch& {
        // Without multi-level inputs every layer consumes the final level.
        return cfg.use_multilevel ? levels[k] : levels.back();
    };
    StanSequence seq = build_first_input(level_at(0), params.pos, cfg.dropout_p, training, rng);
    seq = stan_layer_forward(seq, params.layers[0], cfg);
    for (int k = 1; k < cfg.K; ++k) {
        seq = fuse_level_input(seq, level_at(k), params.layers[k].w_proj);
        seq = stan_layer_forward(seq, params.layers[k], cfg);
    }
    return seq;
}

Tensor fuse_final(const Tensor& backbone_final, const StanSequence& stan_out,
                  const BackboneParams& backbone, const Tensor& alpha, bool use_branch) {
    const int B = stan_out.video_cls.shape()[0], D = stan_out.video_cls.shape()[1];
    Tensor pooled;
    if (use_branch) {
        const int T = backbone_final.shape()[1];
        Tensor frame_cls = reshape(slice(backbone_final, 2, 0, 1), {B, T, D});
        Tensor branch_cls = mul(stan_out.video_cls, alpha);
        pooled = add(mean_axis1(frame_cls), branch_cls);
    } else {
        pooled = stan_out.video_cls;
    }
    Tensor normed = layer_norm(pooled, backbone.final_ln.gamma, backbone.final_ln.beta);
    return matmul(normed, backbone.w_out); // [B, D]
}

} // namespace stan
