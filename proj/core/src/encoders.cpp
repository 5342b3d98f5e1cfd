#include "stan/encoders.hpp"

#include <cmath>

namespace stan {

std::string to_string(CrossFrameVariant v) {
    return v == CrossFrameVariant::self_attention ? "self_attention" : "conv3d";
}

CrossFrameVariant cross_frame_variant_from_string(const std::string& s) {
    if (s == "self_attention") return CrossFrameVariant::self_attention;
    if (s == "conv3d") return CrossFrameVariant::conv3d;
    throw ConfigError("unknown cross-frame variant: " + s);
}

BackboneParams BackboneParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const int D = cfg.D;
    const double std = 1.0 / std::sqrt(static_cast<double>(D));
    BackboneParams p;
    p.patch_proj = Tensor::randn({cfg.patch_dim(), D}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
    p.patch_bias = Tensor::zeros({D});
    p.cls = Tensor::randn({D}, rng, std);
    p.pos = Tensor::randn({cfg.L() + 1, D}, rng, std);
    for (int l = 0; l < cfg.depth; ++l) p.layers.push_back(EncoderLayerParams::init(D, cfg.heads, rng));
    p.final_ln = LayerNormParams::init(D);
    p.w_out = Tensor::randn({D, D}, rng, std);
    return p;
}

ParamList BackboneParams::params() const {
    ParamList out = {{"backbone.patch_proj", patch_proj},
                     {"backbone.patch_bias", patch_bias},
                     {"backbone.cls", cls},
                     {"backbone.pos", pos}};
    for (size_t l = 0; l < layers.size(); ++l)
        for (auto& kv : layers[l].params("backbone.layer" + std::to_string(l))) out.push_back(kv);
    for (auto& kv : final_ln.params("backbone.final_ln")) out.push_back(kv);
    out.emplace_back("backbone.w_out", w_out);
    return out;
}

void BackboneParams::freeze() {
    auto ps = params();
    set_requires_grad(ps, false);
}

TextEncoderParams TextEncoderParams::init(const ModelConfig& cfg, Rng& rng) {
    const int D = cfg.D;
    const double std = 1.0 / std::sqrt(static_cast<double>(D));
    TextEncoderParams p;
    p.token_emb = Tensor::randn({cfg.text_vocab, D}, rng, std);
    p.pos_emb = Tensor::randn({cfg.text_len, D}, rng, std);
    for (int l = 0; l < cfg.text_depth; ++l)
        p.layers.push_back(EncoderLayerParams::init(D, cfg.heads, rng));
    p.final_ln = LayerNormParams::init(D);
    p.w_out = Tensor::randn({D, D}, rng, std);
    return p;
}

ParamList TextEncoderParams::params() const {
    ParamList out = {{"text.token_emb", token_emb}, {"text.pos_emb", pos_emb}};
    for (size_t l = 0; l < layers.size(); ++l)
        for (auto& kv : layers[l].params("text.layer" + std::to_string(l))) out.push_back(kv);
    for (auto& kv : final_ln.params("text.final_ln")) out.push_back(kv);
    out.emplace_back("text.w_out", w_out);
    return out;
}

Tensor patchify(const Tensor& frames, const BackboneParams& p, const ModelConfig& cfg) {
    if (frames.rank() != 4)
        throw ShapeError("patchify: frames must be (T,C,H,W), got " + shape_str(frames.shape()));
    const int T = frames.shape()[0], C = frames.shape()[1];
    const int H = frames.shape()[2], W = frames.shape()[3];
    const int ps = cfg.patch_size;
    if (C != 1) throw ShapeError("patchify: single-channel frames expected");
    if (H % ps != 0 || W % ps != 0)
        throw ShapeError("patchify: frame " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by patch size " + std::to_string(ps));
    const int gh = H / ps, gw = W / ps;
    if (gh != cfg.grid_h || gw != cfg.grid_w)
        throw ShapeError("patchify: frame grid does not match config");
    const int L = gh * gw, pd = ps * ps;

    // Gather flattened patches row-major over the grid.
    std::vector<double> flat(static_cast<size_t>(T) * L * pd);
    for (int t = 0; t < T; ++t)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                for (int py = 0; py < ps; ++py)
                    for (int px = 0; px < ps; ++px)
                        flat[((static_cast<size_t>(t) * L + gy * gw + gx) * pd) + py * ps + px] =
                            frames.values()[(static_cast<size_t>(t) * H + gy * ps + py) * W +
                                            gx * ps + px];
    Tensor patches = Tensor::from({T, L, pd}, std::move(flat));
    Tensor projected = affine(patches, p.patch_proj, p.patch_bias); // [T, L, D]
    Tensor tokens = prepend_cls(p.cls, projected);                  // [T, L+1, D]
    return add(tokens, p.pos);                                      // pos [L+1, D] broadcast over T
}

Tensor backbone_layer_forward(const Tensor& tokens, const EncoderLayerParams& layer) {
    return encoder_layer_forward(tokens, layer);
}

std::vector<int> select_levels(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<int> levels(cfg.K);
    for (int i = 0; i < cfg.K; ++i)
        levels[i] = cfg.level_range_end - (cfg.K - 1 - i) * cfg.level_interval;
    return levels;
}

BackboneOutput backbone_forward_multilevel(const Tensor& frames, const BackboneParams& p,
                                           const ModelConfig& cfg) {
    const std::vector<int> wanted = select_levels(cfg);
    BackboneOutput out;
    Tensor tokens = patchify(frames, p, cfg);
    size_t next = 0;
    for (int layer = 1; layer <= cfg.depth; ++layer) {
        tokens = backbone_layer_forward(tokens, p.layers[layer - 1]);
        if (next < wanted.size() && wanted[next] == layer) {
            out.levels.push_back({layer, tokens.detach()});
            ++next;
        }
    }
    out.final_tokens = tokens;
    return out;
}

Tensor text_encode(const std::vector<int>& token_ids, const TextEncoderParams& p,
                   const ModelConfig& cfg) {
    const int n = static_cast<int>(token_ids.size());
    if (n < 1 || n > cfg.text_len)
        throw ParamError("text_encode: sequence length " + std::to_string(n) +
                         " outside [1, " + std::to_string(cfg.text_len) + "]");
    const int len = cfg.text_len;
    std::vector<int> padded = token_ids;
    padded.resize(len, 0);
    Tensor emb = rows_lookup(p.token_emb, padded);         // [len, D]
    emb = add(emb, slice(p.pos_emb, 0, 0, len));
    Tensor x = reshape(emb, {1, len, cfg.D});

    // Padding positions are masked out as attention keys.
    Tensor mask = Tensor::zeros({len, len});
    for (int q = 0; q < len; ++q)
        for (int k = n; k < len; ++k) mask.mutable_values()[static_cast<size_t>(q) * len + k] = -1e30;

    for (const auto& layer : p.layers) x = encoder_layer_forward(x, layer, &mask);
    Tensor last = reshape(slice(reshape(x, {len, cfg.D}), 0, n - 1, 1), {cfg.D});
    Tensor normed = layer_norm(reshape(last, {1, cfg.D}), p.final_ln.gamma, p.final_ln.beta);
    return reshape(matmul(normed, p.w_out), {cfg.D});
}

} // namespace stan
