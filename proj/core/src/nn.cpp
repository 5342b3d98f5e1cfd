#include "stan/nn.hpp"

#include <cmath>

namespace stan {

AttentionParams AttentionParams::init(int D, int heads, Rng& rng, bool zero_out_proj) {
    const double std = 1.0 / std::sqrt(static_cast<double>(D));
    AttentionParams p;
    p.w_q = Tensor::randn({D, D}, rng, std);
    p.w_k = Tensor::randn({D, D}, rng, std);
    p.w_v = Tensor::randn({D, D}, rng, std);
    p.w_o = zero_out_proj ? Tensor::zeros({D, D}) : Tensor::randn({D, D}, rng, std);
    p.heads = heads;
    return p;
}

ParamList AttentionParams::params(const std::string& prefix) const {
    return {{prefix + ".w_q", w_q}, {prefix + ".w_k", w_k}, {prefix + ".w_v", w_v},
            {prefix + ".w_o", w_o}};
}

MlpParams MlpParams::init(int D, int hidden, Rng& rng, bool zero_second) {
    const double std1 = 1.0 / std::sqrt(static_cast<double>(D));
    const double std2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    MlpParams p;
    p.w1 = Tensor::randn({D, hidden}, rng, std1);
    p.b1 = Tensor::zeros({hidden});
    p.w2 = zero_second ? Tensor::zeros({hidden, D}) : Tensor::randn({hidden, D}, rng, std2);
    p.b2 = Tensor::zeros({D});
    return p;
}

ParamList MlpParams::params(const std::string& prefix) const {
    return {{prefix + ".w1", w1}, {prefix + ".b1", b1}, {prefix + ".w2", w2}, {prefix + ".b2", b2}};
}

LayerNormParams LayerNormParams::init(int D) {
    LayerNormParams p;
    p.gamma = Tensor::full({D}, 1.0);
    p.beta = Tensor::zeros({D});
    return p;
}

ParamList LayerNormParams::params(const std::string& prefix) const {
    return {{prefix + ".gamma", gamma}, {prefix + ".beta", beta}};
}

EncoderLayerParams EncoderLayerParams::init(int D, int heads, Rng& rng, bool zero_out_proj) {
    EncoderLayerParams p;
    p.ln1 = LayerNormParams::init(D);
    p.ln2 = LayerNormParams::init(D);
    p.attn = AttentionParams::init(D, heads, rng, zero_out_proj);
    p.mlp = MlpParams::init(D, 4 * D, rng, zero_out_proj);
    return p;
}

ParamList EncoderLayerParams::params(const std::string& prefix) const {
    ParamList out;
    for (auto* sub : {&ln1, &ln2})
        for (auto& kv : sub->params(prefix + (sub == &ln1 ? ".ln1" : ".ln2"))) out.push_back(kv);
    for (auto& kv : attn.params(prefix + ".attn")) out.push_back(kv);
    for (auto& kv : mlp.params(prefix + ".mlp")) out.push_back(kv);
    return out;
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, const Tensor* mask) {
    const int B = x.shape()[0], N = x.shape()[1], D = x.shape()[2];
    const int h = p.heads;
    if (D % h != 0) throw ShapeError("attention: D not divisible by heads");
    const int dh = D / h;

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {B, N, h, dh}), {0, 2, 1, 3}); // [B, h, N, dh]
    };
    Tensor q = split_heads(matmul(x, p.w_q));
    Tensor k = split_heads(matmul(x, p.w_k));
    Tensor v = split_heads(matmul(x, p.w_v));

    Tensor scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) scores = add(scores, *mask); // mask [N, N] broadcast over batch and heads
    Tensor weights = softmax(scores, 3);
    Tensor ctx = matmul(weights, v);                          // [B, h, N, dh]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, N, D});
    return matmul(merged, p.w_o);
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
    return affine(gelu(affine(x, p.w1, p.b1)), p.w2, p.b2);
}

Tensor encoder_layer_forward(const Tensor& x, const EncoderLayerParams& p, const Tensor* mask) {
    Tensor h = add(x, multi_head_attention(layer_norm(x, p.ln1.gamma, p.ln1.beta), p.attn, mask));
    return add(h, mlp_forward(layer_norm(h, p.ln2.gamma, p.ln2.beta), p.mlp));
}

void set_requires_grad(ParamList& params, bool rg) {
    for (auto& [name, t] : params) t.set_requires_grad(rg);
}

} // namespace stan
