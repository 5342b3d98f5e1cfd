#pragma once

#include <string>
#include <vector>

#include "stan/rng.hpp"
#include "stan/tensor.hpp"

namespace stan {

// Named parameter list, the unit the optimizer and the weight file operate on.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct AttentionParams {
    Tensor w_q, w_k, w_v, w_o; // each [D, D]
    int heads = 1;

    static AttentionParams init(int D, int heads, Rng& rng, bool zero_out_proj = false);
    ParamList params(const std::string& prefix) const;
};

struct MlpParams {
    Tensor w1, b1; // [D, H], [H]
    Tensor w2, b2; // [H, D], [D]

    static MlpParams init(int D, int hidden, Rng& rng, bool zero_second = false);
    ParamList params(const std::string& prefix) const;
};

struct LayerNormParams {
    Tensor gamma, beta; // each [D]

    static LayerNormParams init(int D);
    ParamList params(const std::string& prefix) const;
};

// Pre-norm transformer encoder layer, the template both the backbone and the
// intra-frame module follow.
struct EncoderLayerParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    MlpParams mlp;

    static EncoderLayerParams init(int D, int heads, Rng& rng, bool zero_out_proj = false);
    ParamList params(const std::string& prefix) const;
};

// Multi-head self-attention over x [B, N, D]; optional additive mask [N, N]
// added to the pre-softmax scores of every head.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, const Tensor* mask = nullptr);

Tensor mlp_forward(const Tensor& x, const MlpParams& p);

// x + MHA(LN(x)), then + MLP(LN(.))
Tensor encoder_layer_forward(const Tensor& x, const EncoderLayerParams& p,
                             const Tensor* mask = nullptr);

void set_requires_grad(ParamList& params, bool rg);

} // namespace stan
