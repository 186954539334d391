#include "mdjpt/encoder.hpp"

#include "mdjpt/error.hpp"

namespace mdjpt::enc {

using nn::Graph;
using nn::Tensor;
using nn::Var;

Tensor patchify(const std::vector<double>& series, const PatchConfig& cfg) {
    if (series.size() < cfg.patch_len)
        throw Error("SeriesTooShort", std::to_string(series.size()) + " < patch length " +
                                          std::to_string(cfg.patch_len));
    const std::size_t n = cfg.n_patches(series.size());
    Tensor out({n, cfg.patch_len});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cfg.patch_len; ++j)
            out.at(i, j) = series[i * cfg.stride + j];
    return out;
}

Tensor patchify_channels(const nn::Tensor& window, const PatchConfig& cfg) {
    const std::size_t C = window.dim(0), L = window.dim(1);
    if (L < cfg.patch_len)
        throw Error("SeriesTooShort", "window shorter than patch length");
    const std::size_t n = cfg.n_patches(L);
    Tensor out({C * n, cfg.patch_len});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cfg.patch_len; ++j)
                out.at(c * n + i, j) = window.at(c, i * cfg.stride + j);
    return out;
}

Var mlla_forward(Graph& g, Var patches, const MllaVars& params, const MllaConfig& cfg,
                 std::size_t seg_len) {
    Var x = g.linear(patches, params.embed_w, params.embed_b);
    for (const auto& blk : params.blocks) {
        Var xn = g.layernorm(x, blk.norm1_g, blk.norm1_b);
        // input gate: linear + depthwise temporal conv + SiLU
        Var u = g.silu(g.seg_conv1d_time(g.linear(xn, blk.in_w, blk.in_b), blk.dw_w, seg_len));
        Var q = g.linear(u, blk.q_w, blk.q_b);
        Var k = g.linear(u, blk.k_w, blk.k_b);
        Var v = g.linear(u, blk.v_w, blk.v_b);
        Var att = g.linear_attention(q, k, v, seg_len, cfg.n_heads);
        Var gated = g.mul(att, g.sigmoid(g.linear(xn, blk.forget_w, blk.forget_b)));
        x = g.add(x, g.linear(gated, blk.out_w, blk.out_b));
        // feed-forward sub-block
        Var yn = g.layernorm(x, blk.norm2_g, blk.norm2_b);
        Var h = g.silu(g.linear(yn, blk.mlp_w1, blk.mlp_b1));
        x = g.add(x, g.linear(h, blk.mlp_w2, blk.mlp_b2));
    }
    Var xf = g.layernorm(x, params.final_norm_g, params.final_norm_b);
    return g.linear(xf, params.proj_w, params.proj_b);
}

Var encode_channels(Graph& g, const nn::Tensor& window, const MllaVars& params,
                    const MllaConfig& cfg, const PatchConfig& patch_cfg) {
    const std::size_t C = window.dim(0);
    const std::size_t n1 = patch_cfg.n_patches(window.dim(1));
    Var patches = g.constant(patchify_channels(window, patch_cfg));
    Var flat = mlla_forward(g, patches, params, cfg, n1);
    return g.reshape(flat, {C, n1, cfg.out_dim});
}

}  // namespace mdjpt::enc
