#include "mdjpt/dynamics.hpp"

#include "mdjpt/error.hpp"

namespace mdjpt::dyn {

using nn::Graph;
using nn::Var;

std::vector<std::size_t> DynamicsConfig::dilation_per_kernel(std::size_t k1) const {
    const std::size_t K = n_kernels(k1);
    if (K % dilations.size() != 0)
        throw Error("DimensionMismatch", "K1*K2 must be divisible by the dilation count");
    const std::size_t per = K / dilations.size();
    std::vector<std::size_t> out(K);
    for (std::size_t k = 0; k < K; ++k) out[k] = dilations[k / per];
    return out;
}

Var spatial_project(Graph& g, Var x_hat, Var w_s) {
    const auto& s = x_hat->val.shape;
    Var flat = g.reshape(x_hat, {s[0], s[1] * s[2]});
    return g.reshape(g.matmul(w_s, flat), {s[0], s[1], s[2]});
}

Var transition_conv(Graph& g, Var p, const DynamicsVars& params, const DynamicsConfig& cfg) {
    const std::size_t k1 = p->val.dim(2);
    return g.transition_conv(p, params.w_tr, cfg.kernels_per_dim, cfg.dilation_per_kernel(k1));
}

LocalAttentionOut local_attention(Graph& g, Var h1, const DynamicsVars& params,
                                  const DynamicsConfig& cfg) {
    Var a = g.conv1d_depthwise(h1, params.w_att);
    Var a_bar = g.avgpool_replicate(a, cfg.pooling_len);
    Var h2 = g.matmul(params.mixing, a_bar);
    if (cfg.softmax_temperature != 1.0) h2 = g.scale(h2, 1.0 / cfg.softmax_temperature);
    Var weights = g.softmax_dim0(h2);
    return {weights, g.mul(weights, h1)};
}

Var isa_projector(Graph& g, Var h3, const DynamicsVars& params, const DynamicsConfig& cfg) {
    Var h4 = g.avgpool_replicate(h3, cfg.pooling_len);
    Var h5 = g.relu(g.conv1d_depthwise(h4, params.w_isa1));
    return g.conv1d_depthwise(h5, params.w_isa2);
}

Var extract_window_feature(Graph& g, Var h3) { return g.mean_dim1(h3); }

}  // namespace mdjpt::dyn
