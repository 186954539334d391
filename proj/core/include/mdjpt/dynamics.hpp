#pragma once

#include <vector>

#include "mdjpt/graph.hpp"

namespace mdjpt::dyn {

struct DynamicsConfig {
    std::size_t kernels_per_dim = 4;  // K2
    std::size_t transition_len = 3;   // L1
    std::vector<std::size_t> dilations = {1, 3, 6, 12};
    std::size_t attention_len = 15;  // L2
    std::size_t pooling_len = 15;
    double softmax_temperature = 1.0;
    std::size_t projector_len = 3;  // L3

    std::size_t n_kernels(std::size_t k1) const { return k1 * kernels_per_dim; }  // K
    // dilation assigned to output row k: rows split equally across dilations
    std::vector<std::size_t> dilation_per_kernel(std::size_t k1) const;
};

struct DynamicsVars {
    nn::Var w_s;      // [C, C] spatial projector
    nn::Var w_tr;     // [K, C, L1] transition kernels
    nn::Var w_att;    // [K, L2] depthwise temporal filters
    nn::Var mixing;   // [K, K] pointwise mixing
    nn::Var w_isa1;   // [K, L3]
    nn::Var w_isa2;   // [K, L3]
};

// p[:, t, d] = W_s x_hat[:, t, d]; the covariance-alignment latent.
nn::Var spatial_project(nn::Graph& g, nn::Var x_hat, nn::Var w_s);

// Grouped dilated cross-channel convolution, [C,N1,K1] -> [K,N1].
nn::Var transition_conv(nn::Graph& g, nn::Var p, const DynamicsVars& params,
                        const DynamicsConfig& cfg);

struct LocalAttentionOut {
    nn::Var weights;  // h_att, softmax columns
    nn::Var h3;       // h_att (.) h1
};

LocalAttentionOut local_attention(nn::Graph& g, nn::Var h1, const DynamicsVars& params,
                                  const DynamicsConfig& cfg);

// ISA projector: average pooling + two depthwise temporal convolutions.
nn::Var isa_projector(nn::Graph& g, nn::Var h3, const DynamicsVars& params,
                      const DynamicsConfig& cfg);

// Temporal mean of h3, the downstream classifier feature [K].
nn::Var extract_window_feature(nn::Graph& g, nn::Var h3);

}  // namespace mdjpt::dyn
