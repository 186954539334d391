#pragma once

#include <string>
#include <vector>

#include "mdjpt/graph.hpp"

namespace mdjpt::enc {

struct PatchConfig {
    std::size_t patch_len = 32;  // P
    std::size_t stride = 6;      // S

    std::size_t n_patches(std::size_t series_len) const {  // N1
        if (series_len < patch_len) return 0;
        return (series_len - patch_len) / stride + 1;
    }
};

struct MllaConfig {
    std::size_t hidden_dim = 128;
    std::size_t out_dim = 32;  // K1
    std::size_t depth = 2;
    std::size_t n_heads = 8;
    std::size_t conv_kernel = 3;
    std::size_t mlp_hidden = 512;
};

// Slice one channel's series into overlapping strided patches, [N1 x P].
// Trailing samples not covered by a full patch are dropped.
nn::Tensor patchify(const std::vector<double>& series, const PatchConfig& cfg);

// Patch rows for all channels of a [C x L] window stacked as [C*N1 x P].
nn::Tensor patchify_channels(const nn::Tensor& window, const PatchConfig& cfg);

// Named parameter tensors of the channel encoder, bound into a graph per pass.
struct MllaVars {
    nn::Var embed_w, embed_b;
    struct Block {
        nn::Var norm1_g, norm1_b;
        nn::Var in_w, in_b, dw_w;
        nn::Var q_w, q_b, k_w, k_b, v_w, v_b;
        nn::Var forget_w, forget_b;
        nn::Var out_w, out_b;
        nn::Var norm2_g, norm2_b;
        nn::Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };
    std::vector<Block> blocks;
    nn::Var final_norm_g, final_norm_b, proj_w, proj_b;
};

// Forward the batched patch matrix [C*N1 x P] through the encoder; attention
// is global within each channel's N1-patch segment. Returns [C*N1 x K1].
nn::Var mlla_forward(nn::Graph& g, nn::Var patches, const MllaVars& params,
                     const MllaConfig& cfg, std::size_t seg_len);

// Full channel-independent encoding of a [C x L] window: [C, N1, K1].
nn::Var encode_channels(nn::Graph& g, const nn::Tensor& window, const MllaVars& params,
                        const MllaConfig& cfg, const PatchConfig& patch_cfg);

}  // namespace mdjpt::enc
