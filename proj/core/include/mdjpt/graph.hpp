#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mdjpt/tensor.hpp"

namespace mdjpt::nn {

// One node of a reverse-mode tape. Values are computed eagerly at op
// construction; backward closures run in reverse creation order.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> back;
};

using Var = Node*;

// A single-use computation tape. Build a forward pass, call backward(loss)
// once, then read gradients off the leaves. Not thread-safe; use one Graph
// per thread of work.
class Graph {
public:
    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var scalar_const(double x) { return constant(Tensor::scalar(x)); }

    // elementwise
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_n(const std::vector<Var>& xs);

    // matrix ops ([m x k] conventions are row-major 2-D tensors)
    Var matmul(Var a, Var b);     // A[m,k] * B[k,n]
    Var matmul_tn(Var a, Var b);  // A^T[m,k]^T * B -> [k,n], A is [m,k], B [m,n]
    Var matmul_nt(Var a, Var b);  // A[m,k] * B^T, B is [n,k] -> [m,n]
    Var add_rowvec(Var x, Var b);  // X[n,d] + b[d] per row
    Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

    Var slice_cols(Var x, std::size_t c0, std::size_t width);
    Var concat_cols(const std::vector<Var>& xs);
    Var reshape(Var x, std::vector<std::size_t> shape);  // numel-preserving view copy
    Var slice_plane(Var p, std::size_t d);  // [C,N,K] -> [C,N] at last-axis index d

    // activations
    Var relu(Var x);
    Var silu(Var x);
    Var sigmoid(Var x);
    Var elu1(Var x);  // ELU(x)+1, strictly positive

    Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var batchnorm_train(Var x, Var gamma, Var beta, double eps,
                        std::vector<double>* batch_mean, std::vector<double>* batch_var);
    Var softmax_dim0(Var x);  // [K,T], softmax over K per column

    // temporal ops on [K,T] maps
    Var conv1d_depthwise(Var x, Var w, std::size_t dilation = 1);  // zero pad, same length
    Var avgpool_replicate(Var x, std::size_t window);              // stride 1, edge replicate
    Var mean_dim1(Var x);     // [K,T] -> [K]
    Var center_rows(Var x);   // subtract per-row mean over columns

    // depthwise convolution over the row (time) axis within each segment of
    // x[R,D] (R = n_seg*seg_len), one kernel w[D,L] column per feature dim;
    // zero padding keeps segment length.
    Var seg_conv1d_time(Var x, Var w, std::size_t seg_len);

    // grouped cross-channel convolution: p[C,N,K1], w[K,C,L1]; output [K,N].
    // Output row k reads plane d = k / k2 of p and uses dilation dils[k].
    Var transition_conv(Var p, Var w, std::size_t k2, const std::vector<std::size_t>& dils);

    // fused per-segment linear attention over q,k,v [R,D] with R = n_seg*seg_len.
    // Feature map ELU+1, global (non-causal) within each segment, per head.
    Var linear_attention(Var q, Var k, Var v, std::size_t seg_len, std::size_t n_heads,
                         double eps = 1e-6);

    // reductions / scalars (all produce shape {1})
    Var sum(Var x);
    Var sumsq(Var x);
    Var dot(Var a, Var b);  // flat inner product, shapes must match
    Var cosine(Var a, Var b, double eps = 1e-12);
    Var s_add(Var a, Var b) { return add(a, b); }
    Var s_sub(Var a, Var b) { return sub(a, b); }
    Var s_mul(Var a, Var b);
    Var s_div(Var a, Var b);
    Var s_exp(Var a);
    Var s_log1p(Var a);
    Var s_neg(Var a) { return scale(a, -1.0); }
    Var logsumexp(const std::vector<Var>& xs);

    // mean cross-entropy of softmax(logits[n,c]) against integer labels
    Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    Var make(Tensor value, bool requires_grad);
    std::vector<std::unique_ptr<Node>> nodes_;
};

// In-place softmax over the rows of logits[n,c]; inference-path helper.
void softmax_rows_inplace(Tensor& logits);

}  // namespace mdjpt::nn
