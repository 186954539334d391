#pragma once

#include <vector>

#include "mdjpt/graph.hpp"

namespace mdjpt::losses {

struct LossWeights {
    double lambda_cda = 0.02;  // weight of the covariance alignment term
    double tau = 0.07;         // NT-Xent temperature
    double isa_weight = 1.0;   // ablation knob: 0 trains on the CDA term alone
};

// Sample covariance of one latent-dimension slice p[:, :, d] of shape [C, N1]:
// rows centered over time, Sigma = X X^T / (N1 - 1). Symmetric PSD.
nn::Var trial_covariance(nn::Graph& g, nn::Var p_slice);

// Arithmetic mean of per-trial covariance matrices.
nn::Var subject_centroid(nn::Graph& g, const std::vector<nn::Var>& covs);

// centroids[s][d] is subject s's centroid for latent dim d.
// L_d = sum_{m<n} ||G_m - G_n||_F^2, loss = log(sum_d L_d + 1).
nn::Var cda_loss(nn::Graph& g, const std::vector<std::vector<nn::Var>>& centroids);

// Plain-vector cosine similarity; throws ZeroNormVector on a zero input.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Contrastive embeddings for one dataset: two subjects, stimulus-aligned
// windows. a[i] and b[i] are positives.
struct DatasetEmbeddings {
    std::vector<nn::Var> a;
    std::vector<nn::Var> b;
};

// NT-Xent over aligned subject pairs. For anchor (i, A) the positive is
// (i, B); negatives are the other windows of both subjects (2 v_m - 1
// denominator terms). Both anchor directions, summed over datasets.
nn::Var isa_loss(nn::Graph& g, const std::vector<DatasetEmbeddings>& datasets, double tau);

nn::Var total_loss(nn::Graph& g, nn::Var l_isa, nn::Var l_cda, double lambda_cda);

// Unbiased multi-kernel MMD^2 with Gaussian kernels exp(-||x-y||^2 / bw),
// averaged over bandwidths. Comparison alignment term for ablation mode.
nn::Var mkmmd_loss(nn::Graph& g, const std::vector<nn::Var>& a, const std::vector<nn::Var>& b,
                   const std::vector<double>& bandwidths);

// Median of pairwise squared distances over the pooled samples, scaled by
// {0.25, 0.5, 1, 2, 4}.
std::vector<double> mkmmd_default_bandwidths(const std::vector<std::vector<double>>& pooled);

}  // namespace mdjpt::losses
