#include "mdjpt/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mdjpt/error.hpp"

namespace mdjpt::losses {

using nn::Graph;
using nn::Var;

Var trial_covariance(Graph& g, Var p_slice) {
    if (p_slice->val.rank() != 2)
        throw Error("DimensionMismatch", "trial_covariance expects a [C x N1] slice");
    const std::size_t n1 = p_slice->val.dim(1);
    if (n1 < 2) throw Error("DegenerateWindow", "covariance needs at least two time steps");
    Var x = g.center_rows(p_slice);
    return g.scale(g.matmul_nt(x, x), 1.0 / double(n1 - 1));
}

Var subject_centroid(Graph& g, const std::vector<Var>& covs) {
    if (covs.empty()) throw Error("EmptyList", "subject_centroid over zero trials");
    return g.scale(g.add_n(covs), 1.0 / double(covs.size()));
}

Var cda_loss(Graph& g, const std::vector<std::vector<Var>>& centroids) {
    if (centroids.size() < 2) throw Error("TooFewSubjects", "need at least two centroids");
    const std::size_t n_dims = centroids[0].size();
    for (const auto& subj : centroids)
        if (subj.size() != n_dims)
            throw Error("DimensionMismatch", "inconsistent latent dim count across subjects");
    std::vector<Var> terms;
    for (std::size_t d = 0; d < n_dims; ++d)
        for (std::size_t m = 0; m + 1 < centroids.size(); ++m)
            for (std::size_t n = m + 1; n < centroids.size(); ++n)
                terms.push_back(g.sumsq(g.sub(centroids[m][d], centroids[n][d])));
    return g.s_log1p(g.add_n(terms));
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw Error("DimensionMismatch", "cosine_similarity length mismatch");
    double na = 0, nb = 0, d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
        d += a[i] * b[i];
    }
    if (na == 0 || nb == 0) throw Error("ZeroNormVector", "cosine of a zero vector");
    return d / (std::sqrt(na) * std::sqrt(nb));
}

Var isa_loss(Graph& g, const std::vector<DatasetEmbeddings>& datasets, double tau) {
    if (tau <= 0) throw Error("SchemaViolation", "temperature must be positive");
    std::vector<Var> anchors;
    for (const auto& ds : datasets) {
        const std::size_t v = ds.a.size();
        if (v == 0 || ds.b.size() != v)
            throw Error("MismatchedCounts", "subject pair must contribute equal window counts");
        // sims[i][j] between every window pair; reused by both anchor roles
        std::vector<std::vector<Var>> aa(v, std::vector<Var>(v));
        std::vector<std::vector<Var>> bb(v, std::vector<Var>(v));
        std::vector<std::vector<Var>> ab(v, std::vector<Var>(v));
        for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = 0; j < v; ++j) {
                if (i < j) {
                    aa[i][j] = aa[j][i] = g.scale(g.cosine(ds.a[i], ds.a[j]), 1.0 / tau);
                    bb[i][j] = bb[j][i] = g.scale(g.cosine(ds.b[i], ds.b[j]), 1.0 / tau);
                }
                ab[i][j] = g.scale(g.cosine(ds.a[i], ds.b[j]), 1.0 / tau);
            }
        for (std::size_t i = 0; i < v; ++i) {
            std::vector<Var> den_a, den_b;
            for (std::size_t j = 0; j < v; ++j) {
                if (j != i) {
                    den_a.push_back(aa[i][j]);
                    den_b.push_back(bb[i][j]);
                }
                den_a.push_back(ab[i][j]);
                den_b.push_back(ab[j][i]);
            }
            anchors.push_back(g.sub(g.logsumexp(den_a), ab[i][i]));
            anchors.push_back(g.sub(g.logsumexp(den_b), ab[i][i]));
        }
    }
    if (anchors.empty()) throw Error("EmptyList", "isa_loss over zero datasets");
    return g.add_n(anchors);
}

Var total_loss(Graph& g, Var l_isa, Var l_cda, double lambda_cda) {
    return g.add(l_isa, g.scale(l_cda, lambda_cda));
}

namespace {
Var sq_dist(Graph& g, Var x, Var y) { return g.sumsq(g.sub(x, y)); }
}  // namespace

Var mkmmd_loss(Graph& g, const std::vector<Var>& a, const std::vector<Var>& b,
               const std::vector<double>& bandwidths) {
    if (a.empty() || b.empty()) throw Error("EmptySet", "mkmmd_loss needs samples on both sides");
    if (bandwidths.empty()) throw Error("EmptyList", "mkmmd_loss needs bandwidths");
    const std::size_t m = a.size(), n = b.size();
    std::vector<Var> terms;
    for (double bw : bandwidths) {
        const double inv = -1.0 / bw;
        std::vector<Var> xx, yy, xy;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                xx.push_back(g.s_exp(g.scale(sq_dist(g, a[i], a[j]), inv)));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                yy.push_back(g.s_exp(g.scale(sq_dist(g, b[i], b[j]), inv)));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                xy.push_back(g.s_exp(g.scale(sq_dist(g, a[i], b[j]), inv)));
        std::vector<Var> parts;
        if (!xx.empty()) parts.push_back(g.scale(g.add_n(xx), 2.0 / double(m * (m - 1))));
        if (!yy.empty()) parts.push_back(g.scale(g.add_n(yy), 2.0 / double(n * (n - 1))));
        parts.push_back(g.scale(g.add_n(xy), -2.0 / double(m * n)));
        terms.push_back(g.add_n(parts));
    }
    return g.scale(g.add_n(terms), 1.0 / double(bandwidths.size()));
}

std::vector<double> mkmmd_default_bandwidths(const std::vector<std::vector<double>>& pooled) {
    std::vector<double> d2;
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = i + 1; j < pooled.size(); ++j) {
            double s = 0;
            for (std::size_t k = 0; k < pooled[i].size(); ++k) {
                const double d = pooled[i][k] - pooled[j][k];
                s += d * d;
            }
            d2.push_back(s);
        }
    if (d2.empty()) throw Error("EmptySet", "median bandwidth needs at least two samples");
    std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
    double med = d2[d2.size() / 2];
    if (med <= 0) med = 1.0;
    std::vector<double> out;
    for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) out.push_back(med * f);
    return out;
}

}  // namespace mdjpt::losses
