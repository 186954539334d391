#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mdjpt/graph.hpp"

namespace testutil {

using mdjpt::nn::Graph;
using mdjpt::nn::Tensor;
using mdjpt::nn::Var;

// Builds the forward pass from leaf vars created off `params` and returns the
// scalar loss node. Called repeatedly for finite differencing.
using BuildFn = std::function<Var(Graph&, std::vector<Var>&)>;

inline double eval_loss(std::vector<Tensor>& params, const BuildFn& build) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (auto& p : params) leaves.push_back(g.leaf(p, true));
    return build(g, leaves)->val[0];
}

// Max relative error between analytic gradients and central finite differences.
inline double gradcheck(std::vector<Tensor> params, const BuildFn& build, double step = 1e-4) {
    Graph g;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(g.leaf(p, true));
    Var loss = build(g, leaves);
    g.backward(loss);

    double worst = 0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t i = 0; i < params[pi].numel(); ++i) {
            const double keep = params[pi][i];
            params[pi][i] = keep + step;
            const double fp = eval_loss(params, build);
            params[pi][i] = keep - step;
            const double fm = eval_loss(params, build);
            params[pi][i] = keep;
            const double num = (fp - fm) / (2.0 * step);
            const double ana = leaves[pi]->grad[i];
            const double rel = std::abs(ana - num) / std::max(1e-6, std::abs(ana) + std::abs(num));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace testutil
