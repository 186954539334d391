#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "testutil.hpp"

using mdjpt::nn::Graph;
using mdjpt::nn::Tensor;
using mdjpt::nn::Var;
using testutil::gradcheck;

namespace {

Tensor rand_t(std::vector<std::size_t> shape, std::mt19937_64& rng, double sd = 1.0) {
    Tensor t(std::move(shape));
    t.fill_normal(rng, 0.0, sd);
    return t;
}

}  // namespace

TEST_CASE("elementwise and matmul gradients") {
    std::mt19937_64 rng(1);
    auto a = rand_t({3, 4}, rng), b = rand_t({3, 4}, rng);
    CHECK(gradcheck({a, b}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.mul(g.add(v[0], v[1]), g.sub(v[0], v[1])));
          }) < 1e-6);

    auto m1 = rand_t({3, 5}, rng), m2 = rand_t({5, 2}, rng);
    CHECK(gradcheck({m1, m2}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.matmul(v[0], v[1]));
          }) < 1e-6);

    auto t1 = rand_t({4, 3}, rng), t2 = rand_t({4, 2}, rng);
    CHECK(gradcheck({t1, t2}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.matmul_tn(v[0], v[1]));
          }) < 1e-6);

    auto n1 = rand_t({3, 4}, rng), n2 = rand_t({2, 4}, rng);
    CHECK(gradcheck({n1, n2}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.matmul_nt(v[0], v[1]));
          }) < 1e-6);
}

TEST_CASE("activation gradients") {
    std::mt19937_64 rng(2);
    auto x = rand_t({2, 6}, rng);
    for (auto f : {0, 1, 2, 3}) {
        CHECK(gradcheck({x}, [f](Graph& g, std::vector<Var>& v) {
                  Var y = f == 0   ? g.relu(v[0])
                          : f == 1 ? g.silu(v[0])
                          : f == 2 ? g.sigmoid(v[0])
                                   : g.elu1(v[0]);
                  return g.sumsq(y);
              }) < 1e-5);
    }
}

TEST_CASE("layernorm and batchnorm gradients") {
    std::mt19937_64 rng(3);
    auto x = rand_t({4, 5}, rng);
    auto gamma = rand_t({5}, rng, 0.3);
    auto beta = rand_t({5}, rng, 0.3);
    for (auto& v : gamma.v) v += 1.0;
    CHECK(gradcheck({x, gamma, beta}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.layernorm(v[0], v[1], v[2]));
          }) < 1e-4);
    CHECK(gradcheck({x, gamma, beta}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.batchnorm_train(v[0], v[1], v[2], 1e-5, nullptr, nullptr));
          }) < 1e-4);
}

TEST_CASE("softmax over dim0: columns sum to one, gradient") {
    std::mt19937_64 rng(4);
    auto x = rand_t({5, 3}, rng);
    Graph g;
    Var y = g.softmax_dim0(g.leaf(x, false));
    for (std::size_t t = 0; t < 3; ++t) {
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += y->val.at(k, t);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    auto w = rand_t({5, 3}, rng);
    CHECK(gradcheck({x}, [&w](Graph& g, std::vector<Var>& v) {
              return g.dot(g.softmax_dim0(v[0]), g.constant(w));
          }) < 1e-5);
}

TEST_CASE("temporal ops gradients") {
    std::mt19937_64 rng(5);
    auto x = rand_t({3, 9}, rng);
    auto w = rand_t({3, 3}, rng);
    for (std::size_t dil : {std::size_t{1}, std::size_t{2}})
        CHECK(gradcheck({x, w}, [dil](Graph& g, std::vector<Var>& v) {
                  return g.sumsq(g.conv1d_depthwise(v[0], v[1], dil));
              }) < 1e-5);
    CHECK(gradcheck({x}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.avgpool_replicate(v[0], 4));
          }) < 1e-5);
    CHECK(gradcheck({x}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.mean_dim1(v[0]));
          }) < 1e-5);
    CHECK(gradcheck({x}, [](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.matmul_nt(g.center_rows(v[0]), g.center_rows(v[0])));
          }) < 1e-5);
}

TEST_CASE("avgpool preserves constant rows exactly") {
    Graph g;
    Var x = g.constant(Tensor::full({2, 7}, 3.25));
    Var y = g.avgpool_replicate(x, 5);
    for (double v : y->val.v) CHECK(v == 3.25);
}

TEST_CASE("transition conv matches loop oracle and gradient") {
    std::mt19937_64 rng(6);
    const std::size_t C = 4, N = 8, K1 = 2, k2 = 2, L = 3;
    auto p = rand_t({C, N, K1}, rng);
    auto w = rand_t({K1 * k2, C, L}, rng);
    std::vector<std::size_t> dils = {1, 3, 1, 3};

    Graph g;
    Var out = g.transition_conv(g.leaf(p, false), g.leaf(w, false), k2, dils);
    for (std::size_t k = 0; k < K1 * k2; ++k)
        for (std::size_t t = 0; t < N; ++t) {
            double acc = 0;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t l = 0; l < L; ++l) {
                    const std::ptrdiff_t s =
                        static_cast<std::ptrdiff_t>(t) +
                        (static_cast<std::ptrdiff_t>(l) - 1) * static_cast<std::ptrdiff_t>(dils[k]);
                    if (s >= 0 && s < static_cast<std::ptrdiff_t>(N))
                        acc += w.at(k, c, l) * p.at(c, static_cast<std::size_t>(s), k / k2);
                }
            CHECK(out->val.at(k, t) == doctest::Approx(acc).epsilon(1e-12));
        }

    CHECK(gradcheck({p, w}, [&dils, k2](Graph& g, std::vector<Var>& v) {
              return g.sumsq(g.transition_conv(v[0], v[1], k2, dils));
          }) < 1e-5);
}

TEST_CASE("linear attention matches naive recomputation and gradient") {
    std::mt19937_64 rng(7);
    const std::size_t seg = 3, n_seg = 2, D = 4, heads = 2, dh = D / heads;
    auto q = rand_t({n_seg * seg, D}, rng);
    auto k = rand_t({n_seg * seg, D}, rng);
    auto v = rand_t({n_seg * seg, D}, rng);

    Graph g;
    Var out = g.linear_attention(g.leaf(q, false), g.leaf(k, false), g.leaf(v, false), seg, heads);
    auto phi = [](double x) { return x > 0 ? x + 1.0 : std::exp(x); };
    for (std::size_t s = 0; s < n_seg; ++s)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t r = 0; r < seg; ++r) {
                const std::size_t row = s * seg + r;
                for (std::size_t j = 0; j < dh; ++j) {
                    double num = 0;
                    for (std::size_t r2 = 0; r2 < seg; ++r2) {
                        const std::size_t row2 = s * seg + r2;
                        double qk = 0;
                        for (std::size_t i = 0; i < dh; ++i)
                            qk += phi(q.at(row, h * dh + i)) * phi(k.at(row2, h * dh + i));
                        num += qk * v.at(row2, h * dh + j);
                    }
                    double den2 = 1e-6;
                    for (std::size_t i = 0; i < dh; ++i) {
                        double z = 0;
                        for (std::size_t r2 = 0; r2 < seg; ++r2)
                            z += phi(k.at(s * seg + r2, h * dh + i));
                        den2 += phi(q.at(row, h * dh + i)) * z;
                    }
                    CHECK(out->val.at(row, h * dh + j) ==
                          doctest::Approx(num / den2).epsilon(1e-10));
                }
            }

    CHECK(gradcheck({q, k, v}, [seg, heads](Graph& g, std::vector<Var>& vs) {
              return g.sumsq(g.linear_attention(vs[0], vs[1], vs[2], seg, heads));
          }) < 1e-5);
}

TEST_CASE("scalar graph ops") {
    std::mt19937_64 rng(8);
    auto a = rand_t({6}, rng), b = rand_t({6}, rng);
    CHECK(gradcheck({a, b}, [](Graph& g, std::vector<Var>& v) {
              Var c = g.cosine(v[0], v[1]);
              Var d = g.dot(v[0], v[1]);
              Var lse = g.logsumexp({c, g.scale(d, 0.1), g.scalar_const(0.0)});
              return g.s_log1p(g.s_mul(lse, lse));
          }) < 1e-4);
}

TEST_CASE("cosine identities") {
    Graph g;
    Var a = g.constant(Tensor::from({2}, {1, 2}));
    Var b = g.constant(Tensor::from({2}, {2, 1}));
    CHECK(g.cosine(a, b)->val[0] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(g.cosine(a, a)->val[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy gradient") {
    std::mt19937_64 rng(9);
    auto logits = rand_t({5, 3}, rng);
    std::vector<int> labels = {0, 2, 1, 1, 0};
    CHECK(gradcheck({logits}, [&labels](Graph& g, std::vector<Var>& v) {
              return g.softmax_cross_entropy(v[0], labels);
          }) < 1e-5);
}

TEST_CASE("slicing, concat, reshape round trip") {
    std::mt19937_64 rng(10);
    auto x = rand_t({4, 6}, rng);
    Graph g;
    Var xv = g.leaf(x, false);
    Var back = g.concat_cols({g.slice_cols(xv, 0, 2), g.slice_cols(xv, 2, 4)});
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back->val[i] == x[i]);
    CHECK(gradcheck({x}, [](Graph& g, std::vector<Var>& v) {
              Var r = g.reshape(v[0], {2, 12});
              return g.sumsq(g.concat_cols({g.slice_cols(r, 3, 5), g.slice_cols(r, 0, 3)}));
          }) < 1e-5);
    auto p3 = rand_t({3, 4, 2}, rng);
    CHECK(gradcheck({p3}, [](Graph& g, std::vector<Var>& v) {
              return g.add(g.sumsq(g.slice_plane(v[0], 0)), g.sum(g.slice_plane(v[0], 1)));
          }) < 1e-5);
}
