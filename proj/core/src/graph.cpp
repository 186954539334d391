#include "mdjpt/graph.hpp"

#include <algorithm>
#include <cmath>

namespace mdjpt::nn {

namespace {

void check(bool ok, const char* what) {
    if (!ok) throw Error("DimensionMismatch", what);
}

double sigmoid_x(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double elu1_x(double x) { return x > 0 ? x + 1.0 : std::exp(x); }
double elu1_dx(double x) { return x > 0 ? 1.0 : std::exp(x); }

}  // namespace

Var Graph::make(Tensor value, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->val = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad = Tensor(n->val.shape);
    nodes_.push_back(std::move(n));
    return nodes_.back().get();
}

Var Graph::leaf(Tensor value, bool requires_grad) { return make(std::move(value), requires_grad); }

Var Graph::add(Var a, Var b) {
    check(a->val.same_shape(b->val), "add: shape mismatch");
    Tensor out = a->val;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i) b->grad[i] += o->grad[i];
        };
    return o;
}

Var Graph::sub(Var a, Var b) {
    check(a->val.same_shape(b->val), "sub: shape mismatch");
    Tensor out = a->val;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i) a->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i) b->grad[i] -= o->grad[i];
        };
    return o;
}

Var Graph::mul(Var a, Var b) {
    check(a->val.same_shape(b->val), "mul: shape mismatch");
    Tensor out = a->val;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i)
                    a->grad[i] += o->grad[i] * b->val[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i)
                    b->grad[i] += o->grad[i] * a->val[i];
        };
    return o;
}

Var Graph::scale(Var a, double s) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= s;
    Var o = make(std::move(out), a->requires_grad);
    if (o->requires_grad)
        o->back = [a, o, s] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i) a->grad[i] += s * o->grad[i];
        };
    return o;
}

Var Graph::add_n(const std::vector<Var>& xs) {
    check(!xs.empty(), "add_n: empty");
    Tensor out = xs[0]->val;
    bool rg = xs[0]->requires_grad;
    for (std::size_t j = 1; j < xs.size(); ++j) {
        check(out.same_shape(xs[j]->val), "add_n: shape mismatch");
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += xs[j]->val[i];
        rg = rg || xs[j]->requires_grad;
    }
    Var o = make(std::move(out), rg);
    if (o->requires_grad) {
        std::vector<Var> parents = xs;
        o->back = [parents, o] {
            for (Var p : parents)
                if (p->requires_grad)
                    for (std::size_t i = 0; i < o->grad.numel(); ++i) p->grad[i] += o->grad[i];
        };
    }
    return o;
}

Var Graph::matmul(Var a, Var b) {
    check(a->val.rank() == 2 && b->val.rank() == 2 && a->val.dim(1) == b->val.dim(0),
          "matmul: bad shapes");
    const std::size_t m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = &a->val.v[i * k];
        double* orow = &out.v[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = &b->val.v[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o, m, k, n] {
            if (a->requires_grad) {  // dA += G B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0;
                        const double* g = &o->grad.v[i * n];
                        const double* br = &b->val.v[p * n];
                        for (std::size_t j = 0; j < n; ++j) acc += g[j] * br[j];
                        a->grad.v[i * k + p] += acc;
                    }
            }
            if (b->requires_grad) {  // dB += A^T G
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = a->val.v[i * k + p];
                        const double* g = &o->grad.v[i * n];
                        double* br = &b->grad.v[p * n];
                        for (std::size_t j = 0; j < n; ++j) br[j] += av * g[j];
                    }
            }
        };
    return o;
}

Var Graph::matmul_tn(Var a, Var b) {
    check(a->val.rank() == 2 && b->val.rank() == 2 && a->val.dim(0) == b->val.dim(0),
          "matmul_tn: bad shapes");
    const std::size_t r = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
    Tensor out({k, n});
    for (std::size_t t = 0; t < r; ++t) {
        const double* ar = &a->val.v[t * k];
        const double* br = &b->val.v[t * n];
        for (std::size_t i = 0; i < k; ++i) {
            double* orow = &out.v[i * n];
            const double av = ar[i];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
        }
    }
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o, r, k, n] {
            if (a->requires_grad) {  // dA += B G^T
                for (std::size_t t = 0; t < r; ++t)
                    for (std::size_t i = 0; i < k; ++i) {
                        double acc = 0;
                        const double* br = &b->val.v[t * n];
                        const double* g = &o->grad.v[i * n];
                        for (std::size_t j = 0; j < n; ++j) acc += br[j] * g[j];
                        a->grad.v[t * k + i] += acc;
                    }
            }
            if (b->requires_grad) {  // dB += A G
                for (std::size_t t = 0; t < r; ++t)
                    for (std::size_t i = 0; i < k; ++i) {
                        const double av = a->val.v[t * k + i];
                        const double* g = &o->grad.v[i * n];
                        double* br = &b->grad.v[t * n];
                        for (std::size_t j = 0; j < n; ++j) br[j] += av * g[j];
                    }
            }
        };
    return o;
}

Var Graph::matmul_nt(Var a, Var b) {
    check(a->val.rank() == 2 && b->val.rank() == 2 && a->val.dim(1) == b->val.dim(1),
          "matmul_nt: bad shapes");
    const std::size_t m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(0);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            const double* ar = &a->val.v[i * k];
            const double* br = &b->val.v[j * k];
            for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
            out.v[i * n + j] = acc;
        }
    Var o = make(std::move(out), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o, m, k, n] {
            if (a->requires_grad)  // dA += G B
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = o->grad.v[i * n + j];
                        const double* br = &b->val.v[j * k];
                        double* ar = &a->grad.v[i * k];
                        for (std::size_t p = 0; p < k; ++p) ar[p] += g * br[p];
                    }
            if (b->requires_grad)  // dB += G^T A
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = o->grad.v[i * n + j];
                        const double* ar = &a->val.v[i * k];
                        double* br = &b->grad.v[j * k];
                        for (std::size_t p = 0; p < k; ++p) br[p] += g * ar[p];
                    }
        };
    return o;
}

Var Graph::add_rowvec(Var x, Var b) {
    check(x->val.rank() == 2 && b->val.rank() == 1 && x->val.dim(1) == b->val.dim(0),
          "add_rowvec: bad shapes");
    const std::size_t n = x->val.dim(0), d = x->val.dim(1);
    Tensor out = x->val;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.v[i * d + j] += b->val[j];
    Var o = make(std::move(out), x->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [x, b, o, n, d] {
            if (x->requires_grad)
                for (std::size_t i = 0; i < o->grad.numel(); ++i) x->grad[i] += o->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) b->grad[j] += o->grad.v[i * d + j];
        };
    return o;
}

Var Graph::slice_cols(Var x, std::size_t c0, std::size_t width) {
    check(x->val.rank() == 2 && c0 + width <= x->val.dim(1), "slice_cols: out of range");
    const std::size_t n = x->val.dim(0), d = x->val.dim(1);
    Tensor out({n, width});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) out.v[i * width + j] = x->val.v[i * d + c0 + j];
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o, c0, width, n, d] {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < width; ++j)
                    x->grad.v[i * d + c0 + j] += o->grad.v[i * width + j];
        };
    return o;
}

Var Graph::concat_cols(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_cols: empty");
    const std::size_t n = xs[0]->val.dim(0);
    std::size_t total = 0;
    bool rg = false;
    for (Var x : xs) {
        check(x->val.rank() == 2 && x->val.dim(0) == n, "concat_cols: shape mismatch");
        total += x->val.dim(1);
        rg = rg || x->requires_grad;
    }
    Tensor out({n, total});
    std::size_t off = 0;
    for (Var x : xs) {
        const std::size_t w = x->val.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) out.v[i * total + off + j] = x->val.v[i * w + j];
        off += w;
    }
    Var o = make(std::move(out), rg);
    if (o->requires_grad) {
        std::vector<Var> parents = xs;
        o->back = [parents, o, n, total] {
            std::size_t off = 0;
            for (Var x : parents) {
                const std::size_t w = x->val.dim(1);
                if (x->requires_grad)
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            x->grad.v[i * w + j] += o->grad.v[i * total + off + j];
                off += w;
            }
        };
    }
    return o;
}

Var Graph::reshape(Var x, std::vector<std::size_t> shape) {
    check(Tensor::numel_of(shape) == x->val.numel(), "reshape: numel mismatch");
    Tensor out;
    out.shape = std::move(shape);
    out.v = x->val.v;
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i) x->grad[i] += o->grad[i];
        };
    return o;
}

Var Graph::slice_plane(Var p, std::size_t d) {
    check(p->val.rank() == 3 && d < p->val.dim(2), "slice_plane: out of range");
    const std::size_t C = p->val.dim(0), N = p->val.dim(1), K = p->val.dim(2);
    Tensor out({C, N});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < N; ++t) out.v[c * N + t] = p->val.v[(c * N + t) * K + d];
    Var o = make(std::move(out), p->requires_grad);
    if (o->requires_grad)
        o->back = [p, o, d, C, N, K] {
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < N; ++t)
                    p->grad.v[(c * N + t) * K + d] += o->grad.v[c * N + t];
        };
    return o;
}

Var Graph::relu(Var x) {
    Tensor out = x->val;
    for (auto& v : out.v) v = v > 0 ? v : 0.0;
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i)
                if (x->val[i] > 0) x->grad[i] += o->grad[i];
        };
    return o;
}

Var Graph::silu(Var x) {
    Tensor out = x->val;
    for (auto& v : out.v) v = v * sigmoid_x(v);
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i) {
                const double s = sigmoid_x(x->val[i]);
                x->grad[i] += o->grad[i] * s * (1.0 + x->val[i] * (1.0 - s));
            }
        };
    return o;
}

Var Graph::sigmoid(Var x) {
    Tensor out = x->val;
    for (auto& v : out.v) v = sigmoid_x(v);
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i) {
                const double s = o->val[i];
                x->grad[i] += o->grad[i] * s * (1.0 - s);
            }
        };
    return o;
}

Var Graph::elu1(Var x) {
    Tensor out = x->val;
    for (auto& v : out.v) v = elu1_x(v);
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < o->grad.numel(); ++i)
                x->grad[i] += o->grad[i] * elu1_dx(x->val[i]);
        };
    return o;
}

Var Graph::layernorm(Var x, Var gamma, Var beta, double eps) {
    check(x->val.rank() == 2 && gamma->val.dim(0) == x->val.dim(1) &&
              beta->val.dim(0) == x->val.dim(1),
          "layernorm: bad shapes");
    const std::size_t n = x->val.dim(0), d = x->val.dim(1);
    Tensor out({n, d});
    auto xhat = std::make_shared<Tensor>(Tensor({n, d}));
    auto inv_sd = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = &x->val.v[i * d];
        double mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mu) * is;
            xhat->v[i * d + j] = xh;
            out.v[i * d + j] = xh * gamma->val[j] + beta->val[j];
        }
    }
    Var o = make(std::move(out),
                 x->requires_grad || gamma->requires_grad || beta->requires_grad);
    if (o->requires_grad)
        o->back = [x, gamma, beta, o, xhat, inv_sd, n, d] {
            for (std::size_t i = 0; i < n; ++i) {
                const double* g = &o->grad.v[i * d];
                const double* xh = &xhat->v[i * d];
                if (gamma->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) gamma->grad[j] += g[j] * xh[j];
                if (beta->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) beta->grad[j] += g[j];
                if (x->requires_grad) {
                    double m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[j] * gamma->val[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double is = (*inv_sd)[i];
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[j] * gamma->val[j];
                        x->grad.v[i * d + j] += is * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        };
    return o;
}

Var Graph::batchnorm_train(Var x, Var gamma, Var beta, double eps,
                           std::vector<double>* batch_mean, std::vector<double>* batch_var) {
    check(x->val.rank() == 2, "batchnorm: bad shapes");
    const std::size_t n = x->val.dim(0), d = x->val.dim(1);
    auto xhat = std::make_shared<Tensor>(Tensor({n, d}));
    auto inv_sd = std::make_shared<std::vector<double>>(d);
    if (batch_mean) batch_mean->assign(d, 0.0);
    if (batch_var) batch_var->assign(d, 0.0);
    Tensor out({n, d});
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0;
        for (std::size_t i = 0; i < n; ++i) mu += x->val.v[i * d + j];
        mu /= static_cast<double>(n);
        double var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = x->val.v[i * d + j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sd)[j] = is;
        if (batch_mean) (*batch_mean)[j] = mu;
        if (batch_var) (*batch_var)[j] = var;
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (x->val.v[i * d + j] - mu) * is;
            xhat->v[i * d + j] = xh;
            out.v[i * d + j] = xh * gamma->val[j] + beta->val[j];
        }
    }
    Var o = make(std::move(out),
                 x->requires_grad || gamma->requires_grad || beta->requires_grad);
    if (o->requires_grad)
        o->back = [x, gamma, beta, o, xhat, inv_sd, n, d] {
            for (std::size_t j = 0; j < d; ++j) {
                double m1 = 0, m2 = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double g = o->grad.v[i * d + j];
                    const double xh = xhat->v[i * d + j];
                    if (gamma->requires_grad) gamma->grad[j] += g * xh;
                    if (beta->requires_grad) beta->grad[j] += g;
                    const double dxh = g * gamma->val[j];
                    m1 += dxh;
                    m2 += dxh * xh;
                }
                if (!x->requires_grad) continue;
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                const double is = (*inv_sd)[j];
                for (std::size_t i = 0; i < n; ++i) {
                    const double dxh = o->grad.v[i * d + j] * gamma->val[j];
                    x->grad.v[i * d + j] += is * (dxh - m1 - xhat->v[i * d + j] * m2);
                }
            }
        };
    return o;
}

Var Graph::softmax_dim0(Var x) {
    check(x->val.rank() == 2, "softmax_dim0: need [K,T]");
    const std::size_t K = x->val.dim(0), T = x->val.dim(1);
    Tensor out({K, T});
    for (std::size_t t = 0; t < T; ++t) {
        double mx = -1e300;
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, x->val.v[k * T + t]);
        double z = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const double e = std::exp(x->val.v[k * T + t] - mx);
            out.v[k * T + t] = e;
            z += e;
        }
        for (std::size_t k = 0; k < K; ++k) out.v[k * T + t] /= z;
    }
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o, K, T] {
            for (std::size_t t = 0; t < T; ++t) {
                double dotv = 0;
                for (std::size_t k = 0; k < K; ++k)
                    dotv += o->val.v[k * T + t] * o->grad.v[k * T + t];
                for (std::size_t k = 0; k < K; ++k)
                    x->grad.v[k * T + t] += o->val.v[k * T + t] * (o->grad.v[k * T + t] - dotv);
            }
        };
    return o;
}

Var Graph::conv1d_depthwise(Var x, Var w, std::size_t dilation) {
    check(x->val.rank() == 2 && w->val.rank() == 2 && x->val.dim(0) == w->val.dim(0),
          "conv1d_depthwise: bad shapes");
    const std::size_t K = x->val.dim(0), T = x->val.dim(1), L = w->val.dim(1);
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(L - 1) / 2;
    Tensor out({K, T});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t) {
            double acc = 0;
            for (std::size_t l = 0; l < L; ++l) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) +
                                         (static_cast<std::ptrdiff_t>(l) - c0) *
                                             static_cast<std::ptrdiff_t>(dilation);
                if (s >= 0 && s < static_cast<std::ptrdiff_t>(T))
                    acc += w->val.v[k * L + l] * x->val.v[k * T + s];
            }
            out.v[k * T + t] = acc;
        }
    Var o = make(std::move(out), x->requires_grad || w->requires_grad);
    if (o->requires_grad)
        o->back = [x, w, o, K, T, L, c0, dilation] {
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t t = 0; t < T; ++t) {
                    const double g = o->grad.v[k * T + t];
                    if (g == 0.0) continue;
                    for (std::size_t l = 0; l < L; ++l) {
                        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) +
                                                 (static_cast<std::ptrdiff_t>(l) - c0) *
                                                     static_cast<std::ptrdiff_t>(dilation);
                        if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
                        if (x->requires_grad) x->grad.v[k * T + s] += g * w->val.v[k * L + l];
                        if (w->requires_grad) w->grad.v[k * L + l] += g * x->val.v[k * T + s];
                    }
                }
        };
    return o;
}

Var Graph::avgpool_replicate(Var x, std::size_t window) {
    check(x->val.rank() == 2 && window >= 1, "avgpool: bad shapes");
    const std::size_t K = x->val.dim(0), T = x->val.dim(1);
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(window) / 2;
    const double inv = 1.0 / static_cast<double>(window);
    auto clampi = [T](std::ptrdiff_t s) {
        return static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(s, 0, static_cast<std::ptrdiff_t>(T) - 1));
    };
    Tensor out({K, T});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t) {
            double acc = 0;
            for (std::size_t u = 0; u < window; ++u)
                acc += x->val.v[k * T + clampi(static_cast<std::ptrdiff_t>(t + u) - c0)];
            out.v[k * T + t] = acc * inv;
        }
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o, K, T, window, c0, inv, clampi] {
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t t = 0; t < T; ++t) {
                    const double g = o->grad.v[k * T + t] * inv;
                    for (std::size_t u = 0; u < window; ++u)
                        x->grad.v[k * T + clampi(static_cast<std::ptrdiff_t>(t + u) - c0)] += g;
                }
        };
    return o;
}

Var Graph::mean_dim1(Var x) {
    check(x->val.rank() == 2, "mean_dim1: need [K,T]");
    const std::size_t K = x->val.dim(0), T = x->val.dim(1);
    const double inv = 1.0 / static_cast<double>(T);
    Tensor out({K});
    for (std::size_t k = 0; k < K; ++k) {
        double acc = 0;
        for (std::size_t t = 0; t < T; ++t) acc += x->val.v[k * T + t];
        out[k] = acc * inv;
    }
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o, K, T, inv] {
            for (std::size_t k = 0; k < K; ++k) {
                const double g = o->grad[k] * inv;
                for (std::size_t t = 0; t < T; ++t) x->grad.v[k * T + t] += g;
            }
        };
    return o;
}

Var Graph::center_rows(Var x) {
    check(x->val.rank() == 2, "center_rows: need [C,T]");
    const std::size_t C = x->val.dim(0), T = x->val.dim(1);
    const double inv = 1.0 / static_cast<double>(T);
    Tensor out = x->val;
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0;
        for (std::size_t t = 0; t < T; ++t) mu += out.v[c * T + t];
        mu *= inv;
        for (std::size_t t = 0; t < T; ++t) out.v[c * T + t] -= mu;
    }
    Var o = make(std::move(out), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o, C, T, inv] {
            for (std::size_t c = 0; c < C; ++c) {
                double gm = 0;
                for (std::size_t t = 0; t < T; ++t) gm += o->grad.v[c * T + t];
                gm *= inv;
                for (std::size_t t = 0; t < T; ++t) x->grad.v[c * T + t] += o->grad.v[c * T + t] - gm;
            }
        };
    return o;
}

Var Graph::seg_conv1d_time(Var x, Var w, std::size_t seg_len) {
    check(x->val.rank() == 2 && w->val.rank() == 2 && x->val.dim(1) == w->val.dim(0) &&
              x->val.dim(0) % seg_len == 0,
          "seg_conv1d_time: bad shapes");
    const std::size_t R = x->val.dim(0), D = x->val.dim(1), L = w->val.dim(1);
    const std::size_t n_seg = R / seg_len;
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(L - 1) / 2;
    Tensor out({R, D});
    for (std::size_t s = 0; s < n_seg; ++s)
        for (std::size_t r = 0; r < seg_len; ++r) {
            double* orow = &out.v[(s * seg_len + r) * D];
            for (std::size_t l = 0; l < L; ++l) {
                const std::ptrdiff_t rr =
                    static_cast<std::ptrdiff_t>(r) + static_cast<std::ptrdiff_t>(l) - c0;
                if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(seg_len)) continue;
                const double* xrow = &x->val.v[(s * seg_len + static_cast<std::size_t>(rr)) * D];
                for (std::size_t j = 0; j < D; ++j) orow[j] += w->val.v[j * L + l] * xrow[j];
            }
        }
    Var o = make(std::move(out), x->requires_grad || w->requires_grad);
    if (o->requires_grad)
        o->back = [x, w, o, n_seg, seg_len, D, L, c0] {
            for (std::size_t s = 0; s < n_seg; ++s)
                for (std::size_t r = 0; r < seg_len; ++r) {
                    const double* g = &o->grad.v[(s * seg_len + r) * D];
                    for (std::size_t l = 0; l < L; ++l) {
                        const std::ptrdiff_t rr =
                            static_cast<std::ptrdiff_t>(r) + static_cast<std::ptrdiff_t>(l) - c0;
                        if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(seg_len)) continue;
                        const std::size_t xi = (s * seg_len + static_cast<std::size_t>(rr)) * D;
                        for (std::size_t j = 0; j < D; ++j) {
                            if (x->requires_grad)
                                x->grad.v[xi + j] += g[j] * w->val.v[j * L + l];
                            if (w->requires_grad)
                                w->grad.v[j * L + l] += g[j] * x->val.v[xi + j];
                        }
                    }
                }
        };
    return o;
}

Var Graph::transition_conv(Var p, Var w, std::size_t k2, const std::vector<std::size_t>& dils) {
    check(p->val.rank() == 3 && w->val.rank() == 3, "transition_conv: bad ranks");
    const std::size_t C = p->val.dim(0), N = p->val.dim(1), K1 = p->val.dim(2);
    const std::size_t K = w->val.dim(0), L = w->val.dim(2);
    check(w->val.dim(1) == C && K == K1 * k2 && dils.size() == K, "transition_conv: bad shapes");
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(L - 1) / 2;
    Tensor out({K, N});
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t d = k / k2;
        const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(dils[k]);
        for (std::size_t t = 0; t < N; ++t) {
            double acc = 0;
            for (std::size_t l = 0; l < L; ++l) {
                const std::ptrdiff_t s =
                    static_cast<std::ptrdiff_t>(t) + (static_cast<std::ptrdiff_t>(l) - c0) * dil;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(N)) continue;
                const double* wr = &w->val.v[(k * C) * L + l];
                for (std::size_t c = 0; c < C; ++c)
                    acc += wr[c * L] * p->val.v[(c * N + static_cast<std::size_t>(s)) * K1 + d];
            }
            out.v[k * N + t] = acc;
        }
    }
    Var o = make(std::move(out), p->requires_grad || w->requires_grad);
    if (o->requires_grad) {
        std::vector<std::size_t> dils_copy = dils;
        o->back = [p, w, o, C, N, K1, K, L, c0, k2, dils_copy] {
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t d = k / k2;
                const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(dils_copy[k]);
                for (std::size_t t = 0; t < N; ++t) {
                    const double g = o->grad.v[k * N + t];
                    if (g == 0.0) continue;
                    for (std::size_t l = 0; l < L; ++l) {
                        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) +
                                                 (static_cast<std::ptrdiff_t>(l) - c0) * dil;
                        if (s < 0 || s >= static_cast<std::ptrdiff_t>(N)) continue;
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t pi =
                                (c * N + static_cast<std::size_t>(s)) * K1 + d;
                            const std::size_t wi = (k * C + c) * L + l;
                            if (p->requires_grad) p->grad.v[pi] += g * w->val.v[wi];
                            if (w->requires_grad) w->grad.v[wi] += g * p->val.v[pi];
                        }
                    }
                }
            }
        };
    }
    return o;
}

Var Graph::linear_attention(Var q, Var k, Var v, std::size_t seg_len, std::size_t n_heads,
                            double eps) {
    check(q->val.rank() == 2 && q->val.same_shape(k->val) && q->val.same_shape(v->val),
          "linear_attention: bad shapes");
    const std::size_t R = q->val.dim(0), D = q->val.dim(1);
    check(R % seg_len == 0 && D % n_heads == 0, "linear_attention: bad partition");
    const std::size_t n_seg = R / seg_len, dh = D / n_heads;

    struct State {
        Tensor phiQ, phiK;          // [R, D]
        std::vector<double> den;    // [R * n_heads]
        std::vector<double> S;      // per (seg, head): dh*dh, attention state sums
    };
    auto st = std::make_shared<State>();
    st->phiQ = Tensor({R, D});
    st->phiK = Tensor({R, D});
    st->den.assign(R * n_heads, 0.0);
    st->S.assign(n_seg * n_heads * dh * dh, 0.0);
    for (std::size_t i = 0; i < R * D; ++i) {
        st->phiQ.v[i] = elu1_x(q->val.v[i]);
        st->phiK.v[i] = elu1_x(k->val.v[i]);
    }

    Tensor out({R, D});
    for (std::size_t s = 0; s < n_seg; ++s)
        for (std::size_t h = 0; h < n_heads; ++h) {
            double* S = &st->S[(s * n_heads + h) * dh * dh];
            std::vector<double> z(dh, 0.0);
            for (std::size_t r = 0; r < seg_len; ++r) {
                const std::size_t row = s * seg_len + r;
                const double* pk = &st->phiK.v[row * D + h * dh];
                const double* pv = &v->val.v[row * D + h * dh];
                for (std::size_t i = 0; i < dh; ++i) {
                    z[i] += pk[i];
                    for (std::size_t j = 0; j < dh; ++j) S[i * dh + j] += pk[i] * pv[j];
                }
            }
            for (std::size_t r = 0; r < seg_len; ++r) {
                const std::size_t row = s * seg_len + r;
                const double* pq = &st->phiQ.v[row * D + h * dh];
                double den = eps;
                for (std::size_t i = 0; i < dh; ++i) den += pq[i] * z[i];
                st->den[row * n_heads + h] = den;
                double* orow = &out.v[row * D + h * dh];
                for (std::size_t j = 0; j < dh; ++j) {
                    double num = 0;
                    for (std::size_t i = 0; i < dh; ++i) num += pq[i] * S[i * dh + j];
                    orow[j] = num / den;
                }
            }
        }

    Var o = make(std::move(out), q->requires_grad || k->requires_grad || v->requires_grad);
    if (o->requires_grad)
        o->back = [q, k, v, o, st, n_seg, n_heads, seg_len, dh] {
            const std::size_t D = dh * n_heads;
            std::vector<double> gS(dh * dh), gz(dh), gden(seg_len);
            for (std::size_t s = 0; s < n_seg; ++s)
                for (std::size_t h = 0; h < n_heads; ++h) {
                    const double* S = &st->S[(s * n_heads + h) * dh * dh];
                    std::fill(gS.begin(), gS.end(), 0.0);
                    std::fill(gz.begin(), gz.end(), 0.0);
                    // recompute z from phiK
                    std::vector<double> z(dh, 0.0);
                    for (std::size_t r = 0; r < seg_len; ++r) {
                        const double* pk = &st->phiK.v[(s * seg_len + r) * D + h * dh];
                        for (std::size_t i = 0; i < dh; ++i) z[i] += pk[i];
                    }
                    for (std::size_t r = 0; r < seg_len; ++r) {
                        const std::size_t row = s * seg_len + r;
                        const double* go = &o->grad.v[row * D + h * dh];
                        const double* ov = &o->val.v[row * D + h * dh];
                        const double* pq = &st->phiQ.v[row * D + h * dh];
                        const double den = st->den[row * n_heads + h];
                        double gd = 0;
                        for (std::size_t j = 0; j < dh; ++j) gd -= go[j] * ov[j];
                        gd /= den;
                        gden[r] = gd;
                        // gnum_j = go_j / den ; gS += pq^T gnum ; gphiQ = gnum S^T + gd*z
                        for (std::size_t i = 0; i < dh; ++i) {
                            double gq_i = gd * z[i];
                            for (std::size_t j = 0; j < dh; ++j) {
                                const double gnum = go[j] / den;
                                gS[i * dh + j] += pq[i] * gnum;
                                gq_i += gnum * S[i * dh + j];
                            }
                            if (q->requires_grad) {
                                const std::size_t qi = row * D + h * dh + i;
                                q->grad.v[qi] += gq_i * elu1_dx(q->val.v[qi]);
                            }
                        }
                        for (std::size_t i = 0; i < dh; ++i) gz[i] += gd * pq[i];
                    }
                    for (std::size_t r = 0; r < seg_len; ++r) {
                        const std::size_t row = s * seg_len + r;
                        const double* pk = &st->phiK.v[row * D + h * dh];
                        const double* pv = &v->val.v[row * D + h * dh];
                        for (std::size_t i = 0; i < dh; ++i) {
                            if (k->requires_grad) {
                                double gk_i = gz[i];
                                for (std::size_t j = 0; j < dh; ++j)
                                    gk_i += gS[i * dh + j] * pv[j];
                                const std::size_t ki = row * D + h * dh + i;
                                k->grad.v[ki] += gk_i * elu1_dx(k->val.v[ki]);
                            }
                        }
                        if (v->requires_grad)
                            for (std::size_t j = 0; j < dh; ++j) {
                                double gv_j = 0;
                                for (std::size_t i = 0; i < dh; ++i)
                                    gv_j += pk[i] * gS[i * dh + j];
                                v->grad.v[row * D + h * dh + j] += gv_j;
                            }
                    }
                }
        };
    return o;
}

Var Graph::sum(Var x) {
    double acc = 0;
    for (double v : x->val.v) acc += v;
    Var o = make(Tensor::scalar(acc), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += o->grad[0];
        };
    return o;
}

Var Graph::sumsq(Var x) {
    double acc = 0;
    for (double v : x->val.v) acc += v * v;
    Var o = make(Tensor::scalar(acc), x->requires_grad);
    if (o->requires_grad)
        o->back = [x, o] {
            for (std::size_t i = 0; i < x->grad.numel(); ++i)
                x->grad[i] += 2.0 * x->val[i] * o->grad[0];
        };
    return o;
}

Var Graph::dot(Var a, Var b) {
    check(a->val.numel() == b->val.numel(), "dot: size mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < a->val.numel(); ++i) acc += a->val[i] * b->val[i];
    Var o = make(Tensor::scalar(acc), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.numel(); ++i)
                    a->grad[i] += o->grad[0] * b->val[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->grad.numel(); ++i)
                    b->grad[i] += o->grad[0] * a->val[i];
        };
    return o;
}

Var Graph::cosine(Var a, Var b, double eps) {
    check(a->val.numel() == b->val.numel(), "cosine: size mismatch");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a->val.numel(); ++i) {
        ab += a->val[i] * b->val[i];
        aa += a->val[i] * a->val[i];
        bb += b->val[i] * b->val[i];
    }
    const double na = std::sqrt(aa + eps), nb = std::sqrt(bb + eps);
    const double s = ab / (na * nb);
    Var o = make(Tensor::scalar(s), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o, na, nb, s] {
            const double g = o->grad[0];
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->grad.numel(); ++i)
                    a->grad[i] += g * (b->val[i] / (na * nb) - s * a->val[i] / (na * na));
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->grad.numel(); ++i)
                    b->grad[i] += g * (a->val[i] / (na * nb) - s * b->val[i] / (nb * nb));
        };
    return o;
}

Var Graph::s_mul(Var a, Var b) {
    check(a->val.numel() == 1 && b->val.numel() == 1, "s_mul: scalars only");
    Var o = make(Tensor::scalar(a->val[0] * b->val[0]), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad) a->grad[0] += o->grad[0] * b->val[0];
            if (b->requires_grad) b->grad[0] += o->grad[0] * a->val[0];
        };
    return o;
}

Var Graph::s_div(Var a, Var b) {
    check(a->val.numel() == 1 && b->val.numel() == 1, "s_div: scalars only");
    Var o = make(Tensor::scalar(a->val[0] / b->val[0]), a->requires_grad || b->requires_grad);
    if (o->requires_grad)
        o->back = [a, b, o] {
            if (a->requires_grad) a->grad[0] += o->grad[0] / b->val[0];
            if (b->requires_grad)
                b->grad[0] -= o->grad[0] * a->val[0] / (b->val[0] * b->val[0]);
        };
    return o;
}

Var Graph::s_exp(Var a) {
    check(a->val.numel() == 1, "s_exp: scalar only");
    Var o = make(Tensor::scalar(std::exp(a->val[0])), a->requires_grad);
    if (o->requires_grad)
        o->back = [a, o] { a->grad[0] += o->grad[0] * o->val[0]; };
    return o;
}

Var Graph::s_log1p(Var a) {
    check(a->val.numel() == 1, "s_log1p: scalar only");
    Var o = make(Tensor::scalar(std::log1p(a->val[0])), a->requires_grad);
    if (o->requires_grad)
        o->back = [a, o] { a->grad[0] += o->grad[0] / (1.0 + a->val[0]); };
    return o;
}

Var Graph::logsumexp(const std::vector<Var>& xs) {
    check(!xs.empty(), "logsumexp: empty");
    double mx = -1e300;
    bool rg = false;
    for (Var x : xs) {
        check(x->val.numel() == 1, "logsumexp: scalars only");
        mx = std::max(mx, x->val[0]);
        rg = rg || x->requires_grad;
    }
    double z = 0;
    for (Var x : xs) z += std::exp(x->val[0] - mx);
    Var o = make(Tensor::scalar(mx + std::log(z)), rg);
    if (o->requires_grad) {
        std::vector<Var> parents = xs;
        o->back = [parents, o, mx, z] {
            for (Var x : parents)
                if (x->requires_grad)
                    x->grad[0] += o->grad[0] * std::exp(x->val[0] - mx) / z;
        };
    }
    return o;
}

Var Graph::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    check(logits->val.rank() == 2 && logits->val.dim(0) == labels.size(),
          "softmax_cross_entropy: bad shapes");
    const std::size_t n = logits->val.dim(0), c = logits->val.dim(1);
    auto probs = std::make_shared<Tensor>(logits->val);
    softmax_rows_inplace(*probs);
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i)
        loss -= std::log(std::max(probs->v[i * c + static_cast<std::size_t>(labels[i])], 1e-300));
    loss /= static_cast<double>(n);
    Var o = make(Tensor::scalar(loss), logits->requires_grad);
    if (o->requires_grad) {
        std::vector<int> lab = labels;
        o->back = [logits, o, probs, lab, n, c] {
            const double g = o->grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    double p = probs->v[i * c + j];
                    if (static_cast<int>(j) == lab[i]) p -= 1.0;
                    logits->grad.v[i * c + j] += g * p;
                }
        };
    }
    return o;
}

void Graph::backward(Var loss) {
    check(loss->val.numel() == 1, "backward: loss must be scalar");
    check(loss->requires_grad, "backward: loss does not require grad");
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if ((*it)->requires_grad && (*it)->back) (*it)->back();
}

void softmax_rows_inplace(Tensor& logits) {
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits.v[i * c + j]);
        double z = 0;
        for (std::size_t j = 0; j < c; ++j) {
            logits.v[i * c + j] = std::exp(logits.v[i * c + j] - mx);
            z += logits.v[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) logits.v[i * c + j] /= z;
    }
}

}  // namespace mdjpt::nn
