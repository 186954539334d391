#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

#include "mdjpt/error.hpp"

namespace mdjpt::nn {

// Dense row-major tensor of doubles, rank 0..3.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    static Tensor scalar(double value) {
        Tensor t({1});
        t.v[0] = value;
        return t;
    }

    static Tensor from(std::vector<std::size_t> s, std::vector<double> data) {
        Tensor t;
        t.shape = std::move(s);
        if (data.size() != numel_of(t.shape))
            throw Error("DimensionMismatch", "tensor data size does not match shape");
        t.v = std::move(data);
        return t;
    }

    std::size_t numel() const { return v.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    double& at(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return v[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return v[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill_uniform(std::mt19937_64& rng, double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        for (auto& x : v) x = d(rng);
    }

    void fill_normal(std::mt19937_64& rng, double mean, double sd) {
        std::normal_distribution<double> d(mean, sd);
        for (auto& x : v) x = d(rng);
    }
};

}  // namespace mdjpt::nn
