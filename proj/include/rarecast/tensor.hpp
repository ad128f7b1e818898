#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "rarecast/errors.hpp"

namespace rarecast {

// Dense row-major float64 tensor. The numeric kernels work on raw pointers;
// this type mostly carries shape metadata for checkpoints and optimizers.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        std::size_t n = 1;
        for (auto d : s) n *= d;
        t.shape = std::move(s);
        t.v.assign(n, 0.0);
        return t;
    }

    std::size_t size() const { return v.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    double& at2(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }

    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return v[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return v[(i * shape[1] + j) * shape[2] + k];
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    void check_same_shape(const Tensor& o, const char* what) const {
        if (shape != o.shape)
            throw ShapeMismatch(std::string(what) + ": tensor shapes differ");
    }
};

}  // namespace rarecast
