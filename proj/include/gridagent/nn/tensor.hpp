#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace gridagent::nn {

// Dense row-major double tensor. All model math runs in 64-bit.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static int count(const std::vector<int>& s) {
        int n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(count(t.shape), 0.0);
        return t;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int dim(int i) const { return shape[i]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace gridagent::nn
