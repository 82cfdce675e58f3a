#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace invercl {

// Row-major dense tensor of doubles. Batches are stored as (N, dim).
// An optional 2D grid annotation marks per-sample spatial layout for the
// total-variation loss; vectors without it are treated as non-spatial.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::size_t grid_rows = 0;  // 0 = no grid annotation
    std::size_t grid_cols = 0;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(numel_of(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    const double* row_ptr(std::size_t r) const { return data.data() + r * cols(); }
    double* row_ptr(std::size_t r) { return data.data() + r * cols(); }

    static Tensor matrix(std::size_t n, std::size_t d, double fill = 0.0) {
        return Tensor({n, d}, fill);
    }
    static Tensor vec(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }
    // One-row batch from a flat vector.
    static Tensor batch1(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({1, n}, std::move(d));
    }
};

std::vector<double> tensor_row(const Tensor& t, std::size_t r);
bool tensor_all_finite(const Tensor& t);
void tensor_require_finite(const Tensor& t, const std::string& what);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
std::vector<double> normalized(const std::vector<double>& a);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace invercl
