#include "invercl/tensor.hpp"

#include <cmath>

namespace invercl {

std::vector<double> tensor_row(const Tensor& t, std::size_t r) {
    const std::size_t d = t.cols();
    return std::vector<double>(t.data.begin() + r * d, t.data.begin() + (r + 1) * d);
}

bool tensor_all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void tensor_require_finite(const Tensor& t, const std::string& what) {
    if (!tensor_all_finite(t))
        throw std::runtime_error("non-finite values in " + what);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> normalized(const std::vector<double>& a) {
    const double n = norm2(a);
    if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] / n;
    return r;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine of zero vector");
    return dot(a, b) / (na * nb);
}

}  // namespace invercl
