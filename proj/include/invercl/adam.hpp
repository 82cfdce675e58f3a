#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace invercl {

// Adaptive-moment optimizer state for one flat variable.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0, double lr_ = 1e-3)
        : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

inline void adam_step(std::vector<double>& var, const std::vector<double>& grad, AdamState& st) {
    if (var.size() != grad.size() || var.size() != st.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    st.step_count += 1;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
    for (std::size_t i = 0; i < var.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mh = st.m[i] / c1;
        const double vh = st.v[i] / c2;
        var[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
    }
}

}  // namespace invercl
