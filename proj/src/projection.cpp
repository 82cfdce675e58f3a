#include "invercl/projection.hpp"

#include <cmath>
#include <stdexcept>

namespace invercl {

std::vector<double> RotationMap::apply(const std::vector<double>& x) const {
    const std::size_t d = matrix.rows();
    if (x.size() != d) throw std::invalid_argument("RotationMap: dimension mismatch");
    std::vector<double> y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double* row = matrix.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) y[i] += row[j] * x[j];
    }
    return y;
}

RotationMap rotation_between(const std::vector<double>& u, const std::vector<double>& v) {
    const std::size_t d = u.size();
    if (v.size() != d) throw std::invalid_argument("rotation_between: dimension mismatch");
    if (std::abs(norm2(u) - 1.0) > 1e-6 || std::abs(norm2(v) - 1.0) > 1e-6)
        throw std::invalid_argument("rotation_between: inputs must be unit vectors");

    const double c = std::clamp(dot(u, v), -1.0, 1.0);
    if (std::acos(c) > M_PI - 1e-6)
        throw std::domain_error("rotation_between: antipodal vectors, rotation plane ambiguous");

    RotationMap rot;
    rot.matrix = Tensor::matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) rot.matrix.at(i, i) = 1.0;

    // Gram-Schmidt v against u; if v is (numerically) parallel to u the
    // identity already satisfies the contract.
    std::vector<double> w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = v[i] - c * u[i];
    const double wn = norm2(w);
    if (wn < 1e-12) return rot;
    for (double& x : w) x /= wn;

    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    // R = I + sin(t) (w u^T - u w^T) + (cos(t) - 1)(u u^T + w w^T)
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            rot.matrix.at(i, j) += s * (w[i] * u[j] - u[i] * w[j]) +
                                   (c - 1.0) * (u[i] * u[j] + w[i] * w[j]);
    return rot;
}

std::vector<double> pseudo_feature(const RotationMap& rot, const std::vector<double>& source_feature,
                                   const SemanticAnchor& anchor_d, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("pseudo_feature: alpha must be in [0, 1]");
    std::vector<double> rotated = rot.apply(source_feature);
    if (anchor_d.vector.size() != rotated.size())
        throw std::invalid_argument("pseudo_feature: anchor dimension mismatch");
    std::vector<double> blend(rotated.size());
    for (std::size_t i = 0; i < blend.size(); ++i)
        blend[i] = (1.0 - alpha) * rotated[i] + alpha * anchor_d.vector[i];
    const double n = norm2(blend);
    if (n < 1e-12) throw std::domain_error("pseudo_feature: degenerate zero-norm blend");
    for (double& x : blend) x /= n;
    return blend;
}

}  // namespace invercl
