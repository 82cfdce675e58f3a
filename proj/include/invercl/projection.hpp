#pragma once

#include <cstddef>
#include <vector>

#include "invercl/tensor.hpp"

namespace invercl {

// Per-class unit vector standing in for a text-encoder class embedding.
struct SemanticAnchor {
    int class_id = -1;
    std::vector<double> vector;  // unit norm
};

// Orthogonal matrix carrying class c's anchor onto class d's, acting as
// identity on the orthogonal complement of span{u, v}.
struct RotationMap {
    Tensor matrix;  // (d, d)
    int source_class = -1;
    int target_class = -1;
    double alpha = 0.1;

    std::vector<double> apply(const std::vector<double>& x) const;
};

// Minimal 2-plane rotation with R*u = v. Throws when u is within 1e-6 of
// -v (the rotation plane is ambiguous).
RotationMap rotation_between(const std::vector<double>& u, const std::vector<double>& v);

// Pseudo feature of the target class: rotate, blend toward the anchor and
// renormalize: ((1-alpha) R o_c + alpha anchor) / || . ||.
std::vector<double> pseudo_feature(const RotationMap& rot, const std::vector<double>& source_feature,
                                   const SemanticAnchor& anchor_d, double alpha);

}  // namespace invercl
