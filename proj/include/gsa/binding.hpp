#pragma once

#include "gsa/common.hpp"

namespace gsa {

// Gaussian -> canonical-mesh attachment: nearest ("agent") vertex plus the
// k nearest vertices, all measured against the canonical posed vertices.
struct Binding {
    Eigen::VectorXi nearest;  // N
    MatXi neighbors;          // N x k, column 0 == nearest
    double sigma = 0.1;

    Eigen::Index size() const { return nearest.size(); }
    int k() const { return static_cast<int>(neighbors.cols()); }
};

// Exact k-nearest-neighbours by Euclidean distance, ties broken by lower
// vertex index. Throws if k > number of vertices.
Binding bind(const MatX3& gaussian_positions, const MatX3& canonical_vertices, int k = 3);

}  // namespace gsa
