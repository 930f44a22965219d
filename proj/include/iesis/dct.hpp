#pragma once

#include <utility>
#include <vector>

#include "iesis/common.hpp"

namespace iesis {

enum class DctOrdering { zigzag, row_major };

// Truncated orthonormal 2D cosine basis for an nx x ny field (x-major
// vectorization, matching Grid2D::index). Columns are materialized once and
// immutable afterwards.
struct DctBasis {
    int nx = 0;
    int ny = 0;
    DctOrdering ordering = DctOrdering::zigzag;
    std::vector<std::pair<int, int>> retained; // frequency pairs (i, j), in order
    MatrixXd columns;                          // n_m x n_c

    int n_m() const { return nx * ny; }
    Eigen::Index n_c() const { return columns.cols(); }

    // basis with a subset of this basis's columns (positions into `retained`)
    DctBasis subset(const std::vector<int> &positions) const;
};

DctBasis build_basis(int nx, int ny, int n_c, DctOrdering ordering = DctOrdering::zigzag);

// A = Phi * theta
VectorXd synthesize(const VectorXd &theta, const DctBasis &basis);

// full forward transform; element r = i*ny + j holds the (i,j) coefficient
VectorXd analyze(const VectorXd &field, int nx, int ny);

// Indices (positions into theta_mean) of the largest-magnitude components
// whose cumulative |.| mass reaches at least `alpha` of the total. Ties keep
// ascending original order; an all-zero input retains every index.
std::vector<int> reduce_dimension(const VectorXd &theta_mean, double alpha);

} // namespace iesis
