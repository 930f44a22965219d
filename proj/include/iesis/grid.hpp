#pragma once

#include "iesis/common.hpp"

namespace iesis {

// Uniform cell-centered grid on the unit square. Fields live at cell
// centers; index(i, j) = i*ny + j (x-major, y fastest).
struct Grid2D {
    int nx = 0;
    int ny = 0;

    Grid2D() = default;
    Grid2D(int nx_, int ny_) : nx(nx_), ny(ny_) {
        require(nx >= 2 && ny >= 2, "Grid2D requires nx >= 2 and ny >= 2");
    }

    int n_cells() const { return nx * ny; }
    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    int index(int i, int j) const { return i * ny + j; }
    double xc(int i) const { return (i + 0.5) * hx(); }
    double yc(int j) const { return (j + 0.5) * hy(); }
};

// Solution of a forward solve: one column per stored time level. A steady
// solve stores a single column with dt == 0.
struct StateField {
    Grid2D grid;
    double dt = 0.0;
    MatrixXd states; // n_cells x n_levels

    Eigen::Index n_levels() const { return states.cols(); }
    double final_time() const { return dt * static_cast<double>(states.cols() - 1); }
    VectorXd final_state() const { return states.col(states.cols() - 1); }
};

} // namespace iesis
