#pragma once

#include <Eigen/SparseCholesky>
#include <functional>
#include <optional>
#include <vector>

#include "iesis/grid.hpp"

namespace iesis {

// Dirichlet values on the x-boundaries; the y-boundaries are always no-flow.
struct BoundaryConditions {
    double left = 1.0;
    double right = 0.0;
};

struct PermeabilityField {
    VectorXd values; // per cell, strictly positive
};

struct SourceSpec {
    enum class Kind { gaussian_bump, constant };
    Kind kind = Kind::constant;
    double strength = 1.0;       // s
    double width = 0.05;         // iota
    Eigen::Vector2d location{0.5, 0.5};
    double constant_value = 0.0; // f for Kind::constant
};

// f(x) = s/(pi*iota) * exp(-|theta - x|^2 / (2 iota^2)) at cell centers.
VectorXd gaussian_source(const Eigen::Vector2d &theta, double strength, double iota,
                         const Grid2D &grid);

VectorXd source_field(const SourceSpec &source, const Grid2D &grid);

// componentwise theta = 1/2 + arctan(q)/pi, mapping R^n onto (0,1)^n
VectorXd arctan_map(const VectorXd &q);
VectorXd arctan_map_inverse(const VectorXd &theta);

struct FractureSpec {
    double x0 = 0.0;     // midpoint x
    double y0 = 0.0;     // midpoint y
    double length = 0.0; // segment extent along y
    double a_frac = 1.0; // permeability assigned to intersected cells
};

// Latent 4-vector -> (alpha, x0, y0, length) through the arctan map.
struct FractureParams {
    double alpha = 0.5;
    double x0 = 0.5;
    double y0 = 0.5;
    double length = 0.5;

    static FractureParams from_latent(const Eigen::Vector4d &q);
    FractureSpec spec(double a_frac) const { return FractureSpec{x0, y0, length, a_frac}; }
};

// Assigns a_frac to every cell of the column containing x0 whose y-extent
// overlaps [y0 - L/2, y0 + L/2] (clipped to the unit square).
PermeabilityField embed_fracture(const FractureSpec &spec, const PermeabilityField &background,
                                 const Grid2D &grid);

// -div(a grad u) discretized with cell-centered finite differences and
// harmonic face averaging. The factorization is cached, so repeated solves
// with different sources reuse it.
class SteadyFlowOperator {
  public:
    SteadyFlowOperator(const PermeabilityField &perm, const Grid2D &grid,
                       BoundaryConditions bc = {});

    // solves A u = V*f + b_bc for cell values u, f given at cell centers
    VectorXd solve(const VectorXd &source_cells) const;

    // u such that (sigma*V*I + A) u = V*rhs_cells + b_bc + sigma*V*accum;
    // used by the time steppers (sigma = 1/dt or the L1 prefactor)
    VectorXd solve_shifted(double sigma, const VectorXd &rhs_cells,
                           const VectorXd &accum) const;

    // net discrete flux in +x across vertical line i in [0, nx]
    double line_flux(const VectorXd &u, int line) const;

    const Grid2D &grid() const { return grid_; }

  private:
    void factor_shifted(double sigma) const;

    Grid2D grid_;
    BoundaryConditions bc_;
    VectorXd perm_;
    Eigen::SparseMatrix<double> matrix_; // flux part only
    VectorXd rhs_bc_;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> steady_llt_;
    mutable Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> shifted_llt_;
    mutable double shifted_sigma_ = -1.0;
};

StateField solve_steady_flow(const PermeabilityField &perm, const SourceSpec &source,
                             const Grid2D &grid, BoundaryConditions bc = {});

using TimeSource = std::function<VectorXd(double t)>;

// implicit Euler march to T; stores the full trajectory
StateField solve_unsteady_flow(const PermeabilityField &perm, const TimeSource &source,
                               const Grid2D &grid, double dt, double T, const VectorXd &u0,
                               BoundaryConditions bc = {});
StateField solve_unsteady_flow(const PermeabilityField &perm, const SourceSpec &source,
                               const Grid2D &grid, double dt, double T, const VectorXd &u0,
                               BoundaryConditions bc = {});

// Caputo derivative of order alpha in (0,1), L1 time discretization
StateField solve_fractional_diffusion(const PermeabilityField &perm, double alpha,
                                      const TimeSource &source, const Grid2D &grid, double dt,
                                      double T, const VectorXd &u0, BoundaryConditions bc = {});
StateField solve_fractional_diffusion(const PermeabilityField &perm, double alpha,
                                      const SourceSpec &source, const Grid2D &grid, double dt,
                                      double T, BoundaryConditions bc = {});

// Bilinear interpolation of cell-center values at sensor locations; for
// trajectories the snapshot is interpolated linearly in time.
VectorXd observe(const StateField &state, const std::vector<Eigen::Vector2d> &locations,
                 double time);

// uniform sensor lattice, x-major ordering (all y for the first x, ...)
std::vector<Eigen::Vector2d> sensor_grid(int count_x, int count_y, double x_lo, double x_hi,
                                         double y_lo, double y_hi);

} // namespace iesis
