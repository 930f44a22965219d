#include "iesis/forward.hpp"

#include <cmath>

namespace iesis {

namespace {

constexpr double kResidualTol = 1e-10;

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

void check_residual(const Eigen::SparseMatrix<double> &m, const VectorXd &u, const VectorXd &b,
                    const char *what) {
    double scale = std::max(b.norm(), 1.0);
    double res = (m * u - b).norm();
    if (!u.allFinite() || res > kResidualTol * scale)
        throw SolverError(std::string(what) + ": residual " + std::to_string(res / scale) +
                          " above tolerance");
}

} // namespace

VectorXd gaussian_source(const Eigen::Vector2d &theta, double strength, double iota,
                         const Grid2D &grid) {
    require(iota > 0.0, "gaussian_source requires iota > 0");
    require(std::isfinite(theta[0]) && std::isfinite(theta[1]) && std::isfinite(strength),
            "gaussian_source requires finite inputs");
    const double peak = strength / (M_PI * iota);
    const double inv2i2 = 1.0 / (2.0 * iota * iota);
    VectorXd f(grid.n_cells());
    for (int i = 0; i < grid.nx; ++i) {
        double dx = theta[0] - grid.xc(i);
        for (int j = 0; j < grid.ny; ++j) {
            double dy = theta[1] - grid.yc(j);
            f[grid.index(i, j)] = peak * std::exp(-(dx * dx + dy * dy) * inv2i2);
        }
    }
    return f;
}

VectorXd source_field(const SourceSpec &source, const Grid2D &grid) {
    if (source.kind == SourceSpec::Kind::constant)
        return VectorXd::Constant(grid.n_cells(), source.constant_value);
    require(source.strength > 0.0, "gaussian source requires strength > 0");
    return gaussian_source(source.location, source.strength, source.width, grid);
}

VectorXd arctan_map(const VectorXd &q) {
    require(q.allFinite(), "arctan_map requires finite input");
    return (0.5 + (1.0 / M_PI) * q.array().atan()).matrix();
}

VectorXd arctan_map_inverse(const VectorXd &theta) {
    VectorXd q(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        require(theta[i] > 0.0 && theta[i] < 1.0,
                "arctan_map_inverse is defined on the open interval (0,1)");
        q[i] = std::tan(M_PI * (theta[i] - 0.5));
    }
    return q;
}

FractureParams FractureParams::from_latent(const Eigen::Vector4d &q) {
    VectorXd t = arctan_map(q);
    return FractureParams{t[0], t[1], t[2], t[3]};
}

PermeabilityField embed_fracture(const FractureSpec &spec, const PermeabilityField &background,
                                 const Grid2D &grid) {
    require(background.values.size() == grid.n_cells(), "background size mismatch");
    PermeabilityField out = background;
    if (spec.length <= 0.0)
        return out;
    double y_lo = std::max(0.0, spec.y0 - 0.5 * spec.length);
    double y_hi = std::min(1.0, spec.y0 + 0.5 * spec.length);
    if (y_hi <= y_lo || spec.x0 < 0.0 || spec.x0 > 1.0)
        return out;
    int col = std::min(grid.nx - 1, static_cast<int>(std::floor(spec.x0 * grid.nx)));
    const double hy = grid.hy();
    const double tol = 1e-12 * hy;
    for (int j = 0; j < grid.ny; ++j) {
        double cell_lo = j * hy;
        double cell_hi = (j + 1) * hy;
        double overlap = std::min(cell_hi, y_hi) - std::max(cell_lo, y_lo);
        if (overlap > tol)
            out.values[grid.index(col, j)] = spec.a_frac;
    }
    return out;
}

SteadyFlowOperator::SteadyFlowOperator(const PermeabilityField &perm, const Grid2D &grid,
                                       BoundaryConditions bc)
    : grid_(grid), bc_(bc), perm_(perm.values) {
    require(perm_.size() == grid_.n_cells(), "permeability size mismatch");
    require(perm_.allFinite(), "permeability must be finite");

    const int nx = grid_.nx, ny = grid_.ny;
    const double hx = grid_.hx(), hy = grid_.hy();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(5) * grid_.n_cells());
    VectorXd diag = VectorXd::Zero(grid_.n_cells());
    rhs_bc_ = VectorXd::Zero(grid_.n_cells());

    auto a = [&](int i, int j) { return perm_[grid_.index(i, j)]; };

    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            int idx = grid_.index(i, j);
            // x faces
            if (i == 0) {
                double t = 2.0 * a(i, j) * hy / hx;
                diag[idx] += t;
                rhs_bc_[idx] += t * bc_.left;
            }
            if (i == nx - 1) {
                double t = 2.0 * a(i, j) * hy / hx;
                diag[idx] += t;
                rhs_bc_[idx] += t * bc_.right;
            }
            if (i + 1 < nx) {
                double t = harmonic(a(i, j), a(i + 1, j)) * hy / hx;
                int nb = grid_.index(i + 1, j);
                diag[idx] += t;
                diag[nb] += t;
                trips.emplace_back(idx, nb, -t);
                trips.emplace_back(nb, idx, -t);
            }
            // y faces; boundaries are no-flow
            if (j + 1 < ny) {
                double t = harmonic(a(i, j), a(i, j + 1)) * hx / hy;
                int nb = grid_.index(i, j + 1);
                diag[idx] += t;
                diag[nb] += t;
                trips.emplace_back(idx, nb, -t);
                trips.emplace_back(nb, idx, -t);
            }
        }
    }
    for (int k = 0; k < grid_.n_cells(); ++k)
        trips.emplace_back(k, k, diag[k]);

    matrix_.resize(grid_.n_cells(), grid_.n_cells());
    matrix_.setFromTriplets(trips.begin(), trips.end());
    matrix_.makeCompressed();

    steady_llt_.compute(matrix_);
    if (steady_llt_.info() != Eigen::Success)
        throw SolverError("steady flow operator is not positive definite");
}

VectorXd SteadyFlowOperator::solve(const VectorXd &source_cells) const {
    require(source_cells.size() == grid_.n_cells(), "source size mismatch");
    require(source_cells.allFinite(), "source must be finite");
    const double vol = grid_.hx() * grid_.hy();
    VectorXd b = vol * source_cells + rhs_bc_;
    VectorXd u = steady_llt_.solve(b);
    check_residual(matrix_, u, b, "steady solve");
    return u;
}

void SteadyFlowOperator::factor_shifted(double sigma) const {
    if (shifted_sigma_ == sigma)
        return;
    const double vol = grid_.hx() * grid_.hy();
    Eigen::SparseMatrix<double> shifted = matrix_;
    Eigen::SparseMatrix<double> eye(grid_.n_cells(), grid_.n_cells());
    eye.setIdentity();
    shifted += (sigma * vol) * eye;
    shifted_llt_.compute(shifted);
    if (shifted_llt_.info() != Eigen::Success)
        throw SolverError("time-step operator factorization failed");
    shifted_sigma_ = sigma;
}

VectorXd SteadyFlowOperator::solve_shifted(double sigma, const VectorXd &rhs_cells,
                                           const VectorXd &accum) const {
    factor_shifted(sigma);
    const double vol = grid_.hx() * grid_.hy();
    VectorXd b = vol * rhs_cells + rhs_bc_ + (sigma * vol) * accum;
    VectorXd u = shifted_llt_.solve(b);
    if (!u.allFinite())
        throw SolverError("time step produced non-finite state");
    return u;
}

double SteadyFlowOperator::line_flux(const VectorXd &u, int line) const {
    require(line >= 0 && line <= grid_.nx, "line index out of range");
    const double hx = grid_.hx(), hy = grid_.hy();
    double flux = 0.0;
    for (int j = 0; j < grid_.ny; ++j) {
        if (line == 0) {
            double t = 2.0 * perm_[grid_.index(0, j)] * hy / hx;
            flux += t * (bc_.left - u[grid_.index(0, j)]);
        } else if (line == grid_.nx) {
            double t = 2.0 * perm_[grid_.index(grid_.nx - 1, j)] * hy / hx;
            flux += t * (u[grid_.index(grid_.nx - 1, j)] - bc_.right);
        } else {
            double t = harmonic(perm_[grid_.index(line - 1, j)], perm_[grid_.index(line, j)]) *
                       hy / hx;
            flux += t * (u[grid_.index(line - 1, j)] - u[grid_.index(line, j)]);
        }
    }
    return flux;
}

StateField solve_steady_flow(const PermeabilityField &perm, const SourceSpec &source,
                             const Grid2D &grid, BoundaryConditions bc) {
    SteadyFlowOperator op(perm, grid, bc);
    StateField out;
    out.grid = grid;
    out.dt = 0.0;
    out.states.resize(grid.n_cells(), 1);
    out.states.col(0) = op.solve(source_field(source, grid));
    return out;
}

namespace {

int step_count(double dt, double T) {
    require(dt > 0.0, "dt must be positive");
    require(T >= dt, "horizon must be at least one step");
    return static_cast<int>(std::ceil(T / dt - 1e-9));
}

} // namespace

StateField solve_unsteady_flow(const PermeabilityField &perm, const TimeSource &source,
                               const Grid2D &grid, double dt, double T, const VectorXd &u0,
                               BoundaryConditions bc) {
    require(u0.size() == grid.n_cells(), "initial state size mismatch");
    require(u0.allFinite(), "initial state must be finite");
    SteadyFlowOperator op(perm, grid, bc);
    const int n_steps = step_count(dt, T);

    StateField out;
    out.grid = grid;
    out.dt = dt;
    out.states.resize(grid.n_cells(), n_steps + 1);
    out.states.col(0) = u0;
    const double sigma = 1.0 / dt;
    for (int n = 1; n <= n_steps; ++n) {
        VectorXd f = source(n * dt);
        out.states.col(n) = op.solve_shifted(sigma, f, out.states.col(n - 1));
    }
    return out;
}

StateField solve_unsteady_flow(const PermeabilityField &perm, const SourceSpec &source,
                               const Grid2D &grid, double dt, double T, const VectorXd &u0,
                               BoundaryConditions bc) {
    VectorXd f = source_field(source, grid);
    return solve_unsteady_flow(
        perm, [&f](double) { return f; }, grid, dt, T, u0, bc);
}

StateField solve_fractional_diffusion(const PermeabilityField &perm, double alpha,
                                      const TimeSource &source, const Grid2D &grid, double dt,
                                      double T, const VectorXd &u0, BoundaryConditions bc) {
    require(alpha > 0.0 && alpha < 1.0, "fractional order must lie in (0,1)");
    require(u0.size() == grid.n_cells(), "initial state size mismatch");
    require(u0.allFinite(), "initial state must be finite");
    SteadyFlowOperator op(perm, grid, bc);
    const int n_steps = step_count(dt, T);

    // L1 scheme: c_m = (m+1)^(1-a) - m^(1-a), beta0 = dt^-a / Gamma(2-a).
    std::vector<double> c(n_steps);
    for (int m = 0; m < n_steps; ++m)
        c[m] = std::pow(m + 1.0, 1.0 - alpha) - std::pow(static_cast<double>(m), 1.0 - alpha);
    const double beta0 = std::pow(dt, -alpha) / std::tgamma(2.0 - alpha);

    StateField out;
    out.grid = grid;
    out.dt = dt;
    out.states.resize(grid.n_cells(), n_steps + 1);
    out.states.col(0) = u0;
    for (int n = 1; n <= n_steps; ++n) {
        // history = sum_{k=1}^{n-1} (c_{n-k-1} - c_{n-k}) u^k + c_{n-1} u^0
        VectorXd hist = c[n - 1] * out.states.col(0);
        for (int k = 1; k < n; ++k)
            hist += (c[n - k - 1] - c[n - k]) * out.states.col(k);
        VectorXd f = source(n * dt);
        out.states.col(n) = op.solve_shifted(beta0, f, hist);
    }
    return out;
}

StateField solve_fractional_diffusion(const PermeabilityField &perm, double alpha,
                                      const SourceSpec &source, const Grid2D &grid, double dt,
                                      double T, BoundaryConditions bc) {
    VectorXd f = source_field(source, grid);
    VectorXd u0 = VectorXd::Zero(grid.n_cells());
    return solve_fractional_diffusion(
        perm, alpha, [&f](double) { return f; }, grid, dt, T, u0, bc);
}

namespace {

double interp_cell_centers(const Grid2D &grid, const VectorXd &u, double x, double y) {
    const double hx = grid.hx(), hy = grid.hy();
    double sx = (x - 0.5 * hx) / hx;
    double sy = (y - 0.5 * hy) / hy;
    int ix = std::clamp(static_cast<int>(std::floor(sx)), 0, grid.nx - 2);
    int iy = std::clamp(static_cast<int>(std::floor(sy)), 0, grid.ny - 2);
    double tx = std::clamp(sx - ix, 0.0, 1.0);
    double ty = std::clamp(sy - iy, 0.0, 1.0);
    double v00 = u[grid.index(ix, iy)];
    double v10 = u[grid.index(ix + 1, iy)];
    double v01 = u[grid.index(ix, iy + 1)];
    double v11 = u[grid.index(ix + 1, iy + 1)];
    return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 +
           tx * ty * v11;
}

} // namespace

VectorXd observe(const StateField &state, const std::vector<Eigen::Vector2d> &locations,
                 double time) {
    VectorXd snapshot;
    if (state.states.cols() == 1 || state.dt == 0.0) {
        snapshot = state.states.col(0);
    } else {
        double t_max = state.final_time();
        require(time >= -1e-12 && time <= t_max + 1e-9 * std::max(1.0, t_max),
                "observation time outside trajectory");
        double s = std::clamp(time / state.dt, 0.0, static_cast<double>(state.states.cols() - 1));
        int k = std::min(static_cast<int>(std::floor(s)),
                         static_cast<int>(state.states.cols()) - 2);
        double w = s - k;
        snapshot = (1.0 - w) * state.states.col(k) + w * state.states.col(k + 1);
    }
    VectorXd d(static_cast<Eigen::Index>(locations.size()));
    for (size_t m = 0; m < locations.size(); ++m) {
        const auto &p = locations[m];
        require(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0,
                "sensor location outside the unit square");
        d[static_cast<Eigen::Index>(m)] = interp_cell_centers(state.grid, snapshot, p[0], p[1]);
    }
    return d;
}

std::vector<Eigen::Vector2d> sensor_grid(int count_x, int count_y, double x_lo, double x_hi,
                                         double y_lo, double y_hi) {
    require(count_x >= 1 && count_y >= 1, "sensor counts must be positive");
    std::vector<Eigen::Vector2d> out;
    out.reserve(static_cast<size_t>(count_x) * count_y);
    for (int i = 0; i < count_x; ++i) {
        double x = count_x == 1 ? 0.5 * (x_lo + x_hi)
                                : x_lo + (x_hi - x_lo) * i / (count_x - 1.0);
        for (int j = 0; j < count_y; ++j) {
            double y = count_y == 1 ? 0.5 * (y_lo + y_hi)
                                    : y_lo + (y_hi - y_lo) * j / (count_y - 1.0);
            out.emplace_back(x, y);
        }
    }
    return out;
}

} // namespace iesis
