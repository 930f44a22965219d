#include <doctest.h>

#include <cmath>

#include "iesis/forward.hpp"
#include "iesis/rng.hpp"

using namespace iesis;

namespace {

PermeabilityField uniform_perm(const Grid2D &grid, double value = 1.0) {
    return PermeabilityField{VectorXd::Constant(grid.n_cells(), value)};
}

// independent dense assembly of the same discrete operator, used as the
// factorization oracle for the sparse path
void dense_system(const PermeabilityField &perm, const Grid2D &grid, BoundaryConditions bc,
                  const VectorXd &source, MatrixXd &a_out, VectorXd &b_out) {
    const int n = grid.n_cells();
    const double hx = grid.hx(), hy = grid.hy();
    a_out = MatrixXd::Zero(n, n);
    b_out = VectorXd::Zero(n);
    auto harm = [](double p, double q) { return 2.0 * p * q / (p + q); };
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            int idx = grid.index(i, j);
            double a_ij = perm.values[idx];
            b_out[idx] += source[idx] * hx * hy;
            if (i == 0) {
                double t = 2.0 * a_ij * hy / hx;
                a_out(idx, idx) += t;
                b_out[idx] += t * bc.left;
            } else {
                double t = harm(a_ij, perm.values[grid.index(i - 1, j)]) * hy / hx;
                a_out(idx, idx) += t;
                a_out(idx, grid.index(i - 1, j)) -= t;
            }
            if (i == grid.nx - 1) {
                double t = 2.0 * a_ij * hy / hx;
                a_out(idx, idx) += t;
                b_out[idx] += t * bc.right;
            } else {
                double t = harm(a_ij, perm.values[grid.index(i + 1, j)]) * hy / hx;
                a_out(idx, idx) += t;
                a_out(idx, grid.index(i + 1, j)) -= t;
            }
            if (j > 0) {
                double t = harm(a_ij, perm.values[grid.index(i, j - 1)]) * hx / hy;
                a_out(idx, idx) += t;
                a_out(idx, grid.index(i, j - 1)) -= t;
            }
            if (j < grid.ny - 1) {
                double t = harm(a_ij, perm.values[grid.index(i, j + 1)]) * hx / hy;
                a_out(idx, idx) += t;
                a_out(idx, grid.index(i, j + 1)) -= t;
            }
        }
    }
}

PermeabilityField log_linear_perm(const Grid2D &grid) {
    VectorXd a(grid.n_cells());
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j)
            a[grid.index(i, j)] = std::exp(1.0 + 0.5 * grid.xc(i) + grid.yc(j));
    return PermeabilityField{a};
}

} // namespace

TEST_CASE("steady solve reproduces the harmonic linear profile") {
    Grid2D grid(16, 12);
    SourceSpec none;
    StateField u = solve_steady_flow(uniform_perm(grid), none, grid);
    double max_err = 0.0;
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j)
            max_err = std::max(max_err,
                               std::abs(u.states(grid.index(i, j), 0) - (1.0 - grid.xc(i))));
    CHECK(max_err < 1e-10);
}

TEST_CASE("steady solve with the heterogeneous field and near-boundary source") {
    Grid2D grid(50, 50);
    SourceSpec src;
    src.kind = SourceSpec::Kind::gaussian_bump;
    src.strength = std::exp(2.0);
    src.width = 0.05;
    src.location = Eigen::Vector2d(0.09, 0.23);
    StateField u = solve_steady_flow(log_linear_perm(grid), src, grid);
    REQUIRE(u.states.allFinite());

    // the source-induced lift over the no-source field peaks near the bump
    SourceSpec none;
    StateField base = solve_steady_flow(log_linear_perm(grid), none, grid);
    VectorXd lift = u.states.col(0) - base.states.col(0);
    Eigen::Index argmax = 0;
    CHECK(lift.maxCoeff(&argmax) > 0.0);
    int i = static_cast<int>(argmax) / grid.ny;
    int j = static_cast<int>(argmax) % grid.ny;
    CHECK(std::abs(grid.xc(i) - 0.09) < 0.1);
    CHECK(std::abs(grid.yc(j) - 0.23) < 0.1);
}

TEST_CASE("steady solve matches an independent dense factorization") {
    Grid2D grid(8, 8);
    PermeabilityField perm = log_linear_perm(grid);
    SourceSpec src;
    src.kind = SourceSpec::Kind::constant;
    src.constant_value = 1.0;
    StateField u = solve_steady_flow(perm, src, grid);

    MatrixXd a;
    VectorXd b;
    dense_system(perm, grid, BoundaryConditions{}, source_field(src, grid), a, b);
    VectorXd dense = a.partialPivLu().solve(b);
    CHECK((u.states.col(0) - dense).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("steady maximum principle and flux conservation with no source") {
    Grid2D grid(24, 24);
    PermeabilityField perm = log_linear_perm(grid);
    SourceSpec none;
    StateField u = solve_steady_flow(perm, none, grid);
    CHECK(u.states.col(0).minCoeff() >= 0.0);
    CHECK(u.states.col(0).maxCoeff() <= 1.0);

    SteadyFlowOperator op(perm, grid);
    VectorXd sol = op.solve(VectorXd::Zero(grid.n_cells()));
    double f0 = op.line_flux(sol, 0);
    for (int line = 0; line <= grid.nx; ++line)
        CHECK(std::abs(op.line_flux(sol, line) - f0) < 1e-8 * std::abs(f0));
}

TEST_CASE("steady solver failure and validation errors") {
    Grid2D grid(4, 4);
    SourceSpec src;
    src.kind = SourceSpec::Kind::constant;
    src.constant_value = 1.0;
    CHECK_THROWS_AS(solve_steady_flow(PermeabilityField{VectorXd::Zero(grid.n_cells())}, src,
                                      grid),
                    SolverError);
    VectorXd bad = VectorXd::Ones(grid.n_cells());
    bad[3] = std::nan("");
    CHECK_THROWS_AS(solve_steady_flow(PermeabilityField{bad}, src, grid), ValidationError);
}

TEST_CASE("unsteady march holds the steady state fixed") {
    Grid2D grid(12, 12);
    PermeabilityField perm = log_linear_perm(grid);
    SourceSpec none;
    StateField steady = solve_steady_flow(perm, none, grid);
    StateField traj = solve_unsteady_flow(perm, none, grid, 0.05, 1.0, steady.states.col(0));
    CHECK(traj.n_levels() == 21);
    for (Eigen::Index c = 0; c < traj.n_levels(); ++c)
        CHECK((traj.states.col(c) - steady.states.col(0)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("unsteady Richardson self-convergence is first order") {
    Grid2D grid(20, 20);
    PermeabilityField perm = uniform_perm(grid);
    SourceSpec src;
    src.kind = SourceSpec::Kind::constant;
    src.constant_value = 10.0;
    VectorXd u0 = VectorXd::Zero(grid.n_cells());
    VectorXd u1 = solve_unsteady_flow(perm, src, grid, 1.0 / 50, 1.0, u0).final_state();
    VectorXd u2 = solve_unsteady_flow(perm, src, grid, 1.0 / 100, 1.0, u0).final_state();
    VectorXd u3 = solve_unsteady_flow(perm, src, grid, 1.0 / 200, 1.0, u0).final_state();
    double d1 = (u1 - u2).norm();
    double d2 = (u2 - u3).norm();
    double order = std::log2(d1 / d2);
    CHECK(d1 / u2.norm() < 0.05); // first-order-in-dt difference stays small
    CHECK(order > 0.8);
    CHECK(order < 1.5);
}

TEST_CASE("unsteady long-horizon limit approaches the steady solve") {
    Grid2D grid(15, 15);
    VectorXd a = VectorXd::Ones(grid.n_cells());
    for (int i = 0; i < grid.nx; ++i)
        for (int j = grid.ny / 3; j < 2 * grid.ny / 3; ++j)
            a[grid.index(i, j)] = 6.0; // crude channel band
    PermeabilityField perm{a};
    SourceSpec src;
    src.kind = SourceSpec::Kind::constant;
    src.constant_value = 10.0;
    StateField steady = solve_steady_flow(perm, src, grid);
    VectorXd u0 = VectorXd::Zero(grid.n_cells());
    StateField traj = solve_unsteady_flow(perm, src, grid, 0.5, 50.0, u0);
    double rel = (traj.final_state() - steady.states.col(0)).norm() / steady.states.col(0).norm();
    CHECK(rel < 1e-6);
}

TEST_CASE("fractional solver approaches the classical limit as alpha -> 1") {
    Grid2D grid(20, 20);
    PermeabilityField perm = uniform_perm(grid);
    SourceSpec src;
    src.kind = SourceSpec::Kind::constant;
    src.constant_value = 10.0;
    VectorXd u0 = VectorXd::Zero(grid.n_cells());
    VectorXd classical = solve_unsteady_flow(perm, src, grid, 0.05, 1.0, u0).final_state();
    VectorXd fractional = solve_fractional_diffusion(perm, 0.999, src, grid, 0.05, 1.0)
                              .final_state();
    CHECK((fractional - classical).norm() / classical.norm() < 0.01);
}

TEST_CASE("fractional L1 scheme: manufactured-solution temporal order >= 1") {
    const double alpha = 0.5;
    Grid2D grid(24, 24);
    PermeabilityField perm = uniform_perm(grid);
    BoundaryConditions zero_bc{0.0, 0.0};

    auto spatial = [&](int idx) {
        int i = idx / grid.ny, j = idx % grid.ny;
        return std::sin(M_PI * grid.xc(i)) * std::cos(M_PI * grid.yc(j));
    };
    VectorXd shape(grid.n_cells());
    for (int idx = 0; idx < grid.n_cells(); ++idx)
        shape[idx] = spatial(idx);
    // u = t^2 * shape; Caputo_t^alpha t^2 = 2 t^(2-alpha) / Gamma(3-alpha)
    TimeSource src = [&](double t) {
        double caputo = 2.0 * std::pow(t, 2.0 - alpha) / std::tgamma(3.0 - alpha);
        return VectorXd((caputo + 2.0 * M_PI * M_PI * t * t) * shape);
    };
    VectorXd u0 = VectorXd::Zero(grid.n_cells());

    auto final_at = [&](double dt) {
        return solve_fractional_diffusion(perm, alpha, src, grid, dt, 1.0, u0, zero_bc)
            .final_state();
    };
    VectorXd u1 = final_at(0.1), u2 = final_at(0.05), u3 = final_at(0.025);
    double order = std::log2((u1 - u2).norm() / (u2 - u3).norm());
    CHECK(order >= 1.0);

    // and the solution itself is close to the manufactured one
    double rel = (u1 - shape).norm() / shape.norm(); // t=1 -> u = shape
    CHECK(rel < 0.05);
}

TEST_CASE("fractional zero dynamics and order validation") {
    Grid2D grid(8, 8);
    BoundaryConditions zero_bc{0.0, 0.0};
    SourceSpec none;
    VectorXd u0 = VectorXd::Zero(grid.n_cells());
    StateField traj = solve_fractional_diffusion(uniform_perm(grid), 0.4,
                                                 [&](double) { return u0; }, grid, 0.1, 1.0, u0,
                                                 zero_bc);
    CHECK(traj.states.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK_THROWS_AS(solve_fractional_diffusion(uniform_perm(grid), 1.2, none, grid, 0.1, 1.0),
                    ValidationError);
    CHECK_THROWS_AS(solve_fractional_diffusion(uniform_perm(grid), 0.0, none, grid, 0.1, 1.0),
                    ValidationError);
}

TEST_CASE("fracture embedding marks exactly the covered cells") {
    Grid2D grid(50, 50);
    PermeabilityField bg = uniform_perm(grid);
    PermeabilityField out = embed_fracture(FractureSpec{0.3, 0.6, 0.4, 10000.0}, bg, grid);
    int col = 15; // floor(0.3 * 50)
    for (int i = 0; i < grid.nx; ++i) {
        for (int j = 0; j < grid.ny; ++j) {
            bool expect = (i == col) && (j >= 20) && (j <= 39); // cells covering [0.4, 0.8]
            CHECK(out.values[grid.index(i, j)] == (expect ? 10000.0 : 1.0));
        }
    }
}

TEST_CASE("fracture embedding degenerate and clipped cases") {
    Grid2D grid(10, 10);
    PermeabilityField bg = uniform_perm(grid);
    PermeabilityField zero_len = embed_fracture(FractureSpec{0.5, 0.5, 0.0, 100.0}, bg, grid);
    CHECK((zero_len.values - bg.values).norm() == 0.0);

    // segment [0.7, 1.1] clips to [0.7, 1.0]; enumerate covered cells directly
    PermeabilityField clipped = embed_fracture(FractureSpec{0.45, 0.9, 0.4, 100.0}, bg, grid);
    int col = 4;
    for (int j = 0; j < grid.ny; ++j) {
        double lo = j * grid.hy(), hi = (j + 1) * grid.hy();
        bool expect = std::min(hi, 1.0) - std::max(lo, 0.7) > 1e-12;
        CHECK(clipped.values[grid.index(col, j)] == (expect ? 100.0 : 1.0));
    }
}

TEST_CASE("arctan map properties") {
    VectorXd q(3);
    q << 0.0, 1e8, -3.0;
    VectorXd t = arctan_map(q);
    CHECK(t[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::abs(t[1] - 1.0) < 1e-7);
    CHECK(t[2] > 0.0);
    CHECK(t[2] < 0.5);

    RngStream rng(7);
    VectorXd random_q(20);
    for (int i = 0; i < 20; ++i)
        random_q[i] = -10.0 + 20.0 * rng.uniform();
    VectorXd round = arctan_map_inverse(arctan_map(random_q));
    CHECK((round - random_q).lpNorm<Eigen::Infinity>() < 1e-12);

    // strictly monotone componentwise
    for (int i = 1; i < 20; ++i) {
        VectorXd a(1), b(1);
        a << random_q[i - 1];
        b << random_q[i];
        if (random_q[i - 1] < random_q[i])
            CHECK(arctan_map(a)[0] < arctan_map(b)[0]);
    }
    VectorXd edge(1);
    edge << 1.0;
    CHECK_THROWS_AS(arctan_map_inverse(edge), ValidationError);
}

TEST_CASE("gaussian source peak, decay, and mass") {
    Grid2D grid(200, 200);
    double s = std::exp(2.0), iota = 0.05;
    Eigen::Vector2d theta(0.5, 0.5);
    VectorXd f = gaussian_source(theta, s, iota, grid);

    double peak = s / (M_PI * iota);
    CHECK(peak == doctest::Approx(47.04).epsilon(1e-3));

    // far field: 10 iota away
    Grid2D coarse(10, 10);
    VectorXd far = gaussian_source(Eigen::Vector2d(0.05, 0.05), s, iota, coarse);
    CHECK(far[coarse.index(9, 9)] < 1e-20 * peak);

    // total mass ~= 2 * iota * s (quadrature over the square captures the bump)
    double mass = f.sum() * grid.hx() * grid.hy();
    CHECK(mass == doctest::Approx(2.0 * iota * s).epsilon(1e-3));
}

TEST_CASE("observe interpolates, validates, and stays linear") {
    Grid2D grid(8, 8);
    StateField state;
    state.grid = grid;
    state.states.resize(grid.n_cells(), 1);
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j)
            state.states(grid.index(i, j), 0) = grid.xc(i) * grid.yc(j); // bilinear field

    // at a node (cell center): exact nodal value
    VectorXd at_node = observe(state, {Eigen::Vector2d(grid.xc(3), grid.yc(5))}, 0.0);
    CHECK(at_node[0] == state.states(grid.index(3, 5), 0));

    // bilinear reproduces bilinear inside the cell-center hull
    VectorXd mid = observe(state, {Eigen::Vector2d(0.4375, 0.3125)}, 0.0);
    CHECK(mid[0] == doctest::Approx(0.4375 * 0.3125).epsilon(1e-14));

    CHECK_THROWS_AS(observe(state, {Eigen::Vector2d(1.5, 0.5)}, 0.0), ValidationError);

    StateField other = state;
    other.states = 2.0 * state.states;
    std::vector<Eigen::Vector2d> pts = {Eigen::Vector2d(0.33, 0.77),
                                        Eigen::Vector2d(0.02, 0.98)};
    StateField sum = state;
    sum.states = state.states + other.states;
    CHECK((observe(sum, pts, 0.0) - (observe(state, pts, 0.0) + observe(other, pts, 0.0)))
              .lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("sensor grid ordering is x-major") {
    auto sensors = sensor_grid(4, 5, 0.1, 0.7, 0.0, 1.0);
    REQUIRE(sensors.size() == 20);
    CHECK(sensors[0][0] == doctest::Approx(0.1));
    CHECK(sensors[0][1] == doctest::Approx(0.0));
    CHECK(sensors[1][0] == doctest::Approx(0.1));
    CHECK(sensors[1][1] == doctest::Approx(0.25));
    CHECK(sensors[5][0] == doctest::Approx(0.3));
    CHECK(sensors[5][1] == doctest::Approx(0.0));
    CHECK(sensors[19][0] == doctest::Approx(0.7));
    CHECK(sensors[19][1] == doctest::Approx(1.0));
}
