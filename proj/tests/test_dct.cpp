#include <doctest.h>

#include <cmath>

#include "iesis/dct.hpp"
#include "iesis/rng.hpp"

using namespace iesis;

TEST_CASE("first basis column is the constant 1/sqrt(n_m)") {
    DctBasis basis = build_basis(6, 4, 1);
    double expected = 1.0 / std::sqrt(24.0);
    for (Eigen::Index r = 0; r < basis.columns.rows(); ++r)
        CHECK(basis.columns(r, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("full basis is orthonormal on square and rectangular grids") {
    for (auto [nx, ny] : {std::pair{4, 4}, {8, 8}, {8, 16}, {5, 7}}) {
        DctBasis basis = build_basis(nx, ny, nx * ny);
        MatrixXd gram = basis.columns.transpose() * basis.columns;
        double err = (gram - MatrixXd::Identity(nx * ny, nx * ny)).cwiseAbs().maxCoeff();
        CHECK(err < 1e-10);
    }
}

TEST_CASE("zigzag retains the low-frequency pairs first") {
    DctBasis basis = build_basis(4, 4, 4, DctOrdering::zigzag);
    std::vector<std::pair<int, int>> expected = {{0, 0}, {0, 1}, {1, 0}, {0, 2}};
    CHECK(basis.retained == expected);

    DctBasis linear = build_basis(4, 4, 5, DctOrdering::row_major);
    std::vector<std::pair<int, int>> expected_linear = {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 0}};
    CHECK(linear.retained == expected_linear);
}

TEST_CASE("truncation nesting holds for both orderings") {
    for (auto ordering : {DctOrdering::zigzag, DctOrdering::row_major}) {
        DctBasis small = build_basis(6, 5, 11, ordering);
        DctBasis big = build_basis(6, 5, 12, ordering);
        for (int c = 0; c < 11; ++c)
            CHECK(small.retained[static_cast<size_t>(c)] == big.retained[static_cast<size_t>(c)]);
    }
}

TEST_CASE("synthesize is linear and inverts analyze") {
    RngStream rng(42);
    int nx = 8, ny = 8;
    // analyze lays coefficients out as r = i*ny + j, the row_major order
    DctBasis full = build_basis(nx, ny, nx * ny, DctOrdering::row_major);

    CHECK(synthesize(VectorXd::Zero(nx * ny), full).norm() == 0.0);

    VectorXd e1 = VectorXd::Zero(nx * ny);
    e1[0] = 1.0;
    VectorXd constant = synthesize(e1, full);
    for (Eigen::Index r = 0; r < constant.size(); ++r)
        CHECK(constant[r] == doctest::Approx(1.0 / 8.0).epsilon(1e-13));

    VectorXd field = rng.normal_vector(nx * ny);
    VectorXd coeffs = analyze(field, nx, ny);
    CHECK((synthesize(coeffs, full) - field).lpNorm<Eigen::Infinity>() < 1e-10);

    // analyze equals the transpose action of the full basis
    CHECK((coeffs - full.columns.transpose() * field).lpNorm<Eigen::Infinity>() < 1e-10);

    // zigzag ordering reaches the same field once coefficients are permuted
    DctBasis zig = build_basis(nx, ny, nx * ny, DctOrdering::zigzag);
    VectorXd permuted(nx * ny);
    for (int c = 0; c < nx * ny; ++c) {
        auto [fi, fj] = zig.retained[static_cast<size_t>(c)];
        permuted[c] = coeffs[fi * ny + fj];
    }
    CHECK((synthesize(permuted, zig) - field).lpNorm<Eigen::Infinity>() < 1e-10);

    CHECK_THROWS_AS(synthesize(VectorXd::Zero(3), full), ValidationError);
    CHECK_THROWS_AS(analyze(VectorXd::Zero(7), nx, ny), ValidationError);
}

TEST_CASE("analyze of a constant concentrates on the (0,0) coefficient") {
    int nx = 6, ny = 9;
    VectorXd field = VectorXd::Constant(nx * ny, 3.25);
    VectorXd coeffs = analyze(field, nx, ny);
    CHECK(coeffs[0] == doctest::Approx(3.25 * std::sqrt(54.0)).epsilon(1e-13));
    coeffs[0] = 0.0;
    CHECK(coeffs.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("analyze of a basis column returns a unit coefficient vector") {
    DctBasis full = build_basis(5, 4, 20);
    VectorXd coeffs = analyze(full.columns.col(7), 5, 4);
    VectorXd expected = VectorXd::Zero(20);
    expected[7] = 1.0; // row_major construction order matches analyze layout
    DctBasis linear = build_basis(5, 4, 20, DctOrdering::row_major);
    VectorXd coeffs_linear = analyze(linear.columns.col(7), 5, 4);
    CHECK((coeffs_linear - expected).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("reduce_dimension implements the cumulative-mass criterion") {
    VectorXd v(4);
    v << 4, 3, 2, 1;
    CHECK(reduce_dimension(v, 0.9) == std::vector<int>{0, 1, 2});
    CHECK(reduce_dimension(v, 1.0) == std::vector<int>{0, 1, 2, 3});

    VectorXd dominant(4);
    dominant << 1e6, 1e-9, 1e-9, 1e-9;
    CHECK(reduce_dimension(dominant, 0.95) == std::vector<int>{0});

    VectorXd with_zero(4);
    with_zero << 4, 0, 2, 1;
    auto kept = reduce_dimension(with_zero, 1.0);
    CHECK(kept == std::vector<int>{0, 2, 3}); // exact zeros dropped at full mass

    // scale invariance
    VectorXd scaled = 17.5 * v;
    CHECK(reduce_dimension(scaled, 0.9) == reduce_dimension(v, 0.9));

    // all-zero mean retains everything
    CHECK(reduce_dimension(VectorXd::Zero(3), 0.5) == std::vector<int>{0, 1, 2});
}

TEST_CASE("subset keeps the selected columns and frequency pairs") {
    DctBasis basis = build_basis(6, 6, 10);
    DctBasis sub = basis.subset({0, 3, 7});
    CHECK(sub.n_c() == 3);
    CHECK(sub.retained[1] == basis.retained[3]);
    CHECK((sub.columns.col(2) - basis.columns.col(7)).norm() == 0.0);
}

TEST_CASE("zigzag reconstruction error is non-increasing in n_c") {
    // banded field: three vertical stripes, the kind the truncation targets
    int nx = 16, ny = 16;
    VectorXd field(nx * ny);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            field[i * ny + j] = (i >= 3 && i <= 5) || (i >= 10 && i <= 12) ? 1.8 : 0.0;

    VectorXd coeffs = analyze(field, nx, ny);
    double prev = std::numeric_limits<double>::infinity();
    for (int n_c : {8, 32, 64, 128, 256}) {
        DctBasis basis = build_basis(nx, ny, n_c);
        VectorXd reduced(n_c);
        for (int c = 0; c < n_c; ++c) {
            auto [fi, fj] = basis.retained[static_cast<size_t>(c)];
            reduced[c] = coeffs[fi * ny + fj];
        }
        double err = (synthesize(reduced, basis) - field).norm();
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}
