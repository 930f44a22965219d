#include <doctest.h>

#include <cmath>

#include "iesis/postprocess.hpp"
#include "iesis/rng.hpp"

using namespace iesis;

namespace {

double penalty(double a, double a_tilde, const PostProcessSpec &s) {
    return (a_tilde - a) * (a_tilde - a) +
           s.tau * (s.b1 * a - s.b2) * (s.b3 - s.b4 * a);
}

// brute-force minimizer of G over a uniform grid
double grid_minimizer(double a_tilde, const PostProcessSpec &s, int points) {
    double best_a = s.lower, best_g = penalty(s.lower, a_tilde, s);
    for (int p = 1; p < points; ++p) {
        double a = s.lower + (s.upper - s.lower) * p / (points - 1.0);
        double g = penalty(a, a_tilde, s);
        if (g < best_g) {
            best_g = g;
            best_a = a;
        }
    }
    return best_a;
}

} // namespace

TEST_CASE("closed-form block projection matches the hand cases") {
    PostProcessSpec spec(0.75, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0); // T(A) = A(1-A)
    CHECK(project_block(0.5, spec) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(project_block(0.2, spec) == doctest::Approx(0.0)); // interior value -0.7 clamps
    CHECK(project_block(0.9, spec) == doctest::Approx(1.0)); // interior value 2.1 clamps

    PostProcessSpec tiny_tau(1e-12, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
    for (double a : {0.1, 0.4, 0.77})
        CHECK(project_block(a, tiny_tau) == doctest::Approx(a).epsilon(1e-9));
}

TEST_CASE("spec validation rejects non-convex and malformed parameters") {
    CHECK_THROWS_AS(PostProcessSpec(0.75, 2.0, 0.0, 1.0, 1.0, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(PostProcessSpec(1.5, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(PostProcessSpec(0.5, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0), ValidationError);
}

TEST_CASE("closed form agrees with brute-force grid search on random specs") {
    RngStream rng(17);
    int trials = 1000;
    const int grid_points = 100000;
    for (int t = 0; t < trials; ++t) {
        double lower = -1.0 + rng.uniform();
        double upper = lower + 0.5 + rng.uniform();
        double b1 = -1.0 + 2.0 * rng.uniform();
        double b2 = -1.0 + 2.0 * rng.uniform();
        double b3 = -1.0 + 2.0 * rng.uniform();
        double b4 = -1.0 + 2.0 * rng.uniform();
        double tau = 0.05 + 0.9 * rng.uniform();
        if (1.0 - tau * b1 * b4 <= 1e-3)
            continue; // convexity constraint
        PostProcessSpec spec(tau, b1, b2, b3, b4, lower, upper);
        double a_tilde = lower - 0.5 + 2.0 * rng.uniform() * (upper - lower + 1.0);
        double closed = project_block(a_tilde, spec);
        double brute = grid_minimizer(a_tilde, spec, grid_points);
        double spacing = (upper - lower) / (grid_points - 1.0);
        CHECK(std::abs(closed - brute) <= spacing + 1e-12);
    }
}

TEST_CASE("project_block is monotone and idempotent at the bounds") {
    PostProcessSpec spec(0.75, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        double a = -0.5 + 2.0 * i / 100.0;
        double p = project_block(a, spec);
        CHECK(p >= prev - 1e-15);
        CHECK(project_block(p, spec) == doctest::Approx(project_block(p, spec)));
        prev = p;
    }
    // once clamped, reprojection stays at the bound
    CHECK(project_block(project_block(-3.0, spec), spec) == 0.0);
    CHECK(project_block(project_block(5.0, spec), spec) == 1.0);
}

TEST_CASE("field projection is blockwise and bounded") {
    PostProcessSpec spec(0.75, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
    CHECK(project_field(VectorXd::Zero(9), spec).norm() == 0.0);
    CHECK((project_field(VectorXd::Constant(5, 0.5), spec).array() == 0.5).all());

    RngStream rng(23);
    VectorXd field = 3.0 * rng.normal_vector(64);
    VectorXd out = project_field(field, spec);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0.0);
        CHECK(out[i] <= 1.0);
        CHECK(out[i] == project_block(field[i], spec));
    }
}
