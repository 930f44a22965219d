#pragma once

#include "iesis/common.hpp"

namespace iesis {

// Blockwise regularized projection: minimizes (A_tilde - A)^2 + tau*T(A)
// over [lower, upper], with T(A) = (b1*A - b2)*(b3 - b4*A).
struct PostProcessSpec {
    double tau = 0.75;
    double b1 = 1.0, b2 = 0.0, b3 = 1.0, b4 = 1.0;
    double lower = 0.0;
    double upper = 1.0;

    PostProcessSpec() = default;
    PostProcessSpec(double tau_, double b1_, double b2_, double b3_, double b4_, double lower_,
                    double upper_)
        : tau(tau_), b1(b1_), b2(b2_), b3(b3_), b4(b4_), lower(lower_), upper(upper_) {
        validate();
    }

    void validate() const {
        require(tau > 0.0 && tau < 1.0, "post-processing weight tau must lie in (0,1)");
        require(1.0 - tau * b1 * b4 > 0.0, "post-processing penalty is not convex");
        require(lower < upper, "post-processing bounds must satisfy lower < upper");
    }
};

double project_block(double a_tilde, const PostProcessSpec &spec);
VectorXd project_field(const VectorXd &field, const PostProcessSpec &spec);

} // namespace iesis
