#include "iesis/postprocess.hpp"

#include <algorithm>

namespace iesis {

double project_block(double a_tilde, const PostProcessSpec &spec) {
    double interior = (2.0 * a_tilde - spec.tau * (spec.b1 * spec.b3 + spec.b2 * spec.b4)) /
                      (2.0 * (1.0 - spec.tau * spec.b1 * spec.b4));
    return std::clamp(interior, spec.lower, spec.upper);
}

VectorXd project_field(const VectorXd &field, const PostProcessSpec &spec) {
    VectorXd out(field.size());
    for (Eigen::Index i = 0; i < field.size(); ++i)
        out[i] = project_block(field[i], spec);
    return out;
}

} // namespace iesis
