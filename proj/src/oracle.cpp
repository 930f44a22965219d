#include "iesis/oracle.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace iesis {

namespace {

double spd_log_det(const Eigen::LLT<MatrixXd> &llt) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < llt.matrixL().rows(); ++i)
        out += 2.0 * std::log(llt.matrixL()(i, i));
    return out;
}

} // namespace

GaussianMixture linear_gmm_posterior(const LinearModel &model, const VectorXd &d,
                                     const GaussianMixture &prior) {
    prior.validate();
    require(model.g.rows() == d.size(), "data length does not match forward map");
    require(model.g.cols() == prior.dim(), "parameter dimension does not match forward map");
    Eigen::LLT<MatrixXd> cd_llt(model.c_d);
    if (cd_llt.info() != Eigen::Success)
        throw ValidationError("observation covariance is not positive definite");

    const MatrixXd gt_cdinv = cd_llt.solve(model.g).transpose(); // G^T C_D^-1
    const MatrixXd gt_cdinv_g = gt_cdinv * model.g;
    const VectorXd gt_cdinv_d = gt_cdinv * d;
    const double log_det_cd = spd_log_det(cd_llt);
    const double d_quad = d.dot(cd_llt.solve(d));

    const int k = prior.k();
    GaussianMixture post;
    post.weights.resize(k);
    VectorXd log_pi_tilde(k);
    for (int i = 0; i < k; ++i) {
        Eigen::LLT<MatrixXd> prior_llt(prior.covs[static_cast<size_t>(i)]);
        if (prior_llt.info() != Eigen::Success)
            throw ValidationError("prior covariance is not positive definite");
        MatrixXd precision =
            gt_cdinv_g + prior_llt.solve(MatrixXd::Identity(prior.dim(), prior.dim()));
        Eigen::LLT<MatrixXd> post_llt(precision);
        if (post_llt.info() != Eigen::Success)
            throw ValidationError("posterior precision is not positive definite");

        const VectorXd &mu = prior.means[static_cast<size_t>(i)];
        VectorXd rhs = gt_cdinv_d + prior_llt.solve(mu);
        VectorXd mu_a = post_llt.solve(rhs);
        MatrixXd sigma_a = post_llt.solve(MatrixXd::Identity(prior.dim(), prior.dim()));
        sigma_a = 0.5 * (sigma_a + sigma_a.transpose());
        post.means.push_back(mu_a);
        post.covs.push_back(sigma_a);

        // log pi_tilde, fully in log space; log|Sigma_a| = -log|precision|
        double log_det_sigma_a = -spd_log_det(post_llt);
        double mu_quad = mu.dot(prior_llt.solve(mu));
        double mu_a_quad = mu_a.dot(precision * mu_a);
        log_pi_tilde[i] = std::log(prior.weights[i]) + 0.5 * log_det_sigma_a -
                          0.5 * spd_log_det(prior_llt) - 0.5 * log_det_cd -
                          0.5 * (d_quad + mu_quad - mu_a_quad);
    }
    double m = log_pi_tilde.maxCoeff();
    VectorXd e = (log_pi_tilde.array() - m).exp();
    post.weights = e / e.sum();
    return post;
}

double mixture_pdf(const GaussianMixture &mixture, const VectorXd &x) {
    double p = 0.0;
    for (int i = 0; i < mixture.k(); ++i)
        p += mixture.weights[i] * component_pdf(x, mixture.means[static_cast<size_t>(i)],
                                                mixture.covs[static_cast<size_t>(i)]);
    return p;
}

GriddedDensity quadrature_posterior(const LinearModel &model, const VectorXd &d,
                                    const GaussianMixture &prior, const QuadratureGrid &grid) {
    const Eigen::Index dim = prior.dim();
    require(dim >= 1 && dim <= 2, "quadrature oracle supports dimension 1 or 2 only");
    require(grid.lower.size() == dim && grid.upper.size() == dim,
            "quadrature bounds dimension mismatch");
    require(grid.points_per_dim >= 3, "quadrature grid too coarse");
    Eigen::LLT<MatrixXd> cd_llt(model.c_d);
    if (cd_llt.info() != Eigen::Success)
        throw ValidationError("observation covariance is not positive definite");

    auto axis = [&](int a) {
        VectorXd v(grid.points_per_dim);
        for (int p = 0; p < grid.points_per_dim; ++p)
            v[p] = grid.lower[a] +
                   (grid.upper[a] - grid.lower[a]) * p / (grid.points_per_dim - 1.0);
        return v;
    };
    auto trap_weight = [&](int p) {
        return (p == 0 || p == grid.points_per_dim - 1) ? 0.5 : 1.0;
    };

    GriddedDensity out;
    std::vector<double> raw;
    std::vector<double> quad_w;
    if (dim == 1) {
        VectorXd xs = axis(0);
        double h = xs[1] - xs[0];
        for (int p = 0; p < grid.points_per_dim; ++p) {
            VectorXd x(1);
            x << xs[p];
            out.points.push_back(x);
            quad_w.push_back(trap_weight(p) * h);
        }
    } else {
        VectorXd xs = axis(0), ys = axis(1);
        double hx = xs[1] - xs[0], hy = ys[1] - ys[0];
        for (int p = 0; p < grid.points_per_dim; ++p) {
            for (int q = 0; q < grid.points_per_dim; ++q) {
                VectorXd x(2);
                x << xs[p], ys[q];
                out.points.push_back(x);
                quad_w.push_back(trap_weight(p) * trap_weight(q) * hx * hy);
            }
        }
    }

    raw.resize(out.points.size());
    for (size_t p = 0; p < out.points.size(); ++p) {
        const VectorXd &x = out.points[p];
        VectorXd resid = d - model.g * x;
        double log_lik = -0.5 * resid.dot(cd_llt.solve(resid));
        raw[p] = mixture_pdf(prior, x) * std::exp(log_lik);
    }
    double mass = 0.0;
    for (size_t p = 0; p < raw.size(); ++p)
        mass += raw[p] * quad_w[p];
    require(mass > 0.0, "quadrature posterior has zero mass on the grid");

    out.density.resize(static_cast<Eigen::Index>(raw.size()));
    out.mean = VectorXd::Zero(dim);
    for (size_t p = 0; p < raw.size(); ++p) {
        double dens = raw[p] / mass;
        out.density[static_cast<Eigen::Index>(p)] = dens;
        out.mean += dens * quad_w[p] * out.points[p];
    }
    return out;
}

} // namespace iesis
