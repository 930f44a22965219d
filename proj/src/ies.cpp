#include "iesis/ies.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace iesis {

PriorSpec PriorSpec::subset(const std::vector<int> &keep) const {
    PriorSpec out;
    auto n = static_cast<Eigen::Index>(keep.size());
    out.theta_pr.resize(n);
    out.c_theta.resize(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        out.theta_pr[a] = theta_pr[keep[static_cast<size_t>(a)]];
        for (Eigen::Index b = 0; b < n; ++b)
            out.c_theta(a, b) = c_theta(keep[static_cast<size_t>(a)], keep[static_cast<size_t>(b)]);
    }
    return out;
}

MatrixXd kalman_gain(const MatrixXd &c_theta_d, const MatrixXd &c_dd, double lambda,
                     const MatrixXd &c_d) {
    require(lambda >= 0.0, "damping must be nonnegative");
    require(c_dd.rows() == c_dd.cols() && c_d.rows() == c_d.cols() &&
                c_dd.rows() == c_d.rows() && c_theta_d.cols() == c_dd.rows(),
            "kalman gain dimension mismatch");
    MatrixXd s = (1.0 + lambda) * c_d + c_dd;
    s = 0.5 * (s + s.transpose());

    double jitter = 0.0;
    double scale = std::max(s.diagonal().mean(), 1e-300);
    for (int attempt = 0; attempt < 4; ++attempt) {
        Eigen::LLT<MatrixXd> llt(s + jitter * MatrixXd::Identity(s.rows(), s.cols()));
        if (llt.info() == Eigen::Success)
            return llt.solve(c_theta_d.transpose()).transpose();
        jitter = jitter == 0.0 ? 1e-10 * scale : 10.0 * jitter;
    }
    throw FactorizationError("kalman gain: (1+lambda) C_D + C_DD is not positive definite");
}

MatrixXd hessian_inverse(const MatrixXd &c_theta_l, const MatrixXd &kalman,
                         const MatrixXd &c_theta_d, double lambda) {
    MatrixXd m = (c_theta_l - kalman * c_theta_d.transpose()) / (1.0 + lambda);
    return 0.5 * (m + m.transpose());
}

IesUpdate ies_apply_update(const Ensemble &ens, const MatrixXd &predictions,
                           const Covariances &covs, const PriorSpec &prior, double lambda,
                           const ObservationSetup &obs) {
    require(predictions.cols() == ens.n_e(), "prediction count does not match ensemble");
    require(predictions.rows() == obs.d.size(), "prediction length does not match data");
    require(prior.theta_pr.size() == ens.n_theta(), "prior dimension does not match ensemble");
    require(predictions.allFinite(), "predictions must be finite");

    IesUpdate out;
    out.kalman = kalman_gain(covs.c_theta_d, covs.c_dd, lambda, obs.c_d());
    MatrixXd reduction = covs.c_theta - out.kalman * covs.c_theta_d.transpose();
    out.h_inv = 0.5 / (1.0 + lambda) * (reduction + reduction.transpose());

    Eigen::LLT<MatrixXd> prior_llt(prior.c_theta);
    if (prior_llt.info() != Eigen::Success)
        throw FactorizationError("prior covariance is not positive definite");

    MatrixXd prior_dev = ens.samples.colwise() - prior.theta_pr;
    MatrixXd whitened = prior_llt.solve(prior_dev); // C_theta^-1 (theta - theta_pr)
    MatrixXd innovations = predictions.colwise() - obs.d;
    out.intermediate = Ensemble(ens.samples - (1.0 / (1.0 + lambda)) * (reduction * whitened) -
                                out.kalman * innovations);
    out.map_point = ensemble_mean(out.intermediate);
    return out;
}

IesUpdate ies_update_gaussian(const Ensemble &ens, const MatrixXd &predictions,
                              const PriorSpec &prior, double lambda,
                              const ObservationSetup &obs) {
    VectorXd theta_center = ensemble_mean(ens);
    VectorXd pred_center = predictions.rowwise().sum() / static_cast<double>(predictions.cols());
    return ies_update_component(ens, predictions, VectorXd::Ones(ens.n_e()), theta_center,
                                pred_center, prior, lambda, obs);
}

IesUpdate ies_update_component(const Ensemble &ens, const MatrixXd &predictions,
                               const VectorXd &gamma_row, const VectorXd &theta_center,
                               const VectorXd &pred_center, const PriorSpec &prior,
                               double lambda, const ObservationSetup &obs) {
    ComponentCovs cc = weighted_mc_covs(ens, predictions, gamma_row, theta_center, pred_center);
    return ies_apply_update(ens, predictions, Covariances{cc.c_theta, cc.c_theta_d, cc.c_dd},
                            prior, lambda, obs);
}

VectorXd map_point(const Ensemble &intermediate) { return ensemble_mean(intermediate); }

Ensemble implicit_map(const VectorXd &mu, const MatrixXd &h_inv, const MatrixXd &xi) {
    require(h_inv.rows() == h_inv.cols() && h_inv.rows() == mu.size(),
            "implicit map dimension mismatch");
    require(xi.rows() == mu.size(), "reference draws dimension mismatch");
    MatrixXd sym = 0.5 * (h_inv + h_inv.transpose());

    MatrixXd factor;
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
        if (eig.info() != Eigen::Success || eig.eigenvalues().maxCoeff() <= 0.0)
            throw FactorizationError("implicit map: Hessian inverse has no positive spectrum");
        VectorXd clipped = eig.eigenvalues().cwiseMax(1e-12);
        factor = eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
    }
    return Ensemble((factor * xi).colwise() + mu);
}

WeightVector is_weights(const MatrixXd &xi, const VectorXd &w_values, double rho) {
    require(w_values.size() == xi.cols(), "weight evaluations do not match draws");
    VectorXd delta(xi.cols());
    for (Eigen::Index j = 0; j < xi.cols(); ++j) {
        double w = w_values[j];
        delta[j] = std::isfinite(w) ? 0.5 * xi.col(j).squaredNorm() - w
                                    : -std::numeric_limits<double>::infinity();
    }
    return normalize_weights(delta, rho);
}

double quadratic_cost(const VectorXd &theta, const VectorXd &prediction, const PriorSpec &prior,
                      const ObservationSetup &obs) {
    if (!prediction.allFinite())
        return std::numeric_limits<double>::quiet_NaN();
    VectorXd resid = obs.d - prediction;
    double data_term = 0.5 * resid.squaredNorm() / (obs.sigma * obs.sigma);
    Eigen::LLT<MatrixXd> llt(prior.c_theta);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("prior covariance is not positive definite");
    VectorXd dev = theta - prior.theta_pr;
    return data_term + 0.5 * dev.dot(llt.solve(dev));
}

Ensemble combine_ensembles(const std::vector<Ensemble> &per_model, const MatrixXd &gamma) {
    require(!per_model.empty(), "no ensembles to combine");
    auto k = static_cast<Eigen::Index>(per_model.size());
    require(gamma.rows() == k, "membership rows do not match model count");
    const Eigen::Index n_e = per_model.front().n_e();
    const Eigen::Index n_theta = per_model.front().n_theta();
    for (const auto &e : per_model)
        require(e.n_e() == n_e && e.n_theta() == n_theta, "ensemble shapes disagree");
    require(gamma.cols() == n_e, "membership columns do not match ensemble");

    MatrixXd combined = MatrixXd::Zero(n_theta, n_e);
    for (Eigen::Index i = 0; i < k; ++i)
        combined += (per_model[static_cast<size_t>(i)].samples.array().rowwise() *
                     gamma.row(i).array())
                        .matrix();
    return Ensemble(std::move(combined));
}

MatrixXd fd_jacobian(const ForwardFn &forward, const VectorXd &at, double step,
                     unsigned n_threads) {
    require(step > 0.0, "finite-difference step must be positive");
    const Eigen::Index n = at.size();
    std::vector<VectorXd> plus(static_cast<size_t>(n)), minus(static_cast<size_t>(n));
    parallel_for(
        n,
        [&](Eigen::Index m) {
            VectorXd x = at;
            x[m] = at[m] + step;
            plus[static_cast<size_t>(m)] = forward(x);
            x[m] = at[m] - step;
            minus[static_cast<size_t>(m)] = forward(x);
        },
        n_threads);
    MatrixXd jac(plus.front().size(), n);
    for (Eigen::Index m = 0; m < n; ++m)
        jac.col(m) = (plus[static_cast<size_t>(m)] - minus[static_cast<size_t>(m)]) /
                     (2.0 * step);
    return jac;
}

GaussianMixture gmm_analysis_update(const std::vector<Ensemble> &per_model,
                                    const MatrixXd &gamma, const ForwardFn &forward,
                                    const ObservationSetup &obs, double fd_step,
                                    unsigned n_threads) {
    const int k = static_cast<int>(per_model.size());
    require(gamma.rows() == k, "membership rows do not match model count");

    GaussianMixture out;
    out.weights.resize(k);
    VectorXd log_pi(k);
    for (int i = 0; i < k; ++i) {
        const Ensemble &ens_i = per_model[static_cast<size_t>(i)];
        double n_i = gamma.row(i).sum();
        if (!(n_i > 0.0))
            throw ValidationError("degenerate component in analysis update");
        VectorXd mu = (ens_i.samples * gamma.row(i).transpose()) / n_i;
        MatrixXd dev = ens_i.samples.colwise() - mu;
        MatrixXd wdev = dev.array().rowwise() * gamma.row(i).array();
        MatrixXd sigma = wdev * dev.transpose() / n_i;
        sigma = 0.5 * (sigma + sigma.transpose());
        out.means.push_back(mu);
        out.covs.push_back(sigma);

        if (k == 1) {
            log_pi[i] = 0.0;
            continue;
        }
        MatrixXd jac = fd_jacobian(forward, mu, fd_step, n_threads);
        MatrixXd data_cov = jac * sigma * jac.transpose() + obs.c_d();
        data_cov = 0.5 * (data_cov + data_cov.transpose());

        double jitter = 0.0;
        double scale = std::max(data_cov.diagonal().mean(), 1e-300);
        bool done = false;
        for (int attempt = 0; attempt < 4 && !done; ++attempt) {
            Eigen::LLT<MatrixXd> llt(data_cov +
                                     jitter * MatrixXd::Identity(data_cov.rows(), data_cov.cols()));
            if (llt.info() == Eigen::Success) {
                double ld = 0.0;
                for (Eigen::Index r = 0; r < data_cov.rows(); ++r)
                    ld += 2.0 * std::log(llt.matrixL()(r, r));
                VectorXd resid = obs.d - forward(mu);
                log_pi[i] = std::log(n_i) - 0.5 * ld - 0.5 * resid.dot(llt.solve(resid));
                done = true;
            } else {
                jitter = jitter == 0.0 ? 1e-10 * scale : 10.0 * jitter;
            }
        }
        if (!done)
            throw FactorizationError("analysis update: predicted-data covariance is not SPD");
    }
    double m = log_pi.maxCoeff();
    VectorXd e = (log_pi.array() - m).exp();
    out.weights = e / e.sum();
    return out;
}

VectorXd point_estimate(const GaussianMixture &mixture) {
    VectorXd est = VectorXd::Zero(mixture.dim());
    for (int i = 0; i < mixture.k(); ++i)
        est += mixture.weights[i] * mixture.means[static_cast<size_t>(i)];
    return est;
}

} // namespace iesis
