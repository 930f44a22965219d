#pragma once

#include <functional>

#include "iesis/ensemble.hpp"
#include "iesis/gmm.hpp"

namespace iesis {

struct PriorSpec {
    VectorXd theta_pr;
    MatrixXd c_theta; // SPD

    PriorSpec() = default;
    PriorSpec(VectorXd mean, MatrixXd cov)
        : theta_pr(std::move(mean)), c_theta(std::move(cov)) {
        require(c_theta.rows() == theta_pr.size() && c_theta.cols() == theta_pr.size(),
                "prior covariance dimension mismatch");
    }

    static PriorSpec standard_normal(Eigen::Index dim) {
        return PriorSpec(VectorXd::Zero(dim), MatrixXd::Identity(dim, dim));
    }

    // restriction to a subset of coordinates
    PriorSpec subset(const std::vector<int> &keep) const;
};

struct ObservationSetup {
    VectorXd d;
    double sigma = 1.0; // noise std; C_D = sigma^2 I

    ObservationSetup() = default;
    ObservationSetup(VectorXd data, double sigma_) : d(std::move(data)), sigma(sigma_) {
        require(sigma > 0.0, "observation noise std must be positive");
    }

    MatrixXd c_d() const { return sigma * sigma * MatrixXd::Identity(d.size(), d.size()); }
};

// K = C_thetaD ((1+lambda) C_D + C_DD)^-1 via a symmetric solve; a failing
// factorization is retried with escalating diagonal jitter.
MatrixXd kalman_gain(const MatrixXd &c_theta_d, const MatrixXd &c_dd, double lambda,
                     const MatrixXd &c_d);

// H~^-1 = (C_theta_l - K C_thetaD^T) / (1+lambda), symmetrized
MatrixXd hessian_inverse(const MatrixXd &c_theta_l, const MatrixXd &kalman,
                         const MatrixXd &c_theta_d, double lambda);

struct IesUpdate {
    Ensemble intermediate;
    MatrixXd kalman;
    MatrixXd h_inv;
    VectorXd map_point; // mean of the intermediate ensemble
};

struct Covariances {
    MatrixXd c_theta;
    MatrixXd c_theta_d;
    MatrixXd c_dd;
};

// theta~^j = theta^j - (C_tl - K C_tD^T) C_theta^-1 (theta^j - theta_pr)/(1+lambda)
//            - K (g^j - d), with the covariances supplied by the caller
IesUpdate ies_apply_update(const Ensemble &ens, const MatrixXd &predictions,
                           const Covariances &covs, const PriorSpec &prior, double lambda,
                           const ObservationSetup &obs);

// covariances estimated from the ensemble itself (mean-centered, 1/N_e)
IesUpdate ies_update_gaussian(const Ensemble &ens, const MatrixXd &predictions,
                              const PriorSpec &prior, double lambda,
                              const ObservationSetup &obs);

// membership-weighted covariances about the supplied centers
IesUpdate ies_update_component(const Ensemble &ens, const MatrixXd &predictions,
                               const VectorXd &gamma_row, const VectorXd &theta_center,
                               const VectorXd &pred_center, const PriorSpec &prior,
                               double lambda, const ObservationSetup &obs);

VectorXd map_point(const Ensemble &intermediate);

// theta^j = mu + L xi^j with L L^T = h_inv; an indefinite h_inv is repaired
// by clipping eigenvalues at 1e-12
Ensemble implicit_map(const VectorXd &mu, const MatrixXd &h_inv, const MatrixXd &xi);

// log ratio delta_j = |xi_j|^2/2 - W_j (the additive minimum of W cancels
// under normalization); non-finite W gives that member weight zero
WeightVector is_weights(const MatrixXd &xi, const VectorXd &w_values, double rho);

double quadratic_cost(const VectorXd &theta, const VectorXd &prediction, const PriorSpec &prior,
                      const ObservationSetup &obs);

Ensemble combine_ensembles(const std::vector<Ensemble> &per_model, const MatrixXd &gamma);

using ForwardFn = std::function<VectorXd(const VectorXd &)>;

// Analysis-step mixture: gamma-weighted moments of the per-model ensembles;
// weights from the data likelihood at each mean (finite-difference Jacobian)
// scaled by membership mass. With a single model the weight is 1 outright.
GaussianMixture gmm_analysis_update(const std::vector<Ensemble> &per_model,
                                    const MatrixXd &gamma, const ForwardFn &forward,
                                    const ObservationSetup &obs, double fd_step = 1e-4,
                                    unsigned n_threads = 1);

VectorXd point_estimate(const GaussianMixture &mixture);

// central-difference Jacobian of the forward map
MatrixXd fd_jacobian(const ForwardFn &forward, const VectorXd &at, double step,
                     unsigned n_threads = 1);

} // namespace iesis
