#pragma once

#include "iesis/common.hpp"
#include "iesis/rng.hpp"

namespace iesis {

// Parameter ensemble; column j is member theta^j.
struct Ensemble {
    MatrixXd samples;

    Ensemble() = default;
    explicit Ensemble(MatrixXd s) : samples(std::move(s)) {
        require(samples.cols() >= 2, "ensemble needs at least two members");
        require(samples.allFinite(), "ensemble entries must be finite");
    }

    Eigen::Index n_theta() const { return samples.rows(); }
    Eigen::Index n_e() const { return samples.cols(); }
};

struct WeightVector {
    VectorXd w; // nonnegative, sums to 1
};

VectorXd ensemble_mean(const Ensemble &ens);

// Monte Carlo covariances with the 1/N_e normalization.
MatrixXd mc_cov_theta(const Ensemble &ens);
MatrixXd mc_cross_cov(const Ensemble &ens, const MatrixXd &predictions);
MatrixXd mc_data_cov(const MatrixXd &predictions);

struct ComponentCovs {
    MatrixXd c_theta;   // N_theta x N_theta
    MatrixXd c_theta_d; // N_theta x N_d
    MatrixXd c_dd;      // N_d x N_d
    double n_i = 0.0;   // membership mass
};

// Membership-weighted covariances for one mixture component: parameter
// deviations about theta_center, prediction deviations about pred_center,
// both divided by n_i = sum_j gamma_j.
ComponentCovs weighted_mc_covs(const Ensemble &ens, const MatrixXd &predictions,
                               const VectorXd &gamma_row, const VectorXd &theta_center,
                               const VectorXd &pred_center);

// w_j proportional to exp(delta_j / rho), evaluated in log space with
// max-subtraction; entries of -inf get weight zero.
WeightVector normalize_weights(const VectorXd &log_ratios, double rho);

Ensemble systematic_resample(const Ensemble &ens, const WeightVector &weights, RngStream &rng);

// copy counts only; exposed for the resampling guarantees
std::vector<int> systematic_resample_counts(const VectorXd &weights, int n_draws, double u0);

} // namespace iesis
