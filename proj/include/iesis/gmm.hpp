#pragma once

#include <vector>

#include "iesis/ensemble.hpp"

namespace iesis {

struct GaussianMixture {
    VectorXd weights;             // pi_i, positive, sums to 1
    std::vector<VectorXd> means;  // mu_i
    std::vector<MatrixXd> covs;   // Sigma_i, SPD

    int k() const { return static_cast<int>(weights.size()); }
    Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
    void validate() const;
};

double log_component_pdf(const VectorXd &x, const VectorXd &mu, const MatrixXd &sigma);
double component_pdf(const VectorXd &x, const VectorXd &mu, const MatrixXd &sigma);

// J = sum_i pi_i (log|Sigma_i|/2 + h^2 tr(Sigma_i^-1)/2 - log pi_i)
double byy_criterion(const GaussianMixture &mixture, double h);

// columns sum to 1; a column whose densities all underflow gets uniform
// memberships (counted in the optional out-parameter)
MatrixXd e_step(const Ensemble &ens, const GaussianMixture &mixture,
                int *underflow_columns = nullptr);

GaussianMixture m_step(const Ensemble &ens, const MatrixXd &gamma, double h);

// h' = h + eta*S(h), clamped below at h_floor
double update_smoothing(double h, const Ensemble &ens, const GaussianMixture &mixture,
                        double eta, double h_floor = 1e-8);

// raw S(h) used by the update; exposed for verification
double smoothing_gradient(double h, const Ensemble &ens, const GaussianMixture &mixture);

GaussianMixture screen_components(const GaussianMixture &mixture, double eps_screen, int k_min);

struct SmemOptions {
    int k_max = 5;
    int k_min = 2;
    double eps_screen = 0.05;
    double eta = -1.0; // <= 0 selects the default 0.01 * h0^2
    int max_inner_iterations = 50;
    double h_floor = 1e-8;
};

struct SmemResult {
    GaussianMixture mixture;
    MatrixXd gamma;        // memberships of the returned mixture
    double h = 0.0;        // final smoothing parameter
    double h0 = 0.0;       // initial smoothing parameter
    double criterion = 0.0;
    std::vector<double> criterion_history; // accepted J values
    int iterations = 0;
    bool degenerate = false;
};

double initial_smoothing(const Ensemble &ens);

// default initializer: means are k_max distinct random members, covariances
// the (1/N_e) sample covariance, weights uniform
GaussianMixture init_mixture_from_ensemble(const Ensemble &ens, int k, RngStream &rng);

SmemResult smem_fit(const Ensemble &ens, const GaussianMixture &init, const SmemOptions &opts);

} // namespace iesis
