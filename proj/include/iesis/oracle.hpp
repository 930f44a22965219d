#pragma once

#include "iesis/gmm.hpp"

namespace iesis {

struct LinearModel {
    MatrixXd g;   // N_d x N_theta
    MatrixXd c_d; // observation covariance, SPD
};

// Exact posterior for a linear forward map and Gaussian-mixture prior:
//   mu_i^a    = (G^T C_D^-1 G + Sigma_i^-1)^-1 (G^T C_D^-1 d + Sigma_i^-1 mu_i)
//   Sigma_i^a = (G^T C_D^-1 G + Sigma_i^-1)^-1
//   pi_i^a   ~ pi_i N(d | G mu_i, G Sigma_i G^T + C_D), normalized.
GaussianMixture linear_gmm_posterior(const LinearModel &model, const VectorXd &d,
                                     const GaussianMixture &prior);

struct QuadratureGrid {
    VectorXd lower; // per-dimension bounds
    VectorXd upper;
    int points_per_dim = 801;
};

struct GriddedDensity {
    std::vector<VectorXd> points; // evaluation locations
    VectorXd density;             // normalized to unit mass (trapezoid rule)
    VectorXd mean;
};

// Brute-force posterior on a tensor grid (dimension 1 or 2 only): pointwise
// prior * likelihood, trapezoid-normalized. Independent of
// linear_gmm_posterior by construction.
GriddedDensity quadrature_posterior(const LinearModel &model, const VectorXd &d,
                                    const GaussianMixture &prior, const QuadratureGrid &grid);

double mixture_pdf(const GaussianMixture &mixture, const VectorXd &x);

} // namespace iesis
