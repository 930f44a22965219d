#pragma once

#include "iesis/ensemble.hpp"

namespace iesis {

struct IntervalSummary {
    double lower95 = 0.0; // 2.5%
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    double upper95 = 0.0; // 97.5%
};

double relative_error(const VectorXd &estimate, const VectorXd &truth);

// linear-interpolated empirical quantile (q in [0,1]) of unsorted values
double quantile(VectorXd values, double q);
double weighted_quantile(const VectorXd &values, const VectorXd &weights, double q);

IntervalSummary summarize(const VectorXd &values);
std::vector<IntervalSummary> ensemble_percentiles(const Ensemble &ens);
std::vector<IntervalSummary> ensemble_percentiles(const Ensemble &ens, const VectorXd &weights);

struct PredictionIntervals {
    std::vector<IntervalSummary> credible;   // predicted-state quantiles
    std::vector<IntervalSummary> prediction; // with observation noise added
};

// predictions: N_d x N_e member predictions; sigma the observation noise std
PredictionIntervals prediction_intervals(const MatrixXd &predictions, double sigma,
                                         RngStream &rng);

// pointwise ensemble standard deviation, 1/N_e convention;
// states: n_cells x n_members
VectorXd state_std_field(const MatrixXd &states);

} // namespace iesis
