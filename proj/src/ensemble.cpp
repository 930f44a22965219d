#include "iesis/ensemble.hpp"

#include <cmath>
#include <limits>

namespace iesis {

VectorXd ensemble_mean(const Ensemble &ens) {
    return ens.samples.rowwise().sum() / static_cast<double>(ens.n_e());
}

MatrixXd mc_cov_theta(const Ensemble &ens) {
    MatrixXd dev = ens.samples.colwise() - ensemble_mean(ens);
    return dev * dev.transpose() / static_cast<double>(ens.n_e());
}

MatrixXd mc_cross_cov(const Ensemble &ens, const MatrixXd &predictions) {
    require(predictions.cols() == ens.n_e(), "prediction count does not match ensemble");
    VectorXd pred_mean = predictions.rowwise().sum() / static_cast<double>(predictions.cols());
    MatrixXd dev_t = ens.samples.colwise() - ensemble_mean(ens);
    MatrixXd dev_d = predictions.colwise() - pred_mean;
    return dev_t * dev_d.transpose() / static_cast<double>(ens.n_e());
}

MatrixXd mc_data_cov(const MatrixXd &predictions) {
    VectorXd pred_mean = predictions.rowwise().sum() / static_cast<double>(predictions.cols());
    MatrixXd dev = predictions.colwise() - pred_mean;
    return dev * dev.transpose() / static_cast<double>(predictions.cols());
}

ComponentCovs weighted_mc_covs(const Ensemble &ens, const MatrixXd &predictions,
                               const VectorXd &gamma_row, const VectorXd &theta_center,
                               const VectorXd &pred_center) {
    require(gamma_row.size() == ens.n_e(), "membership row size mismatch");
    require(predictions.cols() == ens.n_e(), "prediction count does not match ensemble");
    require(theta_center.size() == ens.n_theta(), "theta center size mismatch");
    require(pred_center.size() == predictions.rows(), "prediction center size mismatch");

    ComponentCovs out;
    out.n_i = gamma_row.sum();
    if (!(out.n_i > 0.0))
        throw ValidationError("degenerate component: membership mass is zero");

    MatrixXd dev_t = ens.samples.colwise() - theta_center;
    MatrixXd dev_d = predictions.colwise() - pred_center;
    MatrixXd wdev_t = dev_t.array().rowwise() * gamma_row.transpose().array();
    out.c_theta = wdev_t * dev_t.transpose() / out.n_i;
    out.c_theta_d = wdev_t * dev_d.transpose() / out.n_i;
    MatrixXd wdev_d = dev_d.array().rowwise() * gamma_row.transpose().array();
    out.c_dd = wdev_d * dev_d.transpose() / out.n_i;
    return out;
}

WeightVector normalize_weights(const VectorXd &log_ratios, double rho) {
    require(rho > 0.0, "weight scale rho must be positive");
    const Eigen::Index n = log_ratios.size();
    require(n > 0, "empty weight vector");

    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
        bool ok = std::isfinite(log_ratios[j]) ||
                  log_ratios[j] == -std::numeric_limits<double>::infinity();
        require(ok, "log weight ratios must be finite or -inf");
        m = std::max(m, log_ratios[j] / rho);
    }
    if (m == -std::numeric_limits<double>::infinity())
        throw ValidationError("degenerate weights: every log ratio is -inf");

    WeightVector out;
    out.w.resize(n);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        double e = std::exp(log_ratios[j] / rho - m);
        out.w[j] = e;
        total += e;
    }
    out.w /= total;
    return out;
}

std::vector<int> systematic_resample_counts(const VectorXd &weights, int n_draws, double u0) {
    const Eigen::Index n = weights.size();
    std::vector<int> counts(static_cast<size_t>(n), 0);
    double cum = 0.0;
    Eigen::Index j = 0;
    for (int k = 0; k < n_draws; ++k) {
        double pos = (u0 + k) / n_draws;
        while (j < n - 1 && cum + weights[j] <= pos)
            cum += weights[j++];
        ++counts[static_cast<size_t>(j)];
    }
    return counts;
}

Ensemble systematic_resample(const Ensemble &ens, const WeightVector &weights, RngStream &rng) {
    require(weights.w.size() == ens.n_e(), "weight count does not match ensemble");
    require(std::abs(weights.w.sum() - 1.0) < 1e-9, "weights must be normalized");
    auto counts =
        systematic_resample_counts(weights.w, static_cast<int>(ens.n_e()), rng.uniform());
    MatrixXd out(ens.n_theta(), ens.n_e());
    Eigen::Index col = 0;
    for (Eigen::Index j = 0; j < ens.n_e(); ++j)
        for (int c = 0; c < counts[static_cast<size_t>(j)]; ++c)
            out.col(col++) = ens.samples.col(j);
    return Ensemble(std::move(out));
}

} // namespace iesis
