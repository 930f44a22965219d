#include "iesis/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iesis {

double relative_error(const VectorXd &estimate, const VectorXd &truth) {
    require(estimate.size() == truth.size(), "relative error: size mismatch");
    double denom = truth.norm();
    require(denom > 0.0, "relative error: truth has zero norm");
    return (estimate - truth).norm() / denom;
}

double quantile(VectorXd values, double q) {
    require(values.size() >= 1, "quantile of empty sample");
    require(q >= 0.0 && q <= 1.0, "quantile level out of range");
    std::sort(values.data(), values.data() + values.size());
    double pos = q * static_cast<double>(values.size() - 1);
    auto lo = static_cast<Eigen::Index>(std::floor(pos));
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double weighted_quantile(const VectorXd &values, const VectorXd &weights, double q) {
    require(values.size() == weights.size(), "weighted quantile: size mismatch");
    require(values.size() >= 1, "weighted quantile of empty sample");
    std::vector<Eigen::Index> order(static_cast<size_t>(values.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
    double total = weights.sum();
    require(total > 0.0, "weighted quantile: zero total weight");

    // quantile positions at cumulative-weight midpoints, linear in between
    double cum = 0.0;
    double prev_p = 0.0;
    double prev_v = values[order.front()];
    for (size_t r = 0; r < order.size(); ++r) {
        double w = weights[order[r]] / total;
        double p = cum + 0.5 * w;
        double v = values[order[r]];
        if (q <= p || r + 1 == order.size()) {
            if (r == 0 || p == prev_p)
                return v;
            double t = (q - prev_p) / (p - prev_p);
            return prev_v + std::clamp(t, 0.0, 1.0) * (v - prev_v);
        }
        cum += w;
        prev_p = p;
        prev_v = v;
    }
    return values[order.back()];
}

IntervalSummary summarize(const VectorXd &values) {
    IntervalSummary s;
    s.lower95 = quantile(values, 0.025);
    s.p25 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.p75 = quantile(values, 0.75);
    s.upper95 = quantile(values, 0.975);
    return s;
}

std::vector<IntervalSummary> ensemble_percentiles(const Ensemble &ens) {
    std::vector<IntervalSummary> out;
    out.reserve(static_cast<size_t>(ens.n_theta()));
    for (Eigen::Index r = 0; r < ens.n_theta(); ++r)
        out.push_back(summarize(ens.samples.row(r).transpose()));
    return out;
}

std::vector<IntervalSummary> ensemble_percentiles(const Ensemble &ens, const VectorXd &weights) {
    std::vector<IntervalSummary> out;
    out.reserve(static_cast<size_t>(ens.n_theta()));
    for (Eigen::Index r = 0; r < ens.n_theta(); ++r) {
        VectorXd v = ens.samples.row(r).transpose();
        IntervalSummary s;
        s.lower95 = weighted_quantile(v, weights, 0.025);
        s.p25 = weighted_quantile(v, weights, 0.25);
        s.median = weighted_quantile(v, weights, 0.5);
        s.p75 = weighted_quantile(v, weights, 0.75);
        s.upper95 = weighted_quantile(v, weights, 0.975);
        out.push_back(s);
    }
    return out;
}

PredictionIntervals prediction_intervals(const MatrixXd &predictions, double sigma,
                                         RngStream &rng) {
    require(sigma >= 0.0, "noise std must be nonnegative");
    PredictionIntervals out;
    MatrixXd noisy = predictions;
    for (Eigen::Index j = 0; j < noisy.cols(); ++j)
        for (Eigen::Index i = 0; i < noisy.rows(); ++i)
            noisy(i, j) += sigma * rng.normal();
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
        out.credible.push_back(summarize(predictions.row(i).transpose()));
        out.prediction.push_back(summarize(noisy.row(i).transpose()));
    }
    return out;
}

VectorXd state_std_field(const MatrixXd &states) {
    require(states.cols() >= 2, "std field needs at least two members");
    VectorXd mean = states.rowwise().mean();
    VectorXd var = VectorXd::Zero(states.rows());
    for (Eigen::Index j = 0; j < states.cols(); ++j)
        var += (states.col(j) - mean).cwiseAbs2();
    var /= static_cast<double>(states.cols());
    return var.cwiseSqrt();
}

} // namespace iesis
