#include "iesis/drivers.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <iostream>

namespace iesis {

Ensemble draw_prior_ensemble(const PriorSpec &prior, int n_e, RngStream &rng) {
    require(n_e >= 2, "ensemble size must be at least 2");
    Eigen::LLT<MatrixXd> llt(prior.c_theta);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("prior covariance is not positive definite");
    MatrixXd xi = rng.normal_matrix(prior.theta_pr.size(), n_e);
    return Ensemble((MatrixXd(llt.matrixL()) * xi).colwise() + prior.theta_pr);
}

MatrixXd evaluate_members(const ForwardFn &forward, const Ensemble &ens, unsigned n_threads) {
    // first member sizes the output, the rest fill their own columns
    VectorXd first = forward(ens.samples.col(0));
    MatrixXd predictions(first.size(), ens.n_e());
    predictions.col(0) = first;
    parallel_for(
        ens.n_e() - 1,
        [&](Eigen::Index j) { predictions.col(j + 1) = forward(ens.samples.col(j + 1)); },
        n_threads);
    return predictions;
}

namespace {

// members whose predictions are non-finite are redrawn from the prior
int sanitize_members(Ensemble &ens, MatrixXd &predictions, const ForwardFn &forward,
                     const PriorSpec &prior, RngStream &redraw_rng) {
    int replaced = 0;
    Eigen::LLT<MatrixXd> llt(prior.c_theta);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("prior covariance is not positive definite");
    MatrixXd chol = llt.matrixL();
    for (Eigen::Index j = 0; j < ens.n_e(); ++j) {
        int attempts = 0;
        while (!predictions.col(j).allFinite()) {
            if (++attempts > 10)
                throw SolverError("member " + std::to_string(j) +
                                  " keeps producing non-finite predictions");
            ens.samples.col(j) =
                prior.theta_pr + chol * redraw_rng.normal_vector(ens.n_theta());
            predictions.col(j) = forward(ens.samples.col(j));
            ++replaced;
        }
    }
    if (replaced > 0)
        std::cerr << "ies-is: replaced " << replaced
                  << " member(s) with prior redraws after non-finite predictions\n";
    return replaced;
}

VectorXd evaluate_costs(const Ensemble &samples, const MatrixXd &predictions,
                        const PriorSpec &prior, const ObservationSetup &obs) {
    VectorXd w(samples.n_e());
    for (Eigen::Index j = 0; j < samples.n_e(); ++j)
        w[j] = quadratic_cost(samples.samples.col(j), predictions.col(j), prior, obs);
    return w;
}

double effective_sample_size(const WeightVector &w) {
    return 1.0 / w.w.array().square().sum();
}

Ensemble guarded_resample(const Ensemble &importance, const WeightVector &w,
                          double ess_floor_fraction, RngStream &rng, int iteration) {
    if (effective_sample_size(w) >= ess_floor_fraction * static_cast<double>(importance.n_e()))
        return systematic_resample(importance, w, rng);
    std::cerr << "ies-is: iteration " << iteration
              << ": weight ESS below floor, keeping the equal-weighted importance ensemble\n";
    return importance;
}

} // namespace

GmmRunResult run_gmm_ies_is(const GmmDriverConfig &config, const RngFactory &rng,
                            const GmmIterationSink &sink) {
    require(static_cast<bool>(config.forward), "forward model is required");
    require(config.controls.lambda0 > 0.0 && config.controls.nu > 1.0,
            "damping schedule requires lambda0 > 0 and nu > 1");
    require(config.smem.k_min >= 1 && config.smem.k_max >= config.smem.k_min,
            "component bounds require k_min <= k_max");
    const unsigned threads = std::max(1u, config.controls.n_threads);
    const bool single_component = config.smem.k_max == 1;

    GmmRunResult result;
    auto prior_rng = rng.stream("prior");
    Ensemble ens = draw_prior_ensemble(config.prior, config.n_e, prior_rng);

    {
        GmmIterationRecord rec;
        rec.iteration = 0;
        rec.lambda = config.controls.lambda0;
        rec.k = 1;
        rec.mixture.weights = VectorXd::Ones(1);
        rec.mixture.means = {ensemble_mean(ens)};
        rec.mixture.covs = {mc_cov_theta(ens)};
        rec.point_est = rec.mixture.means[0];
        rec.ensemble = ens;
        result.iterations.push_back(rec);
        if (sink)
            sink(result.iterations.back());
    }

    for (int l = 0; l < config.controls.max_iter; ++l) {
        const double lambda = config.controls.lambda0 / std::pow(config.controls.nu, l);
        MatrixXd predictions = evaluate_members(config.forward, ens, threads);
        auto redraw_rng = rng.stream("redraw", l);
        int replaced =
            sanitize_members(ens, predictions, config.forward, config.prior, redraw_rng);

        // clustering step: mixture forecast and memberships for this iteration
        GaussianMixture forecast;
        MatrixXd gamma;
        std::vector<VectorXd> theta_centers, pred_centers;
        if (single_component) {
            forecast.weights = VectorXd::Ones(1);
            forecast.means = {ensemble_mean(ens)};
            forecast.covs = {mc_cov_theta(ens)};
            gamma = MatrixXd::Ones(1, ens.n_e());
            theta_centers = {forecast.means[0]};
            pred_centers = {predictions.rowwise().sum() /
                            static_cast<double>(predictions.cols())};
        } else {
            auto init_rng = rng.stream("smem_init", l);
            GaussianMixture init =
                init_mixture_from_ensemble(ens, config.smem.k_max, init_rng);
            SmemResult fit = smem_fit(ens, init, config.smem);
            forecast = fit.mixture;
            gamma = fit.gamma;
            for (int i = 0; i < forecast.k(); ++i) {
                theta_centers.push_back(forecast.means[static_cast<size_t>(i)]);
                pred_centers.push_back(config.forward(theta_centers.back()));
            }
        }
        const int k = forecast.k();

        std::vector<Ensemble> per_model;
        MatrixXd model_weights(k, ens.n_e());
        std::vector<int> kept_models;
        for (int i = 0; i < k; ++i) {
            double n_i = gamma.row(i).sum();
            if (!(n_i > 1e-12 * static_cast<double>(ens.n_e()))) {
                std::cerr << "ies-is: skipping degenerate model " << i << " at iteration " << l
                          << "\n";
                continue;
            }
            IesUpdate update =
                ies_update_component(ens, predictions, gamma.row(i).transpose(),
                                     theta_centers[static_cast<size_t>(i)],
                                     pred_centers[static_cast<size_t>(i)], config.prior, lambda,
                                     config.obs);
            MatrixXd xi = rng.stream("xi", l, i).normal_matrix(ens.n_theta(), ens.n_e());
            Ensemble importance = implicit_map(update.map_point, update.h_inv, xi);
            MatrixXd imp_pred = evaluate_members(config.forward, importance, threads);
            VectorXd costs = evaluate_costs(importance, imp_pred, config.prior, config.obs);
            WeightVector w = is_weights(xi, costs, config.controls.rho);
            auto resample_rng = rng.stream("resample", l, i);
            per_model.push_back(guarded_resample(importance, w,
                                                 config.controls.resample_ess_floor,
                                                 resample_rng, l));
            model_weights.row(static_cast<int>(kept_models.size())) = w.w.transpose();
            kept_models.push_back(i);
        }
        if (per_model.empty())
            throw SolverError("every mixture model degenerated at iteration " +
                              std::to_string(l));
        MatrixXd gamma_kept(static_cast<Eigen::Index>(kept_models.size()), ens.n_e());
        for (size_t p = 0; p < kept_models.size(); ++p)
            gamma_kept.row(static_cast<Eigen::Index>(p)) = gamma.row(kept_models[p]);
        if (static_cast<int>(kept_models.size()) < k) {
            // re-normalize the membership columns over surviving models
            for (Eigen::Index j = 0; j < gamma_kept.cols(); ++j) {
                double s = gamma_kept.col(j).sum();
                gamma_kept.col(j) = s > 0.0
                                        ? VectorXd(gamma_kept.col(j) / s)
                                        : VectorXd::Constant(gamma_kept.rows(),
                                                             1.0 / gamma_kept.rows());
            }
        }
        model_weights.conservativeResize(static_cast<Eigen::Index>(kept_models.size()),
                                         Eigen::NoChange);

        Ensemble combined = combine_ensembles(per_model, gamma_kept);
        GaussianMixture analysis =
            gmm_analysis_update(per_model, gamma_kept, config.forward, config.obs,
                                config.fd_step, threads);

        double shift = (ensemble_mean(combined) - ensemble_mean(ens)).norm();
        ens = combined;

        GmmIterationRecord rec;
        rec.iteration = l + 1;
        rec.lambda = config.controls.lambda0 / std::pow(config.controls.nu, l + 1);
        rec.k = static_cast<int>(kept_models.size());
        rec.mixture = analysis;
        rec.point_est = point_estimate(analysis);
        rec.ensemble = ens;
        rec.model_weights = model_weights;
        rec.predictions = predictions;
        rec.mean_shift = shift;
        rec.replaced_members = replaced;
        result.iterations.push_back(rec);
        if (sink)
            sink(result.iterations.back());

        if (shift < config.controls.eps_stop) {
            result.converged = true;
            break;
        }
    }

    const auto &last = result.iterations.back();
    result.posterior = last.mixture;
    result.point_est = last.point_est;
    result.final_ensemble = last.ensemble;
    return result;
}

VectorXd FieldPipeline::raw_log_field(const VectorXd &theta, const DctBasis &basis) const {
    return synthesize(theta, basis);
}

VectorXd FieldPipeline::project_log_field(const VectorXd &raw) const {
    double span = value_high - value_low;
    require(span > 0.0, "field pipeline requires value_high > value_low");
    // Normalize the indicator field by its own range so the projection can
    // snap a contrast-shrunk estimate onto the facies values; a nearly flat
    // field falls back to the fixed facies bounds.
    double lo = value_low, hi = value_high;
    double est_lo = raw.minCoeff(), est_hi = raw.maxCoeff();
    if (est_hi - est_lo >= 0.5 * span) {
        lo = est_lo;
        hi = est_hi;
    }
    double pp_span = pp.upper - pp.lower;
    VectorXd normalized = (pp.lower + pp_span * (raw.array() - lo) / (hi - lo)).matrix();
    VectorXd projected = project_field(normalized, pp);
    return (value_low + span * (projected.array() - pp.lower) / pp_span).matrix();
}

VectorXd FieldPipeline::post_log_field(const VectorXd &theta, const DctBasis &basis) const {
    return project_log_field(raw_log_field(theta, basis));
}

DctRunResult run_dct_ies_is(const DctDriverConfig &config, const RngFactory &rng,
                            const DctIterationSink &sink) {
    require(static_cast<bool>(config.forward_field), "field forward model is required");
    require(config.prior.theta_pr.size() == config.basis.n_c(),
            "prior dimension must match basis truncation");
    require(config.alpha_reduce > 0.0 && config.alpha_reduce <= 1.0,
            "reduction threshold must lie in (0,1]");
    const unsigned threads = std::max(1u, config.controls.n_threads);
    const int n_c = static_cast<int>(config.basis.n_c());

    DctBasis basis = config.basis;
    PriorSpec prior = config.prior;
    std::vector<int> live(static_cast<size_t>(n_c));
    for (int c = 0; c < n_c; ++c)
        live[static_cast<size_t>(c)] = c;

    auto embed_full = [&](const VectorXd &reduced) {
        VectorXd full = VectorXd::Zero(n_c);
        for (size_t p = 0; p < live.size(); ++p)
            full[live[p]] = reduced[static_cast<Eigen::Index>(p)];
        return full;
    };
    auto forward_theta = [&](const VectorXd &theta) {
        return config.forward_field(config.field.raw_log_field(theta, basis));
    };

    DctRunResult result;
    auto prior_rng = rng.stream("prior");
    Ensemble ens = draw_prior_ensemble(prior, config.n_e, prior_rng);

    {
        DctIterationRecord rec;
        rec.iteration = 0;
        rec.lambda = config.controls.lambda0;
        rec.ensemble = ens;
        rec.retained = live;
        rec.mean_full = embed_full(ensemble_mean(ens));
        rec.mean_log_field = config.field.post_log_field(ensemble_mean(ens), basis);
        result.iterations.push_back(rec);
        if (sink)
            sink(result.iterations.back());
    }

    VectorXd prev_mean_full = embed_full(ensemble_mean(ens));
    for (int l = 0; l < config.controls.max_iter; ++l) {
        const double lambda = config.controls.lambda0 / std::pow(config.controls.nu, l);
        MatrixXd predictions = evaluate_members(forward_theta, ens, threads);
        auto redraw_rng = rng.stream("redraw", l);
        int replaced = sanitize_members(ens, predictions, forward_theta, prior, redraw_rng);

        IesUpdate update = ies_update_gaussian(ens, predictions, prior, lambda, config.obs);
        MatrixXd xi = rng.stream("xi", l).normal_matrix(ens.n_theta(), ens.n_e());
        Ensemble importance = implicit_map(update.map_point, update.h_inv, xi);
        MatrixXd imp_pred = evaluate_members(forward_theta, importance, threads);
        VectorXd costs = evaluate_costs(importance, imp_pred, prior, config.obs);
        WeightVector w = is_weights(xi, costs, config.controls.rho);
        auto resample_rng = rng.stream("resample", l);
        Ensemble resampled =
            guarded_resample(importance, w, config.controls.resample_ess_floor, resample_rng, l);

        // dynamic dimension reduction on the resampled mean
        VectorXd mean_reduced = ensemble_mean(resampled);
        std::vector<int> keep = reduce_dimension(mean_reduced, config.alpha_reduce);
        double total_mass = mean_reduced.cwiseAbs().sum();
        double kept_mass = 0.0;
        for (int p : keep)
            kept_mass += std::abs(mean_reduced[p]);
        if (static_cast<Eigen::Index>(keep.size()) < resampled.n_theta()) {
            MatrixXd shrunk(static_cast<Eigen::Index>(keep.size()), resampled.n_e());
            std::vector<int> new_live(keep.size());
            for (size_t p = 0; p < keep.size(); ++p) {
                shrunk.row(static_cast<Eigen::Index>(p)) = resampled.samples.row(keep[p]);
                new_live[p] = live[static_cast<size_t>(keep[p])];
            }
            resampled = Ensemble(std::move(shrunk));
            live = std::move(new_live);
            basis = basis.subset(keep);
            prior = prior.subset(keep);
        }

        ens = resampled;

        VectorXd mean_full = embed_full(ensemble_mean(ens));
        double shift = (mean_full - prev_mean_full).norm();
        prev_mean_full = mean_full;

        DctIterationRecord rec;
        rec.iteration = l + 1;
        rec.lambda = config.controls.lambda0 / std::pow(config.controls.nu, l + 1);
        rec.ensemble = ens;
        rec.retained = live;
        rec.mean_full = mean_full;
        rec.weights = w.w;
        rec.mean_log_field = config.field.post_log_field(ensemble_mean(ens), basis);
        rec.predictions = predictions;
        rec.mean_shift = shift;
        rec.discarded_mass = total_mass > 0.0 ? 1.0 - kept_mass / total_mass : 0.0;
        rec.replaced_members = replaced;
        result.iterations.push_back(rec);
        if (sink)
            sink(result.iterations.back());

        if (shift < config.controls.eps_stop) {
            result.converged = true;
            break;
        }
    }

    result.final_ensemble = result.iterations.back().ensemble;
    result.retained = live;
    result.mean_log_field = result.iterations.back().mean_log_field;
    return result;
}

} // namespace iesis
