#include "iesis/gmm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <iostream>
#include <limits>

namespace iesis {

void GaussianMixture::validate() const {
    require(k() >= 1, "mixture needs at least one component");
    require(static_cast<int>(means.size()) == k() && static_cast<int>(covs.size()) == k(),
            "mixture component counts disagree");
    require(std::abs(weights.sum() - 1.0) < 1e-9, "mixture weights must sum to 1");
    for (int i = 0; i < k(); ++i) {
        require(weights[i] > 0.0, "mixture weights must be positive");
        require(means[i].size() == dim(), "mixture mean dimensions disagree");
        require(covs[i].rows() == dim() && covs[i].cols() == dim(),
                "mixture covariance dimensions disagree");
        Eigen::LLT<MatrixXd> llt(covs[i]);
        if (llt.info() != Eigen::Success)
            throw FactorizationError("mixture covariance is not positive definite");
    }
}

double log_component_pdf(const VectorXd &x, const VectorXd &mu, const MatrixXd &sigma) {
    require(x.size() == mu.size() && sigma.rows() == x.size() && sigma.cols() == x.size(),
            "density dimension mismatch");
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("covariance is not positive definite");
    const auto &l = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i)
        log_det += 2.0 * std::log(l(i, i));
    VectorXd z = llt.matrixL().solve(x - mu);
    double n = static_cast<double>(x.size());
    return -0.5 * (n * std::log(2.0 * M_PI) + log_det + z.squaredNorm());
}

double component_pdf(const VectorXd &x, const VectorXd &mu, const MatrixXd &sigma) {
    return std::exp(log_component_pdf(x, mu, sigma));
}

namespace {

double trace_inverse(const MatrixXd &sigma) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("covariance is not positive definite");
    MatrixXd inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
    return inv.trace();
}

double log_det(const MatrixXd &sigma) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("covariance is not positive definite");
    double out = 0.0;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i)
        out += 2.0 * std::log(llt.matrixL()(i, i));
    return out;
}

MatrixXd pairwise_sq_dists(const MatrixXd &samples) {
    VectorXd sq = samples.colwise().squaredNorm();
    MatrixXd d2 = (-2.0 * samples.transpose() * samples).colwise() + sq;
    d2.rowwise() += sq.transpose();
    return d2.cwiseMax(0.0);
}

} // namespace

double byy_criterion(const GaussianMixture &mixture, double h) {
    double j = 0.0;
    for (int i = 0; i < mixture.k(); ++i) {
        double pi = mixture.weights[i];
        if (pi <= 0.0)
            continue; // dead component contributes nothing in the limit
        j += pi * (0.5 * log_det(mixture.covs[i]) + 0.5 * h * h * trace_inverse(mixture.covs[i]) -
                   std::log(pi));
    }
    return j;
}

MatrixXd e_step(const Ensemble &ens, const GaussianMixture &mixture, int *underflow_columns) {
    const int k = mixture.k();
    const Eigen::Index n_e = ens.n_e();
    require(mixture.dim() == ens.n_theta(), "mixture dimension does not match ensemble");

    MatrixXd log_num(k, n_e);
    for (int i = 0; i < k; ++i) {
        double log_pi = mixture.weights[i] > 0.0 ? std::log(mixture.weights[i])
                                                 : -std::numeric_limits<double>::infinity();
        Eigen::LLT<MatrixXd> llt(mixture.covs[i]);
        if (llt.info() != Eigen::Success)
            throw FactorizationError("covariance is not positive definite");
        double ld = 0.0;
        for (Eigen::Index r = 0; r < mixture.covs[i].rows(); ++r)
            ld += 2.0 * std::log(llt.matrixL()(r, r));
        double n_dim = static_cast<double>(ens.n_theta());
        for (Eigen::Index j = 0; j < n_e; ++j) {
            VectorXd z = llt.matrixL().solve(ens.samples.col(j) - mixture.means[i]);
            log_num(i, j) =
                log_pi - 0.5 * (n_dim * std::log(2.0 * M_PI) + ld + z.squaredNorm());
        }
    }

    int underflows = 0;
    MatrixXd gamma(k, n_e);
    for (Eigen::Index j = 0; j < n_e; ++j) {
        double m = log_num.col(j).maxCoeff();
        if (!std::isfinite(m)) {
            gamma.col(j).setConstant(1.0 / k);
            ++underflows;
            continue;
        }
        VectorXd e = (log_num.col(j).array() - m).exp();
        gamma.col(j) = e / e.sum();
    }
    if (underflows > 0) {
        if (underflow_columns)
            *underflow_columns = underflows;
        std::cerr << "e_step: " << underflows
                  << " sample(s) underflowed every component; memberships set uniform\n";
    } else if (underflow_columns) {
        *underflow_columns = 0;
    }
    return gamma;
}

GaussianMixture m_step(const Ensemble &ens, const MatrixXd &gamma, double h) {
    const int k = static_cast<int>(gamma.rows());
    const Eigen::Index n_e = ens.n_e();
    require(gamma.cols() == n_e, "membership columns do not match ensemble");
    const double ne = static_cast<double>(n_e);

    GaussianMixture out;
    out.weights.resize(k);
    out.means.resize(static_cast<size_t>(k));
    out.covs.resize(static_cast<size_t>(k));
    const MatrixXd reg = h * h * MatrixXd::Identity(ens.n_theta(), ens.n_theta());
    for (int i = 0; i < k; ++i) {
        double mass = gamma.row(i).sum();
        out.weights[i] = mass / ne;
        if (mass <= 0.0) {
            // flagged for screening; placeholders keep the mixture usable
            out.means[static_cast<size_t>(i)] = ensemble_mean(ens);
            out.covs[static_cast<size_t>(i)] =
                reg + 1e-12 * MatrixXd::Identity(ens.n_theta(), ens.n_theta());
            continue;
        }
        VectorXd mu = (ens.samples * gamma.row(i).transpose()) / mass;
        MatrixXd dev = ens.samples.colwise() - mu;
        MatrixXd wdev = dev.array().rowwise() * gamma.row(i).array();
        out.means[static_cast<size_t>(i)] = mu;
        out.covs[static_cast<size_t>(i)] = wdev * dev.transpose() / mass + reg;
    }
    return out;
}

double smoothing_gradient(double h, const Ensemble &ens, const GaussianMixture &mixture) {
    require(h > 0.0, "smoothing parameter must be positive");
    const double n_theta = static_cast<double>(ens.n_theta());

    double tr_term = 0.0;
    for (int i = 0; i < mixture.k(); ++i)
        if (mixture.weights[i] > 0.0)
            tr_term += mixture.weights[i] * trace_inverse(mixture.covs[i]);

    MatrixXd d2 = pairwise_sq_dists(ens.samples);
    MatrixXd kernel = (-0.5 * d2.array() / (h * h)).exp();
    double denom = kernel.sum();
    double pair_term = (kernel.array() * d2.array()).sum() / denom;

    return n_theta / h - h * tr_term - pair_term / (h * h * h);
}

double update_smoothing(double h, const Ensemble &ens, const GaussianMixture &mixture,
                        double eta, double h_floor) {
    double next = h + eta * smoothing_gradient(h, ens, mixture);
    return std::max(next, h_floor);
}

GaussianMixture screen_components(const GaussianMixture &mixture, double eps_screen, int k_min) {
    int k = mixture.k();
    std::vector<int> keep;
    keep.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i)
        keep.push_back(i);
    // discard the smallest offenders first, never dropping below k_min
    while (static_cast<int>(keep.size()) > k_min) {
        int worst = -1;
        double worst_w = eps_screen;
        for (size_t p = 0; p < keep.size(); ++p) {
            if (mixture.weights[keep[p]] < worst_w) {
                worst_w = mixture.weights[keep[p]];
                worst = static_cast<int>(p);
            }
        }
        if (worst < 0)
            break;
        keep.erase(keep.begin() + worst);
    }
    if (static_cast<int>(keep.size()) == k)
        return mixture;

    GaussianMixture out;
    out.weights.resize(static_cast<Eigen::Index>(keep.size()));
    for (size_t p = 0; p < keep.size(); ++p) {
        out.weights[static_cast<Eigen::Index>(p)] = mixture.weights[keep[p]];
        out.means.push_back(mixture.means[static_cast<size_t>(keep[p])]);
        out.covs.push_back(mixture.covs[static_cast<size_t>(keep[p])]);
    }
    out.weights /= out.weights.sum();
    return out;
}

double initial_smoothing(const Ensemble &ens) {
    MatrixXd d2 = pairwise_sq_dists(ens.samples);
    double ne = static_cast<double>(ens.n_e());
    return std::sqrt(d2.sum() / (static_cast<double>(ens.n_theta()) * ne * ne * ne));
}

GaussianMixture init_mixture_from_ensemble(const Ensemble &ens, int k, RngStream &rng) {
    require(k >= 1 && k <= ens.n_e(), "component count out of range");
    MatrixXd cov = mc_cov_theta(ens);
    cov += std::max(1e-12, 1e-12 * cov.trace()) *
           MatrixXd::Identity(ens.n_theta(), ens.n_theta());

    std::vector<Eigen::Index> picked;
    while (static_cast<int>(picked.size()) < k) {
        auto idx = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(ens.n_e()));
        idx = std::min(idx, ens.n_e() - 1);
        if (std::find(picked.begin(), picked.end(), idx) == picked.end())
            picked.push_back(idx);
    }
    GaussianMixture out;
    out.weights = VectorXd::Constant(k, 1.0 / k);
    for (Eigen::Index idx : picked) {
        out.means.push_back(ens.samples.col(idx));
        out.covs.push_back(cov);
    }
    return out;
}

SmemResult smem_fit(const Ensemble &ens, const GaussianMixture &init, const SmemOptions &opts) {
    require(opts.k_min >= 1, "k_min must be at least 1");
    require(init.k() >= opts.k_min, "initial mixture smaller than k_min");

    SmemResult res;
    res.h0 = initial_smoothing(ens);
    if (!(res.h0 > 0.0)) {
        // every member identical: one point mass, nothing to fit
        std::cerr << "smem_fit: degenerate ensemble (all members identical)\n";
        res.degenerate = true;
        res.h = opts.h_floor;
        res.mixture.weights = VectorXd::Ones(1);
        res.mixture.means = {ens.samples.col(0)};
        res.mixture.covs = {res.h * res.h * MatrixXd::Identity(ens.n_theta(), ens.n_theta())};
        res.gamma = MatrixXd::Ones(1, ens.n_e());
        res.criterion = byy_criterion(res.mixture, res.h);
        return res;
    }

    double eta = opts.eta > 0.0 ? opts.eta : 0.01 * res.h0 * res.h0;
    double h = res.h0;
    GaussianMixture q = init;

    // Screen step: drop weights below the threshold, then keep discarding the
    // smallest-weight model while that lowers the selection criterion J.
    auto screen_step = [&](GaussianMixture mix) {
        mix = screen_components(mix, opts.eps_screen, opts.k_min);
        while (mix.k() > opts.k_min) {
            Eigen::Index smallest = 0;
            mix.weights.minCoeff(&smallest);
            GaussianMixture reduced;
            for (int i = 0; i < mix.k(); ++i) {
                if (i == static_cast<int>(smallest))
                    continue;
                reduced.means.push_back(mix.means[static_cast<size_t>(i)]);
                reduced.covs.push_back(mix.covs[static_cast<size_t>(i)]);
            }
            reduced.weights.resize(mix.k() - 1);
            int p = 0;
            for (int i = 0; i < mix.k(); ++i)
                if (i != static_cast<int>(smallest))
                    reduced.weights[p++] = mix.weights[i];
            reduced.weights /= reduced.weights.sum();
            if (byy_criterion(reduced, h) < byy_criterion(mix, h))
                mix = std::move(reduced);
            else
                break;
        }
        return mix;
    };

    double j_prev = byy_criterion(q, h);
    for (int l = 0; l < opts.max_inner_iterations; ++l) {
        q = screen_step(q);
        MatrixXd gamma = e_step(ens, q);
        GaussianMixture q_new = m_step(ens, gamma, h);
        double h_new = update_smoothing(h, ens, q_new, eta, opts.h_floor);
        double j_next = byy_criterion(q_new, h_new);
        if (j_next < j_prev) {
            q = q_new;
            h = h_new;
            j_prev = j_next;
            res.criterion_history.push_back(j_next);
            res.iterations = l + 1;
        } else {
            break;
        }
    }

    res.mixture = screen_step(q);
    res.h = h;
    res.criterion = byy_criterion(res.mixture, h);
    res.gamma = e_step(ens, res.mixture);
    return res;
}

} // namespace iesis
