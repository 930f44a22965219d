#pragma once

#include <optional>

#include "iesis/dct.hpp"
#include "iesis/ies.hpp"
#include "iesis/postprocess.hpp"

namespace iesis {

struct IesControls {
    double lambda0 = 1.0;
    double nu = 2.0;       // lambda_{l+1} = lambda_l / nu
    double rho = 1.0;      // weight scale
    double eps_stop = 1e-3;
    int max_iter = 20;
    unsigned n_threads = 1;
    // Resampling is skipped when the weight ESS falls below this fraction of
    // N_e: duplicating a near-single survivor freezes the implicit map for
    // good (its covariance can only shrink), so the equal-weighted importance
    // ensemble advances instead.
    double resample_ess_floor = 0.05;
};

// --- Gaussian-mixture driver (per-model IES update + implicit sampling) ---

struct GmmDriverConfig {
    PriorSpec prior;
    ObservationSetup obs;
    ForwardFn forward; // must be safe to call concurrently
    IesControls controls;
    SmemOptions smem;
    int n_e = 500;
    double fd_step = 1e-4;
};

struct GmmIterationRecord {
    int iteration = 0;      // 0 is the prior ensemble
    double lambda = 0.0;    // damping used to produce this state
    int k = 0;
    GaussianMixture mixture;
    VectorXd point_est;
    Ensemble ensemble;
    MatrixXd model_weights; // k x N_e importance weights (empty at iteration 0)
    MatrixXd predictions;   // forward evaluations of the incoming ensemble
    double mean_shift = 0.0;
    int replaced_members = 0;
};

struct GmmRunResult {
    std::vector<GmmIterationRecord> iterations;
    GaussianMixture posterior;
    VectorXd point_est;
    Ensemble final_ensemble;
    bool converged = false;
};

using GmmIterationSink = std::function<void(const GmmIterationRecord &)>;

GmmRunResult run_gmm_ies_is(const GmmDriverConfig &config, const RngFactory &rng,
                            const GmmIterationSink &sink = {});

// --- DCT driver (truncated-basis parameterization of a log field) ---

struct FieldPipeline {
    PostProcessSpec pp;
    double value_low = 0.0;  // log field value mapped to the lower pp bound
    double value_high = 1.0; // log field value mapped to the upper pp bound

    // raw synthesis feeds the forward model; the projection sharpens the
    // per-iteration field estimates
    VectorXd raw_log_field(const VectorXd &theta, const DctBasis &basis) const;
    VectorXd post_log_field(const VectorXd &theta, const DctBasis &basis) const;
    VectorXd project_log_field(const VectorXd &raw) const;
};

struct DctDriverConfig {
    DctBasis basis; // initial truncated basis (n_c columns)
    PriorSpec prior; // dimension n_c
    ObservationSetup obs;
    std::function<VectorXd(const VectorXd &)> forward_field; // log field -> data
    FieldPipeline field;
    double alpha_reduce = 0.95;
    IesControls controls;
    int n_e = 500;
};

struct DctIterationRecord {
    int iteration = 0;
    double lambda = 0.0;
    Ensemble ensemble;            // reduced coordinates
    std::vector<int> retained;    // original basis-column index per row
    VectorXd mean_full;           // ensemble mean embedded in the full n_c space
    VectorXd weights;             // importance weights (empty at iteration 0)
    VectorXd mean_log_field;      // post-processed log field of the ensemble mean
    MatrixXd predictions;
    double mean_shift = 0.0;
    double discarded_mass = 0.0;  // |.|-mass dropped by this iteration's reduction
    int replaced_members = 0;
};

struct DctRunResult {
    std::vector<DctIterationRecord> iterations;
    Ensemble final_ensemble;
    std::vector<int> retained;
    VectorXd mean_log_field;
    bool converged = false;
};

using DctIterationSink = std::function<void(const DctIterationRecord &)>;

DctRunResult run_dct_ies_is(const DctDriverConfig &config, const RngFactory &rng,
                            const DctIterationSink &sink = {});

// N_d x N_e forward evaluations, parallel over members
MatrixXd evaluate_members(const ForwardFn &forward, const Ensemble &ens, unsigned n_threads);

Ensemble draw_prior_ensemble(const PriorSpec &prior, int n_e, RngStream &rng);

} // namespace iesis
