#pragma once

#include <filesystem>
#include <string>

#include "iesis/drivers.hpp"
#include "iesis/forward.hpp"

namespace iesis {

enum class ExperimentKind { source_location, channel_dct, fracture_fractional, custom_linear };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string &name);

struct SensorLayout {
    int count_x = 1;
    int count_y = 1;
    double x_lo = 0.0, x_hi = 1.0;
    double y_lo = 0.0, y_hi = 1.0;

    bool operator==(const SensorLayout &) const = default;
    std::vector<Eigen::Vector2d> locations() const {
        return sensor_grid(count_x, count_y, x_lo, x_hi, y_lo, y_hi);
    }
};

struct LinearProblemSpec {
    int rows = 5;
    int cols = 8;
    std::uint64_t matrix_seed = 99;

    bool operator==(const LinearProblemSpec &) const = default;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::source_location;
    std::uint64_t seed = 1234;
    std::string output_dir = "runs/out";
    int n_e = 500;
    double sigma = 0.01;
    double rho = 1.0;
    double lambda0 = 1.0;
    double nu = 2.0;
    double eps_stop = 1e-3;
    int max_iter = 10;
    int k_min = 2;
    int k_max = 5;
    int inv_nx = 50, inv_ny = 50;
    int data_nx = 100, data_ny = 100;
    double dt = 0.0, data_dt = 0.0; // 0 for steady problems
    double horizon = 0.0;
    double observation_time = 0.0;
    SensorLayout sensors;
    int n_c = 200;
    double alpha_reduce = 0.95;
    bool dct_zigzag = true;
    double tau = 0.75;
    double b1 = 1.0, b2 = 0.0, b3 = 1.0, b4 = 1.0;
    double facies_low = 0.52, facies_high = 3.12;
    double a_frac = 10000.0;
    double source_strength = 0.0; // resolved to exp(2) for source_location
    double source_width = 0.05;
    double constant_source = 10.0;
    LinearProblemSpec linear;
    unsigned n_threads = 0; // 0 = all hardware threads

    bool operator==(const ExperimentConfig &) const = default;
};

// resolved defaults for each experiment kind
ExperimentConfig default_config(ExperimentKind kind);

// Parses, applies per-kind defaults, validates. Unknown keys are an error.
ExperimentConfig load_config(const std::filesystem::path &path);
ExperimentConfig parse_config_json(const std::string &text);
std::string config_to_json(const ExperimentConfig &config);

// truth parameters in physical coordinates (empty for channel_dct)
VectorXd truth_parameters(const ExperimentConfig &config);
// truth permeability on an arbitrary grid (channel facies / fracture embed)
VectorXd truth_log_permeability(const ExperimentConfig &config, const Grid2D &grid);

// fine-grid truth solve observed at the sensors plus N(0, sigma^2) noise
ObservationSetup generate_synthetic_data(const ExperimentConfig &config, const RngFactory &rng);

// the inversion-grid forward map used by the drivers (physical or latent
// parameters, depending on the experiment)
ForwardFn build_forward_model(const ExperimentConfig &config);

// fracture endpoints (x0, y_lo, x0, y_hi) from physical parameters
VectorXd fracture_endpoints(const VectorXd &physical);

struct RunOutputs {
    ExperimentConfig resolved;
    std::filesystem::path out_dir;
    ObservationSetup obs;
    VectorXd truth_params;             // physical parameters (empty for channel)
    VectorXd truth_log_field;          // inversion-grid log permeability (channel)
    std::vector<double> eps_theta;     // per iteration, physical space
    std::vector<double> eps_endpoints; // fracture only
    std::vector<double> field_error;   // channel only: relative L2 of exp(log field)
    std::vector<int> retained_dims;    // channel only
    GmmRunResult gmm;
    DctRunResult dct;
    bool used_dct = false;
};

RunOutputs run_experiment(const ExperimentConfig &config);

// 0/1 facies bitmap rows (row r = y index r, column c = x index c)
const std::vector<std::string> &channel_facies_bitmap();

void write_matrix_csv(const std::filesystem::path &path, const MatrixXd &m);
MatrixXd read_matrix_csv(const std::filesystem::path &path);

} // namespace iesis
