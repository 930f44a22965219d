#include <CLI11.hpp>
#include <iostream>

#include "iesis/experiments.hpp"
#include "iesis/oracle.hpp"

namespace {

int run_command(const std::string &config_path, std::optional<std::uint64_t> seed,
                const std::string &out_dir) {
    iesis::ExperimentConfig config = iesis::load_config(config_path);
    if (seed)
        config.seed = *seed;
    if (!out_dir.empty())
        config.output_dir = out_dir;
    iesis::RunOutputs outputs = iesis::run_experiment(config);

    std::cout << "run complete: " << iesis::to_string(config.kind) << "\n";
    std::cout << "output directory: " << outputs.out_dir.string() << "\n";
    if (!outputs.eps_theta.empty())
        std::cout << "final eps_theta: " << outputs.eps_theta.back() << "\n";
    if (!outputs.field_error.empty())
        std::cout << "final field error: " << outputs.field_error.back() << "\n";
    if (!outputs.retained_dims.empty())
        std::cout << "final retained dimension: " << outputs.retained_dims.back() << "\n";
    return 0;
}

// exercises the closed-form mixture posterior against brute-force quadrature
int oracle_command(std::uint64_t seed) {
    iesis::RngStream rng(seed);

    iesis::GaussianMixture prior;
    prior.weights.resize(2);
    prior.weights << 0.4, 0.6;
    prior.means = {iesis::VectorXd::Constant(1, -1.5 + 0.2 * rng.normal()),
                   iesis::VectorXd::Constant(1, 2.0 + 0.2 * rng.normal())};
    prior.covs = {iesis::MatrixXd::Constant(1, 1, 0.8), iesis::MatrixXd::Constant(1, 1, 1.3)};

    iesis::LinearModel model;
    model.g = iesis::MatrixXd::Constant(1, 1, 1.0);
    model.c_d = iesis::MatrixXd::Constant(1, 1, 0.5);
    iesis::VectorXd d = iesis::VectorXd::Constant(1, 0.7);

    auto posterior = iesis::linear_gmm_posterior(model, d, prior);
    iesis::QuadratureGrid grid;
    grid.lower = iesis::VectorXd::Constant(1, -12.0);
    grid.upper = iesis::VectorXd::Constant(1, 12.0);
    grid.points_per_dim = 4001;
    auto quad = iesis::quadrature_posterior(model, d, prior, grid);

    double sup = 0.0;
    for (size_t p = 0; p < quad.points.size(); ++p)
        sup = std::max(sup, std::abs(quad.density[static_cast<Eigen::Index>(p)] -
                                     iesis::mixture_pdf(posterior, quad.points[p])));

    std::cout << "posterior weights:";
    for (int i = 0; i < posterior.k(); ++i)
        std::cout << " " << posterior.weights[i];
    std::cout << "\nposterior means:";
    for (int i = 0; i < posterior.k(); ++i)
        std::cout << " " << posterior.means[static_cast<size_t>(i)][0];
    std::cout << "\nsup-norm difference vs quadrature: " << sup << "\n";
    if (sup >= 1e-3) {
        std::cerr << "oracle disagreement above tolerance\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"ensemble-based implicit sampling for Bayesian inverse problems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    auto *run = app.add_subcommand("run", "run a twin experiment from a config file");
    run->add_option("--config", config_path, "path to a JSON config")->required();
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--out", out_dir, "override the output directory");

    std::string oracle_config;
    auto *oracle = app.add_subcommand("oracle", "check the analytic mixture posterior");
    oracle->add_option("--config", oracle_config, "optional config supplying the seed");

    std::string describe_name;
    auto *describe = app.add_subcommand("describe", "print resolved defaults for an experiment");
    describe->add_option("experiment", describe_name, "experiment name")->required();

    try {
        app.parse(argc, argv);
        if (run->parsed())
            return run_command(config_path, seed, out_dir);
        if (oracle->parsed()) {
            std::uint64_t seed_value = 1234;
            if (!oracle_config.empty())
                seed_value = iesis::load_config(oracle_config).seed;
            return oracle_command(seed_value);
        }
        if (describe->parsed()) {
            auto kind = iesis::experiment_kind_from_string(describe_name);
            std::cout << iesis::config_to_json(iesis::default_config(kind));
            return 0;
        }
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    } catch (const iesis::ValidationError &e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const iesis::SolverError &e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const iesis::FactorizationError &e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
