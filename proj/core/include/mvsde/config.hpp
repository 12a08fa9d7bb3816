#pragma once

#include <optional>
#include <string>

#include "mvsde/drift.hpp"
#include "mvsde/estimate.hpp"
#include "mvsde/simulate.hpp"

namespace mvsde {

/// Grid request for drift evaluation.
struct EvalSpec {
    std::string grid = "lattice";  // "lattice" | "cloud"
    std::vector<double> lo = {-2.0, -2.0};
    std::vector<double> hi = {2.0, 2.0};
    int steps = 9;
    std::vector<double> times = {0.0};
    std::vector<std::string> metrics = {"drift_mse"};
    std::uint64_t holdout_seed = 9001;
    double holdout_noise = 0.0;
    int gen_particles = 0;  // 0 = match the held-out set
};

/// Declarative description of one experiment: generator, architecture,
/// estimator, evaluation, seed, outputs. Every field has a default matching
/// the benchmark tables; unknown keys are rejected.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::optional<std::string> dataset_path;  // load instead of simulating
    GeneratorSpec generator = GeneratorSpec::defaults(TrueDrift::System::OrnsteinUhlenbeck);
    bool has_generator = true;
    ArchSpec architecture;
    TrainConfig train;

    EvalSpec eval;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

}  // namespace mvsde
