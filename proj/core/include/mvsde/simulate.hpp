#pragma once

#include <functional>
#include <vector>

#include "mvsde/dataset.hpp"
#include "mvsde/drift.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

/// Drift evaluated at (x, population, t). The population argument is null
/// when the caller declared the drift population-free.
using DriftFn =
    std::function<std::vector<double>(std::span<const double>, const Population*, double)>;

DriftFn drift_fn(const TrueDrift& d);
/// Adapter over a trained model; `scratch` and `rng` must outlive the
/// returned callable.
DriftFn drift_fn(const DriftModel& m, Graph& scratch, Rng& rng);

/// Euler-Maruyama over the given grid:
///   X_{j+1} = X_j + b(X_j, pop_j, t_j) dt_j + sigma dW,  dW ~ N(0, dt_j I).
/// With `mean_field` set, pop_j is the simultaneous particle cloud at step j.
/// Throws NumericError with the step index if a state goes non-finite.
TrajectoryDataset euler_maruyama(const DriftFn& drift, bool mean_field,
                                 const std::vector<std::vector<double>>& init,
                                 const std::vector<double>& times, double sigma, Rng& rng);

/// Brownian bridge between fixed endpoints on a uniform inner grid.
struct BridgeSpec {
    std::vector<double> a;
    std::vector<double> b;
    double t0 = 0.0;
    double t1 = 1.0;
    int inner_steps = 1;  // J; the path has J+1 points
    double sigma = 1.0;
};

/// Exact sequential conditional-Gaussian sampling; endpoints are pinned
/// exactly, sigma = 0 degenerates to the straight line.
std::vector<std::vector<double>> sample_bridge(const BridgeSpec& spec, Rng& rng);

/// Synthetic dataset generator with the benchmark systems' parameters.
struct GeneratorSpec {
    TrueDrift drift;
    double sigma = 1.0;
    double T = 5.0;
    double dt = 0.05;
    int particles = 20;
    int irregular = 0;       // N', 0 keeps the full grid
    double noise_std = 0.0;  // additive Gaussian observation noise
    int jump_count = 0;      // JumpOU only
    std::uint64_t seed = 0;

    // Optional explicit jump schedule; when empty, jump times are uniform in
    // (0, T) and sizes exp(Uniform(2, 3)).
    std::vector<double> jump_times;
    std::vector<double> jump_sizes;

    /// Table defaults for the named system.
    static GeneratorSpec defaults(TrueDrift::System system);
};

struct Generated {
    TrajectoryDataset data;
    std::vector<int> jump_steps;      // grid indices where a jump was applied
    std::vector<double> jump_sizes;   // matching sizes
};

/// Simulates the system on the grid {0, dt, ..., T}, injects jumps (JumpOU),
/// adds observation noise, and applies irregular subsampling (exponential
/// inter-arrival with mean T/N', snapped to the grid, endpoints retained).
Generated generate(const GeneratorSpec& spec);

/// Initial-condition sampler used by generate() and by trajectory generation
/// from a trained drift.
std::vector<std::vector<double>> sample_initial(TrueDrift::System system, int n, Rng& rng);

/// Eight-Gaussian mixture: means on the radius-2 octagon (repeated across
/// coordinate pairs for d > 2), unit variance.
std::vector<std::vector<double>> sample_eight_gaussians(int n, int dim, Rng& rng);

/// Generative training pairs: N(0, I) draws randomly matched to the given
/// terminal samples, observed at t = 0 and t = T only.
TrajectoryDataset make_generative_pairs(const std::vector<std::vector<double>>& terminal,
                                        double horizon, Rng& rng);

}  // namespace mvsde
