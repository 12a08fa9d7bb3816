#pragma once

#include <vector>

#include "mvsde/dataset.hpp"
#include "mvsde/drift.hpp"

namespace mvsde {

/// Evaluation locations: a uniform lattice over a box, or a held-out data
/// cloud.
struct EvalGrid {
    std::vector<std::vector<double>> points;

    static EvalGrid lattice(const std::vector<double>& lo, const std::vector<double>& hi,
                            int steps_per_dim);
    static EvalGrid from_cloud(const TrajectoryDataset& ds, int time_index);
};

/// Mean over the grid of |b_est - b_true|^2 / d. The population (held-out
/// cloud at t) feeds both sides when they are mean-field.
double drift_mse(const DriftModel& est, const TrueDrift& truth, const EvalGrid& grid,
                 const Population* pop, double t, Rng& rng);

/// Squared energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| with empirical double
/// sums; the within-sample sums exclude the diagonal.
double energy_distance_sq(const std::vector<std::vector<double>>& p,
                          const std::vector<std::vector<double>>& q);

/// CRPS in the energy form E|Y - x| - 0.5 E|Y - Y'| (exact for an empirical
/// ensemble; the within-ensemble mean runs over all n^2 pairs).
double crps(const std::vector<double>& ensemble, double obs);
/// Multivariate observations: coordinatewise CRPS, averaged.
double crps(const std::vector<std::vector<double>>& ensemble, const std::vector<double>& obs);

struct EcdfDistances {
    double mean = 0.0;
    double p75 = 0.0;
    double p90 = 0.0;
    double ks = 0.0;
};

/// |F_A - F_B| at every point of the pooled sample; mean, 75th and 90th
/// percentile, and the supremum (KS).
EcdfDistances ecdf_distances(std::vector<double> a, std::vector<double> b);

}  // namespace mvsde
