#include "mvsde/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

namespace {

double euclid(std::span<const double> x, std::span<const double> y) {
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(q);
}

double mean_cross_dist(const std::vector<std::vector<double>>& p,
                       const std::vector<std::vector<double>>& q) {
    double acc = 0.0;
    for (const auto& x : p)
        for (const auto& y : q) acc += euclid(x, y);
    return acc / (static_cast<double>(p.size()) * static_cast<double>(q.size()));
}

// off-diagonal sum over n^2 pairs; the diagonal is zero so dropping it from
// the sum is cosmetic while the n^2 normalization keeps the statistic exactly
// zero on identical samples
double mean_within_dist(const std::vector<std::vector<double>>& p) {
    const std::size_t n = p.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) acc += euclid(p[i], p[j]);
    return 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace

EvalGrid EvalGrid::lattice(const std::vector<double>& lo, const std::vector<double>& hi,
                           int steps_per_dim) {
    if (lo.size() != hi.size() || lo.empty()) throw ConfigError("grid: bad box");
    if (steps_per_dim < 2) throw ConfigError("grid: need at least 2 steps per dim");
    const int d = static_cast<int>(lo.size());
    EvalGrid grid;
    std::vector<int> idx(d, 0);
    while (true) {
        std::vector<double> p(d);
        for (int c = 0; c < d; ++c)
            p[c] = lo[c] + (hi[c] - lo[c]) * idx[c] / (steps_per_dim - 1);
        grid.points.push_back(std::move(p));
        int c = 0;
        while (c < d && ++idx[c] == steps_per_dim) idx[c++] = 0;
        if (c == d) break;
    }
    return grid;
}

EvalGrid EvalGrid::from_cloud(const TrajectoryDataset& ds, int time_index) {
    EvalGrid grid;
    for (int i = 0; i < ds.n_particles; ++i)
        if (ds.observed(i, time_index)) {
            auto s = ds.state(i, time_index);
            grid.points.emplace_back(s.begin(), s.end());
        }
    if (grid.points.empty()) throw ConfigError("grid: empty cloud");
    return grid;
}

double drift_mse(const DriftModel& est, const TrueDrift& truth, const EvalGrid& grid,
                 const Population* pop, double t, Rng& rng) {
    if (grid.points.empty()) throw ConfigError("drift_mse: empty grid");
    Graph scratch;
    double acc = 0.0;
    const int d = est.dim();
    for (const auto& x : grid.points) {
        const std::vector<double> be = est.eval_value(scratch, x, pop, t, &rng);
        const std::vector<double> bt = truth.eval(x, pop, t);
        for (int c = 0; c < d; ++c) acc += (be[c] - bt[c]) * (be[c] - bt[c]);
    }
    return acc / (static_cast<double>(grid.points.size()) * d);
}

double energy_distance_sq(const std::vector<std::vector<double>>& p,
                          const std::vector<std::vector<double>>& q) {
    if (p.empty() || q.empty()) throw ConfigError("energy_distance: empty sample");
    if (p[0].size() != q[0].size()) throw ConfigError("energy_distance: dimension mismatch");
    return 2.0 * mean_cross_dist(p, q) - mean_within_dist(p) - mean_within_dist(q);
}

double crps(const std::vector<double>& ensemble, double obs) {
    if (ensemble.empty()) throw ConfigError("crps: empty ensemble");
    const double n = static_cast<double>(ensemble.size());
    double to_obs = 0.0;
    for (double y : ensemble) to_obs += std::abs(y - obs);
    double within = 0.0;
    for (double y : ensemble)
        for (double y2 : ensemble) within += std::abs(y - y2);
    return to_obs / n - 0.5 * within / (n * n);
}

double crps(const std::vector<std::vector<double>>& ensemble, const std::vector<double>& obs) {
    if (ensemble.empty()) throw ConfigError("crps: empty ensemble");
    const int d = static_cast<int>(obs.size());
    double acc = 0.0;
    std::vector<double> coord(ensemble.size());
    for (int c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < ensemble.size(); ++i) coord[i] = ensemble[i][c];
        acc += crps(coord, obs[c]);
    }
    return acc / d;
}

EcdfDistances ecdf_distances(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ecdf: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<double> pooled;
    pooled.reserve(a.size() + b.size());
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());

    auto ecdf = [](const std::vector<double>& s, double x) {
        return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) /
               static_cast<double>(s.size());
    };

    std::vector<double> gaps;
    gaps.reserve(pooled.size());
    for (double x : pooled) gaps.push_back(std::abs(ecdf(a, x) - ecdf(b, x)));

    std::sort(gaps.begin(), gaps.end());
    auto percentile = [&gaps](double p) {
        const std::size_t m = gaps.size();
        std::size_t r = static_cast<std::size_t>(std::ceil(p * m));
        if (r == 0) r = 1;
        return gaps[std::min(r, m) - 1];
    };
    EcdfDistances out;
    double total = 0.0;
    for (double g : gaps) total += g;
    out.mean = total / gaps.size();
    out.p75 = percentile(0.75);
    out.p90 = percentile(0.90);
    out.ks = gaps.back();
    return out;
}

}  // namespace mvsde
