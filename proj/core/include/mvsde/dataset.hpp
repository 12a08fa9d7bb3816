#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsde/drift.hpp"

namespace mvsde {

/// N particles x K time stamps x d dimensions plus the time grid.
/// An optional observation mask marks which (particle, time) pairs are
/// observed; when present it always includes the first and last stamp.
struct TrajectoryDataset {
    std::vector<double> times;   // strictly increasing, length K
    std::vector<double> states;  // N * K * d, particle-major
    int n_particles = 0;
    int dim = 0;
    std::optional<std::vector<std::uint8_t>> mask;  // N * K

    int n_times() const { return static_cast<int>(times.size()); }

    std::span<double> state(int i, int j) {
        return {states.data() + (static_cast<std::size_t>(i) * n_times() + j) * dim,
                static_cast<std::size_t>(dim)};
    }
    std::span<const double> state(int i, int j) const {
        return {states.data() + (static_cast<std::size_t>(i) * n_times() + j) * dim,
                static_cast<std::size_t>(dim)};
    }

    bool observed(int i, int j) const {
        return !mask || (*mask)[static_cast<std::size_t>(i) * n_times() + j] != 0;
    }

    std::vector<int> observed_indices(int i) const {
        std::vector<int> idx;
        for (int j = 0; j < n_times(); ++j)
            if (observed(i, j)) idx.push_back(j);
        return idx;
    }

    /// Cross-particle cloud at stamp j (observed particles only).
    Population population_at(int j) const {
        Population pop;
        pop.t = times[j];
        for (int i = 0; i < n_particles; ++i)
            if (observed(i, j)) {
                auto s = state(i, j);
                pop.particles.emplace_back(s.begin(), s.end());
            }
        return pop;
    }

    /// Throws if the invariants do not hold (increasing grid, finite states,
    /// mask endpoints).
    void validate() const;
};

/// CSV with header `particle_id,t,x0,...,x{d-1}`, one row per observed
/// (particle, time), sorted by particle then time, floats with 17 significant
/// digits. Missing rows encode the irregular mask.
void write_dataset(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset read_dataset(const std::string& path);

}  // namespace mvsde
