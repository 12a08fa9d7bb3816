#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvsde/dataset.hpp"
#include "mvsde/drift.hpp"
#include "mvsde/simulate.hpp"

namespace mvsde {

enum class Estimator { Mle, Bridge, MarginalLaw, FokkerPlanck };

Estimator estimator_from_string(const std::string& s);
std::string to_string(Estimator e);

struct TrainConfig {
    Estimator estimator = Estimator::Mle;
    int epochs = 500;
    int batch_size = 10;  // particles per batch
    double lr = 1e-4;
    double eps = 1e-4;
    double gamma = 0.9998;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double sigma = 1.0;  // known diffusion constant
    std::uint64_t seed = 0;
    double clip_norm = 0.0;  // 0 disables; every clip event is counted

    // bridge estimator
    int n_bridges = 30;     // N_BB bridges per segment
    double bridge_dt = 0.0;  // inner grid spacing; 0 = median step of the data grid

    // marginal-law estimator
    int cc_samples = 8;   // M trajectories per compatibility term
    int cc_substeps = 1;  // Euler substeps from t_j to t_{j+1}
    double cc_weight = 1.0;
    int cc_stride = 1;  // evaluate the CC on every k-th segment

    // linear Fokker-Planck estimator
    int fp_paths = 16;
    int fp_steps = 10;
};

struct TrainReport {
    std::vector<double> loss_trace;  // per-epoch mean training objective (maximized)
    std::vector<double> cc_trace;    // per-epoch mean CC penalty (MarginalLaw only)
    double wall_clock_s = 0.0;
    std::uint64_t seed = 0;
    bool aborted = false;
    std::string abort_reason;
    int abort_epoch = -1;
    int clip_events = 0;
};

/// Discretized Girsanov log-likelihood of one path on the tape:
///   sum_j [ <b_j, dX_j> - 0.5 |b_j|^2 dt_j ] / sigma^2.
/// `pops[j]` supplies the population at step j for the EmpiricalMeasure
/// architecture (may be null for population-free variants).
NodeId girsanov_path(const DriftModel& m, Graph& g, std::span<const double> times,
                     const std::vector<std::vector<double>>& points,
                     const std::vector<const Population*>& pops, double sigma, Rng* rng);

/// Same over the observed stamps of one dataset particle; EM populations are
/// the observed cross-particle clouds.
NodeId girsanov_loglik(const DriftModel& m, Graph& g, const TrajectoryDataset& ds, int particle,
                       double sigma, Rng* rng = nullptr);

/// Algorithm: regular-grid maximum likelihood (Girsanov + AdamW).
TrainReport train_mle(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// Brownian-bridge ELBO of a particle batch on the tape: for each of
/// `n_bridges` rounds every particle's observation gaps are bridged on an
/// inner grid of spacing ~inner_dt, and the Girsanov log-likelihood of the
/// bridged path is averaged over rounds. The EM architecture sees each
/// round's cross-section as its population.
NodeId bridge_elbo(const DriftModel& m, Graph& g, const TrajectoryDataset& ds,
                   std::span<const int> particles, double sigma, double inner_dt, int n_bridges,
                   Rng& bridge_rng, Rng* flow_rng);

/// Algorithm: Brownian-bridge ELBO for irregular observations. Bridges are
/// resampled fresh each epoch; each of the N_BB rounds bridges the whole
/// batch so the EM architecture sees a bridge cross-section as population.
TrainReport train_bridge(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// Algorithm: marginal-law training, maximizing Girsanov ELBO plus the
/// observed-margin flow log-density minus the compatibility penalty.
TrainReport train_ml(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// Linear Fokker-Planck ELBO training on terminal observations (generative
/// setup: base p0 = standard normal at time 0, data at the terminal stamp).
TrainReport train_fp(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// Dispatch on cfg.estimator.
TrainReport train(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg);

/// Compatibility criterion at one observed point, on the tape:
///   ( log p_{t0}(x) - mean_k log p_{t1}(Z_{t1}^{(k)}) )^2
/// with Z simulated from (x, t0) under the model dynamics (Euler-Maruyama,
/// reparameterized so gradients reach both theta and phi).
NodeId compatibility_criterion(const DriftModel& m, Graph& g, std::span<const double> x, double t0,
                               double t1, int m_samples, int substeps, double sigma, Rng& rng);

/// Log-density of a time-indexed model, for oracle-style CC evaluation.
using LogDensityFn = std::function<double(std::span<const double>, double)>;

/// Value-only compatibility criterion over arbitrary drift/density pairs
/// (analytic oracles plug in here). Returns (gap^2, gap, mc standard error of
/// the inner mean).
struct CcValue {
    double cc = 0.0;
    double gap = 0.0;
    double se = 0.0;
};
CcValue compatibility_value(const DriftFn& drift, const LogDensityFn& log_density,
                            std::span<const double> x, double t0, double t1, int m_samples,
                            int substeps, double sigma, Rng& rng);

/// Linear Fokker-Planck ELBO at one point, on the tape: M driftless Brownian
/// paths from x over [0, T], forward-Euler quadrature of
///   -int div b dt + log p0(X_T) + [ int b dX - 0.5 int |b|^2 dt ] / sigma^2
/// with p0 the standard normal. A population, when needed (EM), stays frozen
/// along the paths so the flow is linear.
NodeId linear_fp_elbo(const DriftModel& m, Graph& g, std::span<const double> x, double horizon,
                      int steps, int m_paths, double sigma, Rng& rng,
                      const Population* pop = nullptr);

/// Mean interaction response over data, mean-field rows, and output
/// coordinates; the empirical probe for the implicit-regularization property.
double im_norm_probe(const DriftModel& m, const TrajectoryDataset& ds);

}  // namespace mvsde
