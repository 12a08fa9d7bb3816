#include "mvsde/estimate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "mvsde/errors.hpp"

namespace mvsde {

Estimator estimator_from_string(const std::string& s) {
    if (s == "mle") return Estimator::Mle;
    if (s == "bridge") return Estimator::Bridge;
    if (s == "ml" || s == "marginal_law") return Estimator::MarginalLaw;
    if (s == "fp" || s == "fokker_planck") return Estimator::FokkerPlanck;
    throw ConfigError("unknown estimator: " + s);
}

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::Mle: return "mle";
        case Estimator::Bridge: return "bridge";
        case Estimator::MarginalLaw: return "ml";
        case Estimator::FokkerPlanck: return "fp";
    }
    return "mle";
}

NodeId girsanov_path(const DriftModel& m, Graph& g, std::span<const double> times,
                     const std::vector<std::vector<double>>& points,
                     const std::vector<const Population*>& pops, double sigma, Rng* rng) {
    if (times.size() < 2) throw UsageError("girsanov: need at least two observations");
    if (points.size() != times.size()) throw UsageError("girsanov: times/points mismatch");
    if (sigma <= 0.0) throw ConfigError("girsanov: sigma must be positive");
    const double inv_s2 = 1.0 / (sigma * sigma);
    NodeId total;
    for (std::size_t j = 0; j + 1 < times.size(); ++j) {
        const double dt = times[j + 1] - times[j];
        NodeId b = m.eval(g, points[j], pops.empty() ? nullptr : pops[j], times[j], rng);
        std::vector<double> dx(points[j].size());
        for (std::size_t c = 0; c < dx.size(); ++c) dx[c] = points[j + 1][c] - points[j][c];
        NodeId incr = g.dot(b, g.input(dx));
        NodeId quad = g.scale(g.dot(b, b), 0.5 * dt);
        NodeId term = g.scale(g.sub(incr, quad), inv_s2);
        total = total.valid() ? g.add(total, term) : term;
    }
    return total;
}

NodeId girsanov_loglik(const DriftModel& m, Graph& g, const TrajectoryDataset& ds, int particle,
                       double sigma, Rng* rng) {
    const std::vector<int> idx = ds.observed_indices(particle);
    if (idx.size() < 2) throw UsageError("girsanov: particle has fewer than 2 observed times");
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    std::vector<Population> pop_storage;
    std::vector<const Population*> pops;
    const bool needs_pop = m.kind() == DriftKind::EmpiricalMeasure;
    for (int j : idx) {
        times.push_back(ds.times[j]);
        auto s = ds.state(particle, j);
        points.emplace_back(s.begin(), s.end());
    }
    if (needs_pop) {
        pop_storage.reserve(idx.size());
        for (int j : idx) pop_storage.push_back(ds.population_at(j));
        for (const Population& p : pop_storage) pops.push_back(&p);
    }
    return girsanov_path(m, g, times, points, pops, sigma, rng);
}

namespace {

struct EpochLoop {
    DriftModel& model;
    const TrainConfig& cfg;
    TrainReport report;
    AdamW opt;
    Graph graph;
    Rng shuffle_rng;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    EpochLoop(DriftModel& m, const TrainConfig& c) : model(m), cfg(c), shuffle_rng(c.seed) {
        opt.lr = c.lr;
        opt.eps = c.eps;
        opt.gamma = c.gamma;
        opt.beta1 = c.beta1;
        opt.beta2 = c.beta2;
        opt.weight_decay = c.weight_decay;
        opt.init(m.store().size());
        report.seed = c.seed;
    }

    /// One optimizer step on -objective; returns the objective value.
    double step(NodeId objective) {
        const double value = graph.scalar(objective);
        if (!std::isfinite(value)) throw NumericError("training objective is not finite");
        NodeId loss = graph.scale(objective, -1.0);
        model.store().zero_grad();
        graph.backward(loss);
        if (cfg.clip_norm > 0.0) {
            double norm2 = 0.0;
            for (double gv : model.store().grads) norm2 += gv * gv;
            const double norm = std::sqrt(norm2);
            if (norm > cfg.clip_norm) {
                const double s = cfg.clip_norm / norm;
                for (double& gv : model.store().grads) gv *= s;
                ++report.clip_events;
            }
        }
        opt.step(model.store().values, model.store().grads);
        return value;
    }

    void finish() {
        report.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (report.clip_events > 0)
            std::cerr << "[train] gradient clipped " << report.clip_events << " times at norm "
                      << cfg.clip_norm << "\n";
    }

    std::vector<std::vector<int>> batches(int n) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, shuffle_rng);
        std::vector<std::vector<int>> out;
        const int bs = std::max(1, cfg.batch_size);
        for (int s = 0; s < n; s += bs) {
            out.emplace_back(order.begin() + s, order.begin() + std::min(n, s + bs));
        }
        return out;
    }
};

/// Run `epoch_fn` cfg.epochs times with abort-on-NaN semantics.
template <typename F>
TrainReport run_epochs(EpochLoop& loop, const TrainConfig& cfg, F&& epoch_fn) {
    for (int e = 0; e < cfg.epochs; ++e) {
        try {
            epoch_fn(e);
        } catch (const NumericError& err) {
            loop.report.aborted = true;
            loop.report.abort_epoch = e;
            loop.report.abort_reason = err.what();
            std::cerr << "[train] aborted at epoch " << e << ": " << err.what() << "\n";
            break;
        }
    }
    loop.finish();
    return loop.report;
}

}  // namespace

TrainReport train_mle(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    if (ds.mask) throw UsageError("train_mle: requires a fully observed (regular) dataset");
    ds.validate();
    EpochLoop loop(m, cfg);
    Rng flow_rng = Rng::derive(cfg.seed, 1);

    // observed clouds are fixed; build them once
    std::vector<Population> pop_storage;
    std::vector<const Population*> pops;
    if (m.kind() == DriftKind::EmpiricalMeasure) {
        for (int j = 0; j < ds.n_times(); ++j) pop_storage.push_back(ds.population_at(j));
        for (const Population& p : pop_storage) pops.push_back(&p);
    }

    return run_epochs(loop, cfg, [&](int) {
        double epoch_obj = 0.0;
        for (const std::vector<int>& batch : loop.batches(ds.n_particles)) {
            loop.graph.reset(&m.store());
            NodeId acc;
            for (int i : batch) {
                std::vector<double> times;
                std::vector<std::vector<double>> points;
                times.reserve(ds.n_times());
                for (int j = 0; j < ds.n_times(); ++j) {
                    times.push_back(ds.times[j]);
                    auto s = ds.state(i, j);
                    points.emplace_back(s.begin(), s.end());
                }
                NodeId ll =
                    girsanov_path(m, loop.graph, times, points, pops, cfg.sigma, &flow_rng);
                acc = acc.valid() ? loop.graph.add(acc, ll) : ll;
            }
            NodeId obj = loop.graph.scale(acc, 1.0 / batch.size());
            epoch_obj += loop.step(obj) * batch.size();
        }
        loop.report.loss_trace.push_back(epoch_obj / ds.n_particles);
    });
}

NodeId bridge_elbo(const DriftModel& m, Graph& g, const TrajectoryDataset& ds,
                   std::span<const int> particles, double sigma, double inner_dt, int n_bridges,
                   Rng& bridge_rng, Rng* flow_rng) {
    const int nb = static_cast<int>(particles.size());
    if (nb == 0) throw UsageError("bridge_elbo: empty batch");
    const bool em_pop = m.kind() == DriftKind::EmpiricalMeasure;
    std::vector<NodeId> elbo(nb);

    for (int r = 0; r < n_bridges; ++r) {
        // one bridge realization per particle for every observation gap
        std::vector<std::vector<double>> seg_times(nb);
        std::vector<std::vector<std::vector<double>>> seg_points(nb);
        for (int bi = 0; bi < nb; ++bi) {
            const int i = particles[bi];
            const std::vector<int> idx = ds.observed_indices(i);
            std::vector<double>& times = seg_times[bi];
            auto& points = seg_points[bi];
            for (std::size_t s = 0; s + 1 < idx.size(); ++s) {
                const double t0 = ds.times[idx[s]];
                const double t1 = ds.times[idx[s + 1]];
                if (!(t1 > t0)) {
                    std::cerr << "[bridge] zero-duration segment skipped\n";
                    continue;
                }
                BridgeSpec bs;
                auto a = ds.state(i, idx[s]);
                auto b = ds.state(i, idx[s + 1]);
                bs.a.assign(a.begin(), a.end());
                bs.b.assign(b.begin(), b.end());
                bs.t0 = t0;
                bs.t1 = t1;
                bs.sigma = sigma;
                bs.inner_steps = std::max(1, static_cast<int>(std::llround((t1 - t0) / inner_dt)));
                auto path = sample_bridge(bs, bridge_rng);
                for (int q = 0; q < bs.inner_steps; ++q) {
                    times.push_back(t0 + (t1 - t0) * q / bs.inner_steps);
                    points.push_back(std::move(path[q]));
                }
                if (s + 2 == idx.size()) {
                    times.push_back(t1);
                    points.push_back(std::move(path[bs.inner_steps]));
                }
            }
        }
        // EM population at inner times: the round's cross-section
        std::vector<Population> pop_storage;
        if (em_pop) {
            for (int bi = 1; bi < nb; ++bi)
                if (seg_times[bi] != seg_times[0])
                    throw UsageError("bridge_elbo: EM architecture needs a shared observation mask");
            const std::size_t len = seg_times[0].size();
            pop_storage.resize(len);
            for (std::size_t q = 0; q < len; ++q) {
                pop_storage[q].t = seg_times[0][q];
                for (int bi = 0; bi < nb; ++bi)
                    pop_storage[q].particles.push_back(seg_points[bi][q]);
            }
        }
        for (int bi = 0; bi < nb; ++bi) {
            std::vector<const Population*> pops;
            if (em_pop)
                for (const Population& p : pop_storage) pops.push_back(&p);
            NodeId ll = girsanov_path(m, g, seg_times[bi], seg_points[bi], pops, sigma, flow_rng);
            elbo[bi] = elbo[bi].valid() ? g.add(elbo[bi], ll) : ll;
        }
    }
    NodeId acc;
    for (int bi = 0; bi < nb; ++bi) {
        NodeId mean_ll = g.scale(elbo[bi], 1.0 / n_bridges);
        acc = acc.valid() ? g.add(acc, mean_ll) : mean_ll;
    }
    return g.scale(acc, 1.0 / nb);
}

TrainReport train_bridge(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    ds.validate();
    EpochLoop loop(m, cfg);
    Rng flow_rng = Rng::derive(cfg.seed, 1);
    Rng bridge_rng = Rng::derive(cfg.seed, 2);

    double inner_dt = cfg.bridge_dt;
    if (inner_dt <= 0.0) {
        std::vector<double> gaps;
        for (std::size_t j = 1; j < ds.times.size(); ++j)
            gaps.push_back(ds.times[j] - ds.times[j - 1]);
        std::sort(gaps.begin(), gaps.end());
        inner_dt = gaps[gaps.size() / 2];
    }

    return run_epochs(loop, cfg, [&](int) {
        double epoch_obj = 0.0;
        for (const std::vector<int>& batch : loop.batches(ds.n_particles)) {
            loop.graph.reset(&m.store());
            NodeId obj = bridge_elbo(m, loop.graph, ds, batch, cfg.sigma, inner_dt, cfg.n_bridges,
                                     bridge_rng, &flow_rng);
            epoch_obj += loop.step(obj) * batch.size();
        }
        loop.report.loss_trace.push_back(epoch_obj / ds.n_particles);
    });
}

NodeId compatibility_criterion(const DriftModel& m, Graph& g, std::span<const double> x, double t0,
                               double t1, int m_samples, int substeps, double sigma, Rng& rng) {
    if (m.kind() != DriftKind::MarginalLaw)
        throw UsageError("compatibility criterion requires the MarginalLaw architecture");
    if (!(t1 > t0)) throw UsageError("compatibility criterion: t1 must exceed t0");
    const int d = m.dim();
    NodeId lp0 = m.flow().log_prob(g, g.input(x), t0);
    NodeId acc;
    const double dt = (t1 - t0) / substeps;
    std::vector<double> noise(d);
    for (int k = 0; k < m_samples; ++k) {
        NodeId z = g.input(x);
        double t = t0;
        for (int s = 0; s < substeps; ++s) {
            NodeId b = m.eval(g, z, nullptr, t, &rng);
            for (int c = 0; c < d; ++c) noise[c] = sigma * std::sqrt(dt) * rng.normal();
            z = g.add(g.add_scaled(z, b, dt), g.input(noise));
            t += dt;
        }
        NodeId lp1 = m.flow().log_prob(g, z, t1);
        acc = acc.valid() ? g.add(acc, lp1) : lp1;
    }
    NodeId gap = g.sub(lp0, g.scale(acc, 1.0 / m_samples));
    return g.dot(gap, gap);
}

CcValue compatibility_value(const DriftFn& drift, const LogDensityFn& log_density,
                            std::span<const double> x, double t0, double t1, int m_samples,
                            int substeps, double sigma, Rng& rng) {
    if (!(t1 > t0)) throw UsageError("compatibility criterion: t1 must exceed t0");
    const int d = static_cast<int>(x.size());
    const double dt = (t1 - t0) / substeps;
    const double lp0 = log_density(x, t0);
    double mean = 0.0, m2 = 0.0;
    std::vector<double> z(x.begin(), x.end());
    for (int k = 0; k < m_samples; ++k) {
        z.assign(x.begin(), x.end());
        double t = t0;
        for (int s = 0; s < substeps; ++s) {
            const std::vector<double> b = drift(z, nullptr, t);
            for (int c = 0; c < d; ++c) z[c] += b[c] * dt + sigma * std::sqrt(dt) * rng.normal();
            t += dt;
        }
        const double lp1 = log_density(z, t1);
        if (!std::isfinite(lp1)) throw NumericError("compatibility criterion: non-finite density");
        const double delta = lp1 - mean;
        mean += delta / (k + 1);
        m2 += delta * (lp1 - mean);
    }
    CcValue out;
    out.gap = lp0 - mean;
    out.cc = out.gap * out.gap;
    out.se = m_samples > 1 ? std::sqrt(m2 / (m_samples - 1) / m_samples) : 0.0;
    return out;
}

TrainReport train_ml(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    if (m.kind() != DriftKind::MarginalLaw)
        throw UsageError("train_ml requires the MarginalLaw architecture");
    if (ds.mask) throw UsageError("train_ml: requires a fully observed (regular) dataset");
    ds.validate();
    EpochLoop loop(m, cfg);
    Rng flow_rng = Rng::derive(cfg.seed, 1);
    Rng cc_rng = Rng::derive(cfg.seed, 3);
    const int stride = std::max(1, cfg.cc_stride);

    return run_epochs(loop, cfg, [&](int) {
        double epoch_obj = 0.0;
        double epoch_cc = 0.0;
        int cc_terms = 0;
        for (const std::vector<int>& batch : loop.batches(ds.n_particles)) {
            loop.graph.reset(&m.store());
            NodeId acc;
            NodeId cc_acc;
            int cc_count = 0;
            for (int i : batch) {
                NodeId ll = girsanov_loglik(m, loop.graph, ds, i, cfg.sigma, &flow_rng);
                // observed-margin log-density of the flow
                NodeId margins;
                for (int j = 0; j < ds.n_times(); ++j) {
                    NodeId lp =
                        m.flow().log_prob(loop.graph, loop.graph.input(ds.state(i, j)), ds.times[j]);
                    margins = margins.valid() ? loop.graph.add(margins, lp) : lp;
                }
                NodeId obj_i = loop.graph.add(ll, margins);
                acc = acc.valid() ? loop.graph.add(acc, obj_i) : obj_i;
                for (int j = 0; j + 1 < ds.n_times(); j += stride) {
                    NodeId cc = compatibility_criterion(m, loop.graph, ds.state(i, j), ds.times[j],
                                                        ds.times[j + 1], cfg.cc_samples,
                                                        cfg.cc_substeps, cfg.sigma, cc_rng);
                    cc_acc = cc_acc.valid() ? loop.graph.add(cc_acc, cc) : cc;
                    ++cc_count;
                }
            }
            NodeId obj = loop.graph.scale(acc, 1.0 / batch.size());
            double cc_mean_val = 0.0;
            if (cc_count > 0) {
                NodeId cc_mean = loop.graph.scale(cc_acc, 1.0 / cc_count);
                cc_mean_val = loop.graph.scalar(cc_mean);
                obj = loop.graph.sub(obj, loop.graph.scale(cc_mean, cfg.cc_weight));
            }
            epoch_obj += loop.step(obj) * batch.size();
            epoch_cc += cc_mean_val * batch.size();
            cc_terms += batch.size();
        }
        loop.report.loss_trace.push_back(epoch_obj / ds.n_particles);
        loop.report.cc_trace.push_back(epoch_cc / std::max(1, cc_terms));
    });
}

NodeId linear_fp_elbo(const DriftModel& m, Graph& g, std::span<const double> x, double horizon,
                      int steps, int m_paths, double sigma, Rng& rng, const Population* pop) {
    if (steps < 1 || m_paths < 1) throw UsageError("fp elbo: steps and paths must be >= 1");
    const int d = m.dim();
    const double dt = horizon / steps;
    const double inv_s2 = 1.0 / (sigma * sigma);
    NodeId acc;
    std::vector<double> z(x.begin(), x.end());
    std::vector<double> znext(d);
    for (int k = 0; k < m_paths; ++k) {
        z.assign(x.begin(), x.end());
        NodeId path_term;
        for (int s = 0; s < steps; ++s) {
            const double t = dt * s;
            for (int c = 0; c < d; ++c) znext[c] = z[c] + sigma * std::sqrt(dt) * rng.normal();
            NodeId div;
            NodeId b = m.eval_with_div(g, z, pop, t, &rng, div);
            std::vector<double> dz(d);
            for (int c = 0; c < d; ++c) dz[c] = znext[c] - z[c];
            NodeId girsanov = g.scale(
                g.sub(g.dot(b, g.input(dz)), g.scale(g.dot(b, b), 0.5 * dt)), inv_s2);
            NodeId term = g.sub(girsanov, g.scale(div, dt));
            path_term = path_term.valid() ? g.add(path_term, term) : term;
            z = znext;
        }
        NodeId logp0 = g.input(std_normal_log_density(z));
        path_term = g.add(path_term, logp0);
        acc = acc.valid() ? g.add(acc, path_term) : path_term;
    }
    return g.scale(acc, 1.0 / m_paths);
}

TrainReport train_fp(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    ds.validate();
    EpochLoop loop(m, cfg);
    Rng path_rng = Rng::derive(cfg.seed, 4);
    const double horizon = ds.times.back() - ds.times.front();
    const int last = ds.n_times() - 1;
    const Population terminal_pop = ds.population_at(last);
    const Population* pop = m.kind() == DriftKind::EmpiricalMeasure ? &terminal_pop : nullptr;

    return run_epochs(loop, cfg, [&](int) {
        double epoch_obj = 0.0;
        for (const std::vector<int>& batch : loop.batches(ds.n_particles)) {
            loop.graph.reset(&m.store());
            NodeId acc;
            for (int i : batch) {
                NodeId elbo = linear_fp_elbo(m, loop.graph, ds.state(i, last), horizon,
                                             cfg.fp_steps, cfg.fp_paths, cfg.sigma, path_rng, pop);
                acc = acc.valid() ? loop.graph.add(acc, elbo) : elbo;
            }
            NodeId obj = loop.graph.scale(acc, 1.0 / batch.size());
            epoch_obj += loop.step(obj) * batch.size();
        }
        loop.report.loss_trace.push_back(epoch_obj / ds.n_particles);
    });
}

TrainReport train(DriftModel& m, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    switch (cfg.estimator) {
        case Estimator::Mle: return train_mle(m, ds, cfg);
        case Estimator::Bridge: return train_bridge(m, ds, cfg);
        case Estimator::MarginalLaw: return train_ml(m, ds, cfg);
        case Estimator::FokkerPlanck: return train_fp(m, ds, cfg);
    }
    throw ConfigError("unknown estimator");
}

double im_norm_probe(const DriftModel& m, const TrajectoryDataset& ds) {
    if (m.kind() != DriftKind::ImplicitMeasure)
        throw UsageError("im_norm_probe requires the ImplicitMeasure architecture");
    Graph scratch;
    const int n_rows = m.spec().w0_width;
    const int d = m.dim();
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < ds.n_particles; ++i) {
        for (int j = 0; j < ds.n_times(); ++j) {
            if (!ds.observed(i, j)) continue;
            scratch.reset(const_cast<ParamStore*>(&m.store()));
            NodeId x = scratch.input(ds.state(i, j));
            for (int r = 0; r < n_rows; ++r) {
                NodeId w = scratch.param_vec(m.w0_offset() + r * d, d);
                NodeId in = scratch.concat(scratch.concat(x, w), scratch.input(ds.times[j]));
                NodeId phi = m.phi_net().forward(scratch, in);
                for (double v : scratch.val(phi)) {
                    acc += v;
                    ++count;
                }
            }
        }
    }
    return acc / static_cast<double>(count);
}

}  // namespace mvsde
