// Batch experiment runner: dataset generation, training, evaluation, and
// trajectory generation from checkpoints, driven by declarative JSON configs.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 numerical abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvsde/checkpoint.hpp"
#include "mvsde/config.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/estimate.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvsde;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> system;
};

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = ExperimentConfig::from_file(args.config_path);
    if (args.system) {
        GeneratorSpec spec = GeneratorSpec::defaults(system_from_string(*args.system));
        spec.seed = cfg.generator.seed;
        spec.noise_std = cfg.generator.noise_std;
        cfg.generator = spec;
        cfg.has_generator = true;
        cfg.architecture.dim = cfg.generator.drift.dim();
        cfg.train.sigma = cfg.generator.sigma;
    }
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.generator.seed = *args.seed;
        cfg.train.seed = *args.seed;
    }
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    return cfg;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

TrajectoryDataset obtain_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_path) {
        if (!fs::exists(*cfg.dataset_path))
            throw ConfigError("dataset file not found: " + *cfg.dataset_path);
        return read_dataset(*cfg.dataset_path);
    }
    if (!cfg.has_generator) throw ConfigError("config needs a generator system or a dataset path");
    return generate(cfg.generator).data;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << text;
}

// ---------------------------------------------------------------- simulate
int cmd_simulate(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (!cfg.has_generator) throw ConfigError("simulate needs a generator system");
    fs::create_directories(cfg.out_dir);
    const Generated out = generate(cfg.generator);
    const std::string data_path = cfg.out_dir + "/dataset.csv";
    write_dataset(out.data, data_path);

    json summary = {
        {"N", out.data.n_particles},
        {"K", out.data.n_times()},
        {"d", out.data.dim},
        {"seed", cfg.generator.seed},
        {"system", to_string(cfg.generator.drift.system)},
        {"dataset", data_path},
    };
    if (!out.jump_steps.empty()) {
        summary["jump_steps"] = out.jump_steps;
        summary["jump_sizes"] = out.jump_sizes;
    }
    write_text(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << "wrote " << data_path << " (" << out.data.n_particles << " particles, "
              << out.data.n_times() << " stamps)\n";
    return 0;
}

// ------------------------------------------------------------------- train
int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    fs::create_directories(cfg.out_dir);
    const TrajectoryDataset ds = obtain_dataset(cfg);
    if (cfg.architecture.dim != ds.dim)
        throw ConfigError("architecture dim " + std::to_string(cfg.architecture.dim) +
                          " does not match dataset dim " + std::to_string(ds.dim));
    DriftModel model(cfg.architecture, cfg.seed);
    const TrainReport report = train(model, ds, cfg.train);

    const std::string ckpt_path = cfg.out_dir + "/checkpoint.json";
    save_checkpoint(model, ckpt_path);
    json rep = {
        {"config", json::parse(cfg.to_json_text())},
        {"seed", report.seed},
        {"loss_trace", report.loss_trace},
        {"wall_clock_s", report.wall_clock_s},
        {"checkpoint_path", ckpt_path},
    };
    if (!report.cc_trace.empty()) rep["cc_trace"] = report.cc_trace;
    if (report.clip_events > 0) rep["clip_events"] = report.clip_events;
    if (report.aborted) {
        rep["aborted"] = true;
        rep["abort_epoch"] = report.abort_epoch;
        rep["abort_reason"] = report.abort_reason;
    }
    write_text(cfg.out_dir + "/report.json", rep.dump(2) + "\n");
    std::cout << "wrote " << ckpt_path << " (" << report.loss_trace.size() << " epochs)\n";
    return report.aborted ? 3 : 0;
}

// -------------------------------------------------------------------- eval
int cmd_eval(const CommonArgs& args, const std::string& checkpoint, bool use_truth) {
    ExperimentConfig cfg = load_config(args);
    if (!cfg.has_generator)
        throw ConfigError("eval needs the generator section (the analytic reference)");
    fs::create_directories(cfg.out_dir);

    std::optional<DriftModel> model;
    if (!use_truth) {
        if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --truth");
        model = load_checkpoint(checkpoint);
        if (model->dim() != cfg.generator.drift.dim())
            throw ConfigError("checkpoint dimension does not match the configured system");
        if (model->kind() != cfg.architecture.kind)
            throw ConfigError("checkpoint architecture '" + to_string(model->kind()) +
                              "' does not match the configured '" +
                              to_string(cfg.architecture.kind) + "'");
    }
    const TrueDrift truth = cfg.generator.drift;

    // held-out data: same system, evaluation seed, observation-noise-free;
    // the train_cloud grid instead scores drift recovery over the observed
    // (training) data region, which matters for systems whose clouds wander
    const bool train_cloud = cfg.eval.grid == "train_cloud";
    GeneratorSpec holdout_spec = cfg.generator;
    holdout_spec.seed = cfg.eval.holdout_seed;
    holdout_spec.noise_std = cfg.eval.holdout_noise;
    holdout_spec.irregular = 0;
    const TrajectoryDataset holdout =
        train_cloud ? obtain_dataset(cfg) : generate(holdout_spec).data;

    Rng eval_rng = Rng::derive(cfg.seed, 11);
    Graph scratch;
    std::vector<std::pair<std::string, double>> rows;

    auto nearest_index = [&holdout](double t) {
        int best = 0;
        for (int j = 1; j < holdout.n_times(); ++j)
            if (std::abs(holdout.times[j] - t) < std::abs(holdout.times[best] - t)) best = j;
        return best;
    };

    // generated terminal ensemble under the evaluated drift (built lazily)
    std::optional<std::vector<std::vector<double>>> generated_terminal;
    auto ensure_generated = [&]() {
        if (generated_terminal) return;
        const int n = cfg.eval.gen_particles > 0 ? cfg.eval.gen_particles : holdout.n_particles;
        Rng gen_rng = Rng::derive(cfg.seed, 12);
        auto init = sample_initial(truth.system, n, gen_rng);
        TrajectoryDataset paths =
            use_truth
                ? euler_maruyama(drift_fn(truth), truth.needs_population(), init, holdout.times,
                                 cfg.generator.sigma, gen_rng)
                : euler_maruyama(drift_fn(*model, scratch, eval_rng),
                                 model->kind() == DriftKind::EmpiricalMeasure, init, holdout.times,
                                 cfg.generator.sigma, gen_rng);
        generated_terminal.emplace();
        const int last = paths.n_times() - 1;
        for (int i = 0; i < paths.n_particles; ++i) {
            auto s = paths.state(i, last);
            generated_terminal->emplace_back(s.begin(), s.end());
        }
    };

    auto holdout_terminal = [&holdout]() {
        std::vector<std::vector<double>> pts;
        const int last = holdout.n_times() - 1;
        for (int i = 0; i < holdout.n_particles; ++i) {
            auto s = holdout.state(i, last);
            pts.emplace_back(s.begin(), s.end());
        }
        return pts;
    };

    for (const std::string& metric : cfg.eval.metrics) {
        if (metric == "drift_mse") {
            double acc = 0.0;
            for (double t : cfg.eval.times) {
                const int j = nearest_index(t);
                const Population pop = holdout.population_at(j);
                const EvalGrid grid = cfg.eval.grid == "lattice"
                                          ? EvalGrid::lattice(cfg.eval.lo, cfg.eval.hi,
                                                              cfg.eval.steps)
                                          : EvalGrid::from_cloud(holdout, j);
                if (use_truth) {
                    double mse = 0.0;
                    for (const auto& x : grid.points) {
                        const auto a = truth.eval(x, &pop, holdout.times[j]);
                        const auto b = truth.eval(x, &pop, holdout.times[j]);
                        for (std::size_t c = 0; c < a.size(); ++c)
                            mse += (a[c] - b[c]) * (a[c] - b[c]);
                    }
                    acc += mse / (grid.points.size() * truth.dim());
                } else {
                    acc += drift_mse(*model, truth, grid, &pop, holdout.times[j], eval_rng);
                }
            }
            rows.emplace_back("drift_mse", acc / cfg.eval.times.size());
        } else if (metric == "energy_distance") {
            ensure_generated();
            rows.emplace_back("energy_distance_sq",
                              energy_distance_sq(*generated_terminal, holdout_terminal()));
        } else if (metric == "crps") {
            ensure_generated();
            const auto obs = holdout_terminal();
            double acc = 0.0;
            for (const auto& o : obs) acc += crps(*generated_terminal, o);
            rows.emplace_back("crps", acc / obs.size());
        } else if (metric == "ecdf" || metric == "ks") {
            ensure_generated();
            const auto obs = holdout_terminal();
            EcdfDistances total;
            const int d = holdout.dim;
            for (int c = 0; c < d; ++c) {
                std::vector<double> a, b;
                for (const auto& p : *generated_terminal) a.push_back(p[c]);
                for (const auto& p : obs) b.push_back(p[c]);
                const EcdfDistances e = ecdf_distances(a, b);
                total.mean += e.mean / d;
                total.p75 += e.p75 / d;
                total.p90 += e.p90 / d;
                total.ks += e.ks / d;
            }
            if (metric == "ecdf") {
                rows.emplace_back("ecdf_mean", total.mean);
                rows.emplace_back("ecdf_p75", total.p75);
                rows.emplace_back("ecdf_p90", total.p90);
            }
            rows.emplace_back("ks", total.ks);
        } else {
            throw ConfigError("unknown metric: " + metric);
        }
    }

    std::string csv = "experiment,metric,value,seed\n";
    for (const auto& [name, value] : rows)
        csv += cfg.name + "," + name + "," + fmt17(value) + "," + std::to_string(cfg.seed) + "\n";
    const std::string csv_path = cfg.out_dir + "/metrics.csv";
    write_text(csv_path, csv);
    std::cout << csv;
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

// ---------------------------------------------------------------- generate
int cmd_generate(const CommonArgs& args, const std::string& checkpoint, int n, double horizon,
                 double dt, double sigma) {
    ExperimentConfig cfg = load_config(args);
    if (checkpoint.empty()) throw ConfigError("generate needs --checkpoint");
    DriftModel model = load_checkpoint(checkpoint);
    fs::create_directories(cfg.out_dir);

    const int steps = static_cast<int>(std::llround(horizon / dt));
    if (steps < 1) throw ConfigError("generate: T/dt must give at least one step");
    std::vector<double> times(steps + 1);
    for (int j = 0; j <= steps; ++j) times[j] = dt * j;
    times.back() = horizon;

    Rng rng = Rng::derive(cfg.seed, 13);
    Rng flow_rng = Rng::derive(cfg.seed, 14);
    Graph scratch;
    const TrueDrift::System init_system =
        cfg.has_generator ? cfg.generator.drift.system : TrueDrift::System::OrnsteinUhlenbeck;
    auto init = sample_initial(init_system, n, rng);
    const TrajectoryDataset paths =
        euler_maruyama(drift_fn(model, scratch, flow_rng),
                       model.kind() == DriftKind::EmpiricalMeasure, init, times, sigma, rng);

    const std::string paths_path = cfg.out_dir + "/paths.csv";
    write_dataset(paths, paths_path);

    std::string terminal;
    for (int c = 0; c < paths.dim; ++c) terminal += (c ? ",x" : "x") + std::to_string(c);
    terminal += "\n";
    const int last = paths.n_times() - 1;
    for (int i = 0; i < n; ++i) {
        auto s = paths.state(i, last);
        for (int c = 0; c < paths.dim; ++c) terminal += (c ? "," : "") + fmt17(s[c]);
        terminal += "\n";
    }
    write_text(cfg.out_dir + "/terminal.csv", terminal);
    std::cout << "wrote " << paths_path << " and terminal.csv (" << n << " trajectories)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural McKean-Vlasov SDE toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint;
    bool use_truth = false;
    int gen_n = 100;
    double gen_T = 0.1, gen_dt = 0.002, gen_sigma = 1.0;

    auto add_common = [&args](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "experiment config JSON");
        cmd->add_option("--seed", args.seed, "override the experiment seed");
        cmd->add_option("--out", args.out_dir, "override the output directory");
        cmd->add_option("--system", args.system, "override the generator system");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    add_common(sim);
    CLI::App* tr = app.add_subcommand("train", "train a drift model");
    add_common(tr);
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint against the true drift");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint, "trained checkpoint JSON");
    ev->add_flag("--truth", use_truth, "evaluate the analytic drift against itself");
    CLI::App* gen = app.add_subcommand("generate", "sample trajectories from a checkpoint");
    add_common(gen);
    gen->add_option("--checkpoint", checkpoint, "trained checkpoint JSON");
    gen->add_option("--n", gen_n, "number of trajectories");
    gen->add_option("--T", gen_T, "horizon");
    gen->add_option("--dt", gen_dt, "step size");
    gen->add_option("--sigma", gen_sigma, "diffusion constant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(args);
        if (tr->parsed()) return cmd_train(args);
        if (ev->parsed()) return cmd_eval(args, checkpoint, use_truth);
        if (gen->parsed()) return cmd_generate(args, checkpoint, gen_n, gen_T, gen_dt, gen_sigma);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
