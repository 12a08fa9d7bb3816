#include "mvsde/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvsde/errors.hpp"

namespace mvsde {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_generator(const json& g, ExperimentConfig& cfg) {
    reject_unknown(g,
                   {"system", "sigma", "T", "dt", "particles", "irregular", "noise_std", "jumps",
                    "seed", "jump_times", "jump_sizes", "dataset"},
                   "generator");
    if (g.contains("dataset")) {
        cfg.dataset_path = g.at("dataset").get<std::string>();
        cfg.has_generator = g.contains("system");
    }
    if (g.contains("system")) {
        cfg.generator = GeneratorSpec::defaults(system_from_string(g.at("system").get<std::string>()));
        cfg.has_generator = true;
    }
    GeneratorSpec& spec = cfg.generator;
    maybe(g, "sigma", spec.sigma);
    maybe(g, "T", spec.T);
    maybe(g, "dt", spec.dt);
    maybe(g, "particles", spec.particles);
    maybe(g, "irregular", spec.irregular);
    maybe(g, "noise_std", spec.noise_std);
    maybe(g, "jumps", spec.jump_count);
    maybe(g, "jump_times", spec.jump_times);
    maybe(g, "jump_sizes", spec.jump_sizes);
    spec.seed = cfg.seed;
    if (g.contains("seed")) spec.seed = g.at("seed").get<std::uint64_t>();
}

void parse_architecture(const json& a, ArchSpec& spec) {
    reject_unknown(a,
                   {"variant", "dim", "f_hidden", "phi_hidden", "w0_width", "sample_count",
                    "activation", "flow_layers", "flow_hidden", "zero_output_init", "time_scale"},
                   "architecture");
    if (a.contains("variant")) spec.kind = drift_kind_from_string(a.at("variant").get<std::string>());
    maybe(a, "dim", spec.dim);
    maybe(a, "f_hidden", spec.f_hidden);
    maybe(a, "phi_hidden", spec.phi_hidden);
    maybe(a, "w0_width", spec.w0_width);
    maybe(a, "sample_count", spec.sample_count);
    if (a.contains("activation"))
        spec.activation = activation_from_string(a.at("activation").get<std::string>());
    maybe(a, "flow_layers", spec.flow_layers);
    maybe(a, "flow_hidden", spec.flow_hidden);
    maybe(a, "zero_output_init", spec.zero_output_init);
    maybe(a, "time_scale", spec.time_scale);
}

void parse_train(const json& t, TrainConfig& cfg) {
    reject_unknown(t,
                   {"estimator", "epochs", "batch", "lr", "eps", "gamma", "beta1", "beta2",
                    "weight_decay", "sigma", "clip_norm", "n_bridges", "bridge_dt", "cc_samples",
                    "cc_substeps", "cc_weight", "cc_stride", "fp_paths", "fp_steps"},
                   "train");
    if (t.contains("estimator"))
        cfg.estimator = estimator_from_string(t.at("estimator").get<std::string>());
    maybe(t, "epochs", cfg.epochs);
    maybe(t, "batch", cfg.batch_size);
    maybe(t, "lr", cfg.lr);
    maybe(t, "eps", cfg.eps);
    maybe(t, "gamma", cfg.gamma);
    maybe(t, "beta1", cfg.beta1);
    maybe(t, "beta2", cfg.beta2);
    maybe(t, "weight_decay", cfg.weight_decay);
    maybe(t, "sigma", cfg.sigma);
    maybe(t, "clip_norm", cfg.clip_norm);
    maybe(t, "n_bridges", cfg.n_bridges);
    maybe(t, "bridge_dt", cfg.bridge_dt);
    maybe(t, "cc_samples", cfg.cc_samples);
    maybe(t, "cc_substeps", cfg.cc_substeps);
    maybe(t, "cc_weight", cfg.cc_weight);
    maybe(t, "cc_stride", cfg.cc_stride);
    maybe(t, "fp_paths", cfg.fp_paths);
    maybe(t, "fp_steps", cfg.fp_steps);
}

void parse_eval(const json& e, EvalSpec& spec) {
    reject_unknown(e,
                   {"grid", "lo", "hi", "steps", "times", "metrics", "holdout_seed",
                    "holdout_noise", "gen_particles"},
                   "eval");
    maybe(e, "grid", spec.grid);
    if (spec.grid != "lattice" && spec.grid != "cloud" && spec.grid != "train_cloud")
        throw ConfigError("config: eval.grid must be 'lattice', 'cloud', or 'train_cloud'");
    maybe(e, "lo", spec.lo);
    maybe(e, "hi", spec.hi);
    maybe(e, "steps", spec.steps);
    maybe(e, "times", spec.times);
    maybe(e, "metrics", spec.metrics);
    maybe(e, "holdout_seed", spec.holdout_seed);
    maybe(e, "holdout_noise", spec.holdout_noise);
    maybe(e, "gen_particles", spec.gen_particles);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        reject_unknown(doc, {"name", "seed", "out_dir", "generator", "architecture", "train", "eval"},
                       "config root");
        maybe(doc, "name", cfg.name);
        maybe(doc, "seed", cfg.seed);
        maybe(doc, "out_dir", cfg.out_dir);
        cfg.generator.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        if (doc.contains("generator")) parse_generator(doc.at("generator"), cfg);
        if (doc.contains("architecture")) parse_architecture(doc.at("architecture"), cfg.architecture);
        if (doc.contains("train")) parse_train(doc.at("train"), cfg.train);
        if (doc.contains("eval")) parse_eval(doc.at("eval"), cfg.eval);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    // the known diffusion constant defaults to the generator's
    if (!doc.contains("train") || !doc.at("train").contains("sigma"))
        cfg.train.sigma = cfg.generator.sigma;
    // state dimension follows the generator unless spelled out
    if (cfg.has_generator && (!doc.contains("architecture") || !doc.at("architecture").contains("dim")))
        cfg.architecture.dim = cfg.generator.drift.dim();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
    json gen = {
        {"system", to_string(generator.drift.system)}, {"sigma", generator.sigma},
        {"T", generator.T},           {"dt", generator.dt},
        {"particles", generator.particles},            {"irregular", generator.irregular},
        {"noise_std", generator.noise_std},            {"jumps", generator.jump_count},
        {"seed", generator.seed},
    };
    if (!generator.jump_times.empty()) {
        gen["jump_times"] = generator.jump_times;
        gen["jump_sizes"] = generator.jump_sizes;
    }
    if (dataset_path) gen["dataset"] = *dataset_path;
    json doc = {
        {"name", name},
        {"seed", seed},
        {"out_dir", out_dir},
        {"generator", gen},
        {"architecture",
         {{"variant", to_string(architecture.kind)},
          {"dim", architecture.dim},
          {"f_hidden", architecture.f_hidden},
          {"phi_hidden", architecture.phi_hidden},
          {"w0_width", architecture.w0_width},
          {"sample_count", architecture.sample_count},
          {"activation", to_string(architecture.activation)},
          {"flow_layers", architecture.flow_layers},
          {"flow_hidden", architecture.flow_hidden},
          {"zero_output_init", architecture.zero_output_init},
          {"time_scale", architecture.time_scale}}},
        {"train",
         {{"estimator", to_string(train.estimator)},
          {"epochs", train.epochs},
          {"batch", train.batch_size},
          {"lr", train.lr},
          {"eps", train.eps},
          {"gamma", train.gamma},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"weight_decay", train.weight_decay},
          {"sigma", train.sigma},
          {"clip_norm", train.clip_norm},
          {"n_bridges", train.n_bridges},
          {"bridge_dt", train.bridge_dt},
          {"cc_samples", train.cc_samples},
          {"cc_substeps", train.cc_substeps},
          {"cc_weight", train.cc_weight},
          {"cc_stride", train.cc_stride},
          {"fp_paths", train.fp_paths},
          {"fp_steps", train.fp_steps}}},
        {"eval",
         {{"grid", eval.grid},
          {"lo", eval.lo},
          {"hi", eval.hi},
          {"steps", eval.steps},
          {"times", eval.times},
          {"metrics", eval.metrics},
          {"holdout_seed", eval.holdout_seed},
          {"holdout_noise", eval.holdout_noise},
          {"gen_particles", eval.gen_particles}}},
    };
    return doc.dump(2) + "\n";
}

}  // namespace mvsde
