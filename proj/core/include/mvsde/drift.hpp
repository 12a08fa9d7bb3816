#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvsde/flow.hpp"
#include "mvsde/mlp.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

/// Time-t marginal sample {X_t^(i)}; what the empirical-measure architecture
/// averages over.
struct Population {
    std::vector<std::vector<double>> particles;
    double t = 0.0;

    bool empty() const { return particles.empty(); }
    int size() const { return static_cast<int>(particles.size()); }
};

enum class DriftKind { ItoMlp, EmpiricalMeasure, ImplicitMeasure, MarginalLaw };

DriftKind drift_kind_from_string(const std::string& s);
std::string to_string(DriftKind k);

/// Shape of a drift model, serializable into configs and checkpoints.
struct ArchSpec {
    DriftKind kind = DriftKind::ItoMlp;
    int dim = 2;
    std::vector<int> f_hidden = {128, 128, 128, 128};
    std::vector<int> phi_hidden = {128, 128, 128, 128};
    int w0_width = 128;      // mean-field layer width (ImplicitMeasure)
    int sample_count = 128;  // expectation width n (MarginalLaw flow draws)
    Activation activation = Activation::LeakyRelu;
    int flow_layers = 4;
    std::vector<int> flow_hidden = {64, 64};
    // start every network's output layer (and flow conditioners) at zero, so
    // the initial drift is identically 0 and the initial flow is the base
    // normal; the hidden layers keep the uniform fan-in initialization
    bool zero_output_init = false;
    // the networks see t / time_scale; set to the horizon T so the time
    // feature shares the state features' range
    double time_scale = 1.0;
};

/// Drift b(x, population, t) under one of the four parameterizations:
///   ItoMlp           b = f(x, t)
///   EmpiricalMeasure b = f(x, t) + mean_i phi(x, X_t^(i))
///   ImplicitMeasure  b = f(x, t) + mean_i phi(x, W0^(i), t)
///   MarginalLaw      b = f(x, t) + mean_i phi(x, Xhat^(i)),  Xhat ~ flow at t
/// All parameters (f, phi, W0, flow) live in one ParamStore.
class DriftModel {
  public:
    DriftModel() = default;
    DriftModel(const ArchSpec& spec, std::uint64_t seed);

    /// Population is required for EmpiricalMeasure and ignored otherwise;
    /// rng is required for MarginalLaw (reparameterized flow sampling).
    NodeId eval(Graph& g, std::span<const double> x, const Population* pop, double t,
                Rng* rng = nullptr) const;
    NodeId eval(Graph& g, NodeId x, const Population* pop, double t, Rng* rng = nullptr) const;

    /// Tape-backed evaluation into a plain vector (scratch graph is reset).
    std::vector<double> eval_value(Graph& scratch, std::span<const double> x,
                                   const Population* pop, double t, Rng* rng = nullptr) const;

    /// The mean-field layer alone: mean_i phi(x, W0^(i), t).
    NodeId mean_field_layer(Graph& g, NodeId x, double t) const;

    /// Drift plus its state-space divergence (sum_k d b_k / d x_k), both on
    /// the tape; the divergence uses one tangent pass per coordinate.
    NodeId eval_with_div(Graph& g, std::span<const double> x, const Population* pop, double t,
                         Rng* rng, NodeId& div_out) const;

    const ArchSpec& spec() const { return spec_; }
    DriftKind kind() const { return spec_.kind; }
    int dim() const { return spec_.dim; }
    std::uint64_t seed() const { return seed_; }

    ParamStore& store() { return *store_; }
    const ParamStore& store() const { return *store_; }

    Mlp& f_net() { return f_net_; }
    const Mlp& f_net() const { return f_net_; }
    Mlp& phi_net() { return phi_net_; }
    const Mlp& phi_net() const { return phi_net_; }
    bool has_phi() const { return spec_.kind != DriftKind::ItoMlp; }
    CouplingFlow& flow() { return *flow_; }
    const CouplingFlow& flow() const { return *flow_; }

    int w0_offset() const { return w0_off_; }
    std::span<const double> w0_row(int i) const;
    void set_w0_row(int i, std::span<const double> row);

  private:
    NodeId phi_forward(Graph& g, NodeId x, NodeId y, double t) const;

    ArchSpec spec_;
    std::uint64_t seed_ = 0;
    std::shared_ptr<ParamStore> store_;
    Mlp f_net_;
    Mlp phi_net_;
    int w0_off_ = -1;
    std::shared_ptr<CouplingFlow> flow_;
};

/// Closed-form drifts of the synthetic benchmark systems.
struct TrueDrift {
    enum class System {
        Kuramoto,
        FitzHughNagumo,
        OpinionDynamics,
        MeanFieldAtlas,
        OrnsteinUhlenbeck,
        Circle,
        JumpOU,
    };

    System system = System::OrnsteinUhlenbeck;

    // Kuramoto
    double coupling = 2.0;
    // FitzHugh-Nagumo
    double fhn_a = 0.2, fhn_b = 0.8, fhn_c = 1.0, fhn_d = 0.7, fhn_lambda = 0.4;
    // Opinion dynamics psi(r) = theta1 * exp(-0.01 / (1 - (r - theta2)^2)),
    // zero outside its support.
    double od_theta1 = 1.0, od_theta2 = 2.5;

    int dim() const { return system == System::MeanFieldAtlas ? 1 : 2; }
    bool needs_population() const;

    std::vector<double> eval(std::span<const double> x, const Population* pop, double t) const;
};

TrueDrift::System system_from_string(const std::string& s);
std::string to_string(TrueDrift::System s);

}  // namespace mvsde
