#pragma once

#include <utility>
#include <vector>

#include "mvsde/mlp.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

/// Time-conditioned affine coupling flow with exact log-density and exact
/// sampling, both differentiable.
///
/// Layer l conditions on the coordinates with index parity l%2 and transforms
/// the rest; the conditioner input is (conditioned coords, t). In the
/// normalizing direction x -> z each layer applies
///     z_B = x_B * exp(s(x_A, t)) + t(x_A, t),   z_A = x_A,
/// so the log-determinant of dz/dx is the sum of the scale outputs on the
/// transformed coordinates and
///     log p(x) = log N(z; 0, I) + sum of scale outputs.
/// Sampling pushes z ~ N(0, I) through the inverse maps in reverse order.
///
/// For d = 1 the conditioned half is empty and the conditioner sees only t,
/// i.e. a time-indexed affine map of the base normal.
class CouplingFlow {
  public:
    CouplingFlow() = default;

    /// `hidden` are the conditioner hidden widths (shared shape for the scale
    /// and translation networks; scale uses tanh hidden units, translation
    /// uses ReLU). Scale outputs are clamped to [-10, 10] before exp; a raw
    /// scale above 20 in magnitude raises NumericError.
    CouplingFlow(int dim, int n_layers, std::vector<int> hidden, ParamStore& store, Rng& rng);

    /// Exact log-density at time t, differentiable w.r.t. x and the
    /// conditioner parameters.
    NodeId log_prob(Graph& g, NodeId x, double t) const;
    double log_prob_value(Graph& scratch, std::span<const double> x, double t) const;

    /// Reparameterized sample: z ~ N(0, I) pushed through the generative map.
    NodeId sample(Graph& g, double t, Rng& rng) const;

    /// Normalizing map x -> (z, logdet) without a tape.
    std::pair<std::vector<double>, double> inverse(std::span<const double> x, double t) const;
    /// Generative map z -> x without a tape.
    std::vector<double> forward(std::span<const double> z, double t) const;

    int dim() const { return dim_; }
    int n_layers() const { return static_cast<int>(layers_.size()); }

    /// Zero every conditioner's output layer, making the flow the identity.
    void zero_conditioner_outputs(ParamStore& store) const;

    static constexpr double kScaleClamp = 10.0;
    static constexpr double kScaleOverflow = 20.0;

  private:
    struct Layer {
        std::vector<int> cond;   // conditioned-on coordinates (pass through)
        std::vector<int> moved;  // transformed coordinates
        Mlp s_net;
        Mlp t_net;
    };

    NodeId cond_input(Graph& g, NodeId x, const Layer& layer, double t) const;
    NodeId scales(Graph& g, NodeId cond_in, const Layer& layer) const;
    void cond_values(const ParamStore& store, std::span<const double> x, const Layer& layer,
                     double t, std::vector<double>& s, std::vector<double>& tr) const;

    int dim_ = 0;
    std::vector<Layer> layers_;
    ParamStore* store_ = nullptr;
};

/// log N(x; 0, I) in d dimensions.
double std_normal_log_density(std::span<const double> x);

}  // namespace mvsde
