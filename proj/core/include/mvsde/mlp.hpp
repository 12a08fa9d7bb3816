#pragma once

#include <string>
#include <vector>

#include "mvsde/graph.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

enum class Activation { LeakyRelu, Tanh, Relu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Multilayer perceptron over parameter slices of a shared ParamStore.
/// Hidden layers apply the activation; the output layer is linear.
/// LeakyReLU slope is 0.01.
class Mlp {
  public:
    Mlp() = default;

    /// `widths` = [input, hidden..., output]. Allocates slices in `store`,
    /// initialized uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Mlp(std::vector<int> widths, Activation act, ParamStore& store, Rng& rng);

    NodeId forward(Graph& g, NodeId x) const;

    /// Forward pass that also propagates directional derivatives (tangents):
    /// on return tangents[k] holds (d output / d input) * tangents[k].
    /// Exact for tanh; exact a.e. for the piecewise-linear activations.
    NodeId forward_jvp(Graph& g, NodeId x, std::vector<NodeId>& tangents) const;

    /// Plain evaluation without a tape (same arithmetic, used on hot paths
    /// where no gradient is needed).
    void forward_value(const ParamStore& store, std::span<const double> x,
                       std::vector<double>& out, std::vector<double>& scratch) const;

    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    const std::vector<int>& widths() const { return widths_; }
    Activation activation() const { return act_; }

    /// sum over layers of (w_i * w_{i+1} + w_{i+1}).
    int param_count() const;

    /// Overwrite one layer's weight matrix / bias, e.g. to hard-code a drift.
    void set_layer(ParamStore& store, int layer, std::span<const double> w,
                   std::span<const double> b) const;

    int layer_w_off(int layer) const { return w_off_[layer]; }
    int layer_b_off(int layer) const { return b_off_[layer]; }
    int layer_count() const { return static_cast<int>(w_off_.size()); }

    static constexpr double kLeakySlope = 0.01;

  private:
    NodeId activate(Graph& g, NodeId h) const;

    std::vector<int> widths_;
    Activation act_ = Activation::LeakyRelu;
    std::vector<int> w_off_;
    std::vector<int> b_off_;
};

/// AdamW with bias correction and per-step exponential learning-rate decay:
/// the effective rate at step t is lr * gamma^t.
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-4;
    double weight_decay = 0.0;
    double gamma = 0.9998;

    std::vector<double> m;
    std::vector<double> v;
    long step_count = 0;

    void init(int n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step_count = 0;
    }

    /// One update in place. Throws NumericError on NaN gradients (training
    /// divergence signal).
    void step(std::span<double> params, std::span<const double> grads);
};

}  // namespace mvsde
