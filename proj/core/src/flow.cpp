#include "mvsde/flow.hpp"

#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

double clamp_scale(double s) {
    if (std::abs(s) > CouplingFlow::kScaleOverflow)
        throw NumericError("coupling flow: scale output " + std::to_string(s) +
                           " exceeds overflow guard");
    return s < -CouplingFlow::kScaleClamp ? -CouplingFlow::kScaleClamp
           : s > CouplingFlow::kScaleClamp ? CouplingFlow::kScaleClamp
                                           : s;
}
}  // namespace

double std_normal_log_density(std::span<const double> x) {
    double q = 0.0;
    for (double v : x) q += v * v;
    return -0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * q;
}

CouplingFlow::CouplingFlow(int dim, int n_layers, std::vector<int> hidden, ParamStore& store,
                           Rng& rng)
    : dim_(dim), store_(&store) {
    if (dim <= 0) throw ConfigError("coupling flow: dim must be positive");
    if (n_layers <= 0) throw ConfigError("coupling flow: need at least one layer");
    std::vector<bool> transformed(dim, false);
    for (int l = 0; l < n_layers; ++l) {
        Layer layer;
        for (int i = 0; i < dim; ++i) {
            if (dim > 1 && i % 2 == l % 2)
                layer.cond.push_back(i);
            else
                layer.moved.push_back(i);
        }
        for (int i : layer.moved) transformed[i] = true;
        const int in_dim = static_cast<int>(layer.cond.size()) + 1;  // + time
        const int out_dim = static_cast<int>(layer.moved.size());
        std::vector<int> widths;
        widths.push_back(in_dim);
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        widths.push_back(out_dim);
        layer.s_net = Mlp(widths, Activation::Tanh, store, rng);
        layer.t_net = Mlp(widths, Activation::Relu, store, rng);
        layers_.push_back(std::move(layer));
    }
    for (int i = 0; i < dim; ++i)
        if (!transformed[i])
            throw ConfigError("coupling flow: coordinate " + std::to_string(i) +
                              " is never transformed; use more layers");
}

void CouplingFlow::zero_conditioner_outputs(ParamStore& store) const {
    for (const Layer& layer : layers_) {
        for (const Mlp* net : {&layer.s_net, &layer.t_net}) {
            const int last = net->layer_count() - 1;
            const auto& w = net->widths();
            net->set_layer(store, last,
                           std::vector<double>(static_cast<std::size_t>(w[last]) * w[last + 1], 0.0),
                           std::vector<double>(w[last + 1], 0.0));
        }
    }
}

NodeId CouplingFlow::cond_input(Graph& g, NodeId x, const Layer& layer, double t) const {
    NodeId t_node = g.input(t);
    if (layer.cond.empty()) return t_node;
    NodeId xa = g.gather(x, layer.cond);
    return g.concat(xa, t_node);
}

NodeId CouplingFlow::scales(Graph& g, NodeId cond_in, const Layer& layer) const {
    NodeId s_raw = layer.s_net.forward(g, cond_in);
    for (double v : g.val(s_raw))
        if (std::abs(v) > kScaleOverflow)
            throw NumericError("coupling flow: scale output " + std::to_string(v) +
                               " exceeds overflow guard");
    return g.clamp(s_raw, -kScaleClamp, kScaleClamp);
}

NodeId CouplingFlow::log_prob(Graph& g, NodeId x, double t) const {
    if (g.len(x) != dim_) throw ConfigError("coupling flow: dimension mismatch");
    NodeId z = x;
    NodeId logdet;
    for (const Layer& layer : layers_) {
        NodeId cin = cond_input(g, z, layer, t);
        NodeId s = scales(g, cin, layer);
        NodeId shift = layer.t_net.forward(g, cin);
        NodeId zb = g.gather(z, layer.moved);
        zb = g.add(g.mul(zb, g.exp(s)), shift);
        if (layer.cond.empty()) {
            z = zb;
        } else {
            NodeId za = g.gather(z, layer.cond);
            z = g.scatter2(za, layer.cond, zb, layer.moved);
        }
        NodeId s_sum = g.sum(s);
        logdet = logdet.valid() ? g.add(logdet, s_sum) : s_sum;
    }
    // log N(z) = -d/2 log(2 pi) - 0.5 |z|^2
    NodeId q = g.dot(z, z);
    NodeId base = g.scale(q, -0.5);
    const double c = -0.5 * dim_ * kLog2Pi;
    NodeId total = g.add(g.add(base, logdet), g.input(c));
    if (!std::isfinite(g.scalar(total)))
        throw NumericError("coupling flow: non-finite log-density");
    return total;
}

double CouplingFlow::log_prob_value(Graph& scratch, std::span<const double> x, double t) const {
    scratch.reset(store_);
    return scratch.scalar(log_prob(scratch, scratch.input(x), t));
}

NodeId CouplingFlow::sample(Graph& g, double t, Rng& rng) const {
    std::vector<double> z(dim_);
    for (double& v : z) v = rng.normal();
    NodeId x = g.input(z);
    // generative direction: invert layers in reverse order
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        const Layer& layer = *it;
        NodeId cin = cond_input(g, x, layer, t);
        NodeId s = scales(g, cin, layer);
        NodeId shift = layer.t_net.forward(g, cin);
        NodeId xb = g.gather(x, layer.moved);
        xb = g.mul(g.sub(xb, shift), g.exp(g.scale(s, -1.0)));
        if (layer.cond.empty()) {
            x = xb;
        } else {
            NodeId xa = g.gather(x, layer.cond);
            x = g.scatter2(xa, layer.cond, xb, layer.moved);
        }
    }
    return x;
}

void CouplingFlow::cond_values(const ParamStore& store, std::span<const double> x,
                               const Layer& layer, double t, std::vector<double>& s,
                               std::vector<double>& tr) const {
    std::vector<double> cin;
    cin.reserve(layer.cond.size() + 1);
    for (int i : layer.cond) cin.push_back(x[i]);
    cin.push_back(t);
    std::vector<double> scratch;
    layer.s_net.forward_value(store, cin, s, scratch);
    for (double& v : s) v = clamp_scale(v);
    layer.t_net.forward_value(store, cin, tr, scratch);
}

std::pair<std::vector<double>, double> CouplingFlow::inverse(std::span<const double> x,
                                                             double t) const {
    std::vector<double> z(x.begin(), x.end());
    std::vector<double> s, tr;
    double logdet = 0.0;
    for (const Layer& layer : layers_) {
        cond_values(*store_, z, layer, t, s, tr);
        for (std::size_t k = 0; k < layer.moved.size(); ++k) {
            z[layer.moved[k]] = z[layer.moved[k]] * std::exp(s[k]) + tr[k];
            logdet += s[k];
        }
    }
    return {std::move(z), logdet};
}

std::vector<double> CouplingFlow::forward(std::span<const double> z, double t) const {
    std::vector<double> x(z.begin(), z.end());
    std::vector<double> s, tr;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        const Layer& layer = *it;
        cond_values(*store_, x, layer, t, s, tr);
        for (std::size_t k = 0; k < layer.moved.size(); ++k)
            x[layer.moved[k]] = (x[layer.moved[k]] - tr[k]) * std::exp(-s[k]);
    }
    return x;
}

}  // namespace mvsde
