#include "mvsde/mlp.hpp"

#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

Activation activation_from_string(const std::string& s) {
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "leaky_relu";
}

Mlp::Mlp(std::vector<int> widths, Activation act, ParamStore& store, Rng& rng)
    : widths_(std::move(widths)), act_(act) {
    if (widths_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
    for (int w : widths_)
        if (w <= 0) throw ConfigError("mlp: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int fan_in = widths_[l];
        const int fan_out = widths_[l + 1];
        const int woff = store.alloc(fan_in * fan_out);
        const int boff = store.alloc(fan_out);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_in * fan_out; ++i)
            store.values[woff + i] = rng.uniform(-bound, bound);
        for (int i = 0; i < fan_out; ++i) store.values[boff + i] = rng.uniform(-bound, bound);
        w_off_.push_back(woff);
        b_off_.push_back(boff);
    }
}

NodeId Mlp::activate(Graph& g, NodeId h) const {
    switch (act_) {
        case Activation::LeakyRelu: return g.leaky_relu(h, kLeakySlope);
        case Activation::Tanh: return g.tanh(h);
        case Activation::Relu: return g.relu(h);
    }
    return h;
}

NodeId Mlp::forward(Graph& g, NodeId x) const {
    if (g.len(x) != widths_.front()) throw ConfigError("mlp: input length mismatch");
    NodeId h = x;
    for (std::size_t l = 0; l < w_off_.size(); ++l) {
        h = g.affine(h, w_off_[l], b_off_[l], widths_[l + 1]);
        if (l + 1 < w_off_.size()) h = activate(g, h);
    }
    return h;
}

NodeId Mlp::forward_jvp(Graph& g, NodeId x, std::vector<NodeId>& tangents) const {
    if (g.len(x) != widths_.front()) throw ConfigError("mlp: input length mismatch");
    NodeId h = x;
    for (std::size_t l = 0; l < w_off_.size(); ++l) {
        NodeId pre = g.affine(h, w_off_[l], b_off_[l], widths_[l + 1]);
        for (NodeId& t : tangents) t = g.linear(t, w_off_[l], widths_[l + 1]);
        if (l + 1 < w_off_.size()) {
            const int kind = act_ == Activation::Tanh ? 0 : (act_ == Activation::Relu ? 1 : 2);
            NodeId dact = g.act_grad(pre, kind, kLeakySlope);
            for (NodeId& t : tangents) t = g.mul(t, dact);
            h = activate(g, pre);
        } else {
            h = pre;
        }
    }
    return h;
}

void Mlp::forward_value(const ParamStore& store, std::span<const double> x,
                        std::vector<double>& out, std::vector<double>& scratch) const {
    if (static_cast<int>(x.size()) != widths_.front())
        throw ConfigError("mlp: input length mismatch");
    scratch.assign(x.begin(), x.end());
    for (std::size_t l = 0; l < w_off_.size(); ++l) {
        const int in_dim = widths_[l];
        const int out_dim = widths_[l + 1];
        out.assign(store.values.begin() + b_off_[l], store.values.begin() + b_off_[l] + out_dim);
        const double* w = store.values.data() + w_off_[l];
        for (int r = 0; r < out_dim; ++r) {
            const double* wr = w + static_cast<std::size_t>(r) * in_dim;
            double acc = out[r];
            for (int c = 0; c < in_dim; ++c) acc += wr[c] * scratch[c];
            out[r] = acc;
        }
        if (l + 1 < w_off_.size()) {
            for (double& h : out) {
                switch (act_) {
                    case Activation::LeakyRelu: h = h > 0.0 ? h : kLeakySlope * h; break;
                    case Activation::Tanh: h = std::tanh(h); break;
                    case Activation::Relu: h = h > 0.0 ? h : 0.0; break;
                }
            }
        }
        scratch = out;
    }
}

int Mlp::param_count() const {
    int n = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
        n += widths_[l] * widths_[l + 1] + widths_[l + 1];
    return n;
}

void Mlp::set_layer(ParamStore& store, int layer, std::span<const double> w,
                    std::span<const double> b) const {
    const int in_dim = widths_[layer];
    const int out_dim = widths_[layer + 1];
    if (static_cast<int>(w.size()) != in_dim * out_dim || static_cast<int>(b.size()) != out_dim)
        throw UsageError("mlp: set_layer size mismatch");
    std::copy(w.begin(), w.end(), store.values.begin() + w_off_[layer]);
    std::copy(b.begin(), b.end(), store.values.begin() + b_off_[layer]);
}

void AdamW::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw UsageError("adamw: params/grads length mismatch");
    if (m.size() != params.size()) throw UsageError("adamw: state not initialized");
    for (double gv : grads)
        if (std::isnan(gv))
            throw NumericError("adamw: NaN gradient at step " + std::to_string(step_count + 1));

    step_count += 1;
    const double t = static_cast<double>(step_count);
    const double lr_t = lr * std::pow(gamma, t);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double gv = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr_t * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
    }
}

}  // namespace mvsde
