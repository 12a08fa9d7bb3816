#include "mvsde/drift.hpp"

#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

DriftKind drift_kind_from_string(const std::string& s) {
    if (s == "ito" || s == "mlp") return DriftKind::ItoMlp;
    if (s == "em") return DriftKind::EmpiricalMeasure;
    if (s == "im") return DriftKind::ImplicitMeasure;
    if (s == "ml") return DriftKind::MarginalLaw;
    throw ConfigError("unknown architecture: " + s);
}

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::ItoMlp: return "ito";
        case DriftKind::EmpiricalMeasure: return "em";
        case DriftKind::ImplicitMeasure: return "im";
        case DriftKind::MarginalLaw: return "ml";
    }
    return "ito";
}

DriftModel::DriftModel(const ArchSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed), store_(std::make_shared<ParamStore>()) {
    Rng rng(seed);
    const int d = spec_.dim;
    if (d <= 0) throw ConfigError("drift: dim must be positive");

    std::vector<int> f_widths;
    f_widths.push_back(d + 1);  // (x, t)
    f_widths.insert(f_widths.end(), spec_.f_hidden.begin(), spec_.f_hidden.end());
    f_widths.push_back(d);
    f_net_ = Mlp(f_widths, spec_.activation, *store_, rng);

    if (spec_.kind != DriftKind::ItoMlp) {
        std::vector<int> p_widths;
        const int extra = spec_.kind == DriftKind::ImplicitMeasure ? 1 : 0;  // time input
        p_widths.push_back(2 * d + extra);
        p_widths.insert(p_widths.end(), spec_.phi_hidden.begin(), spec_.phi_hidden.end());
        p_widths.push_back(d);
        phi_net_ = Mlp(p_widths, spec_.activation, *store_, rng);
    }

    if (spec_.kind == DriftKind::ImplicitMeasure) {
        if (spec_.w0_width < 1) throw ConfigError("drift: w0 width must be >= 1");
        w0_off_ = store_->alloc(spec_.w0_width * d);
        // unit-normal rows, matching the data scale of X_t
        for (int i = 0; i < spec_.w0_width * d; ++i) store_->values[w0_off_ + i] = rng.normal();
    }

    if (spec_.kind == DriftKind::MarginalLaw) {
        if (spec_.sample_count < 1) throw ConfigError("drift: sample count must be >= 1");
        flow_ = std::make_shared<CouplingFlow>(d, spec_.flow_layers, spec_.flow_hidden, *store_,
                                               rng);
    }

    if (spec_.zero_output_init) {
        auto zero_last = [this](const Mlp& net) {
            const int last = net.layer_count() - 1;
            const auto& w = net.widths();
            net.set_layer(*store_,
                          last,
                          std::vector<double>(static_cast<std::size_t>(w[last]) * w[last + 1], 0.0),
                          std::vector<double>(w[last + 1], 0.0));
        };
        zero_last(f_net_);
        if (spec_.kind != DriftKind::ItoMlp) zero_last(phi_net_);
        if (flow_) flow_->zero_conditioner_outputs(*store_);
    }
}

std::span<const double> DriftModel::w0_row(int i) const {
    return {store_->values.data() + w0_off_ + static_cast<std::size_t>(i) * spec_.dim,
            static_cast<std::size_t>(spec_.dim)};
}

void DriftModel::set_w0_row(int i, std::span<const double> row) {
    if (static_cast<int>(row.size()) != spec_.dim) throw UsageError("drift: w0 row size mismatch");
    std::copy(row.begin(), row.end(),
              store_->values.begin() + w0_off_ + static_cast<std::size_t>(i) * spec_.dim);
}

NodeId DriftModel::phi_forward(Graph& g, NodeId x, NodeId y, double t) const {
    NodeId in = g.concat(x, y);
    if (spec_.kind == DriftKind::ImplicitMeasure)
        in = g.concat(in, g.input(t / spec_.time_scale));
    return phi_net_.forward(g, in);
}

NodeId DriftModel::mean_field_layer(Graph& g, NodeId x, double t) const {
    if (spec_.kind != DriftKind::ImplicitMeasure)
        throw UsageError("drift: mean_field_layer requires the ImplicitMeasure variant");
    const int n = spec_.w0_width;
    NodeId acc;
    for (int i = 0; i < n; ++i) {
        NodeId w = g.param_vec(w0_off_ + i * spec_.dim, spec_.dim);
        NodeId term = phi_forward(g, x, w, t);
        acc = acc.valid() ? g.add(acc, term) : term;
    }
    return g.scale(acc, 1.0 / n);
}

NodeId DriftModel::eval(Graph& g, std::span<const double> x, const Population* pop, double t,
                        Rng* rng) const {
    return eval(g, g.input(x), pop, t, rng);
}

NodeId DriftModel::eval(Graph& g, NodeId x, const Population* pop, double t, Rng* rng) const {
    if (g.len(x) != spec_.dim) throw ConfigError("drift: state dimension mismatch");
    NodeId xt = g.concat(x, g.input(t / spec_.time_scale));
    NodeId f = f_net_.forward(g, xt);

    switch (spec_.kind) {
        case DriftKind::ItoMlp:
            return f;
        case DriftKind::EmpiricalMeasure: {
            if (!pop || pop->empty())
                throw UsageError("drift: EmpiricalMeasure needs a non-empty population");
            NodeId acc;
            for (const auto& p : pop->particles) {
                NodeId term = phi_forward(g, x, g.input(p), t);
                acc = acc.valid() ? g.add(acc, term) : term;
            }
            return g.add(f, g.scale(acc, 1.0 / pop->size()));
        }
        case DriftKind::ImplicitMeasure:
            return g.add(f, mean_field_layer(g, x, t));
        case DriftKind::MarginalLaw: {
            if (!rng) throw UsageError("drift: MarginalLaw needs an rng for flow sampling");
            const int n = spec_.sample_count;
            NodeId acc;
            for (int i = 0; i < n; ++i) {
                NodeId xhat = flow_->sample(g, t, *rng);
                for (double v : g.val(xhat))
                    if (!std::isfinite(v))
                        throw NumericError("drift: non-finite flow sample at t=" +
                                           std::to_string(t));
                NodeId term = phi_forward(g, x, xhat, t);
                acc = acc.valid() ? g.add(acc, term) : term;
            }
            return g.add(f, g.scale(acc, 1.0 / n));
        }
    }
    throw UsageError("drift: unknown variant");
}

NodeId DriftModel::eval_with_div(Graph& g, std::span<const double> x, const Population* pop,
                                 double t, Rng* rng, NodeId& div_out) const {
    const int d = spec_.dim;
    NodeId xn = g.input(x);
    NodeId xt = g.concat(xn, g.input(t / spec_.time_scale));

    auto unit_tangents = [&g, d](int total_len) {
        std::vector<NodeId> tans(d);
        std::vector<double> e(total_len, 0.0);
        for (int k = 0; k < d; ++k) {
            e[k] = 1.0;
            tans[k] = g.input(e);
            e[k] = 0.0;
        }
        return tans;
    };

    std::vector<NodeId> f_tans = unit_tangents(d + 1);
    NodeId b = f_net_.forward_jvp(g, xt, f_tans);
    std::vector<NodeId> total_tans = f_tans;

    if (spec_.kind != DriftKind::ItoMlp) {
        std::vector<NodeId> mf_tans(d);
        NodeId acc;
        int n = 0;
        auto add_term = [&](NodeId y_node, double phi_t) {
            NodeId in = g.concat(xn, y_node);
            if (spec_.kind == DriftKind::ImplicitMeasure) in = g.concat(in, g.input(phi_t));
            std::vector<NodeId> tans = unit_tangents(g.len(in));
            NodeId term = phi_net_.forward_jvp(g, in, tans);
            acc = acc.valid() ? g.add(acc, term) : term;
            for (int k = 0; k < d; ++k)
                mf_tans[k] = mf_tans[k].valid() ? g.add(mf_tans[k], tans[k]) : tans[k];
            ++n;
        };
        switch (spec_.kind) {
            case DriftKind::EmpiricalMeasure: {
                if (!pop || pop->empty())
                    throw UsageError("drift: EmpiricalMeasure needs a non-empty population");
                for (const auto& p : pop->particles) add_term(g.input(p), t);
                break;
            }
            case DriftKind::ImplicitMeasure: {
                for (int i = 0; i < spec_.w0_width; ++i)
                    add_term(g.param_vec(w0_off_ + i * d, d), t);
                break;
            }
            case DriftKind::MarginalLaw: {
                if (!rng) throw UsageError("drift: MarginalLaw needs an rng for flow sampling");
                for (int i = 0; i < spec_.sample_count; ++i)
                    add_term(flow_->sample(g, t, *rng), t);
                break;
            }
            default:
                break;
        }
        b = g.add(b, g.scale(acc, 1.0 / n));
        for (int k = 0; k < d; ++k)
            total_tans[k] = g.add(total_tans[k], g.scale(mf_tans[k], 1.0 / n));
    }

    NodeId div;
    for (int k = 0; k < d; ++k) {
        const int idx[1] = {k};
        NodeId comp = g.gather(total_tans[k], idx);
        div = div.valid() ? g.add(div, comp) : comp;
    }
    div_out = div;
    return b;
}

std::vector<double> DriftModel::eval_value(Graph& scratch, std::span<const double> x,
                                           const Population* pop, double t, Rng* rng) const {
    scratch.reset(const_cast<ParamStore*>(store_.get()));
    NodeId b = eval(scratch, x, pop, t, rng);
    auto v = scratch.val(b);
    return {v.begin(), v.end()};
}

bool TrueDrift::needs_population() const {
    switch (system) {
        case System::Kuramoto:
        case System::FitzHughNagumo:
        case System::OpinionDynamics:
        case System::MeanFieldAtlas:
            return true;
        default:
            return false;
    }
}

std::vector<double> TrueDrift::eval(std::span<const double> x, const Population* pop,
                                    double t) const {
    if (needs_population() && (!pop || pop->empty()))
        throw UsageError("true drift: this system needs a population");

    switch (system) {
        case System::Kuramoto: {
            // b_k = sin(x_k) + K * mean_j sin(y_k^(j) - x_k)
            std::vector<double> b(2);
            for (int k = 0; k < 2; ++k) {
                double mf = 0.0;
                for (const auto& y : pop->particles) mf += std::sin(y[k] - x[k]);
                b[k] = std::sin(x[k]) + coupling * mf / pop->size();
            }
            return b;
        }
        case System::FitzHughNagumo: {
            double mean1 = 0.0;
            for (const auto& y : pop->particles) mean1 += y[0];
            mean1 /= pop->size();
            const double i_ext = 0.1 * std::sin(10.0 * t);
            const double v = x[0], w = x[1];
            return {fhn_a * v * (v - fhn_lambda) * (1.0 - v) - w + i_ext + (v - mean1),
                    -fhn_b * w + fhn_c * v + fhn_d};
        }
        case System::OpinionDynamics: {
            // mean_j psi(|x - y|) (x - y); psi vanishes outside |r - theta2| < 1
            std::vector<double> b(2, 0.0);
            for (const auto& y : pop->particles) {
                const double dx0 = x[0] - y[0];
                const double dx1 = x[1] - y[1];
                const double r = std::sqrt(dx0 * dx0 + dx1 * dx1);
                const double u = (r - od_theta2) * (r - od_theta2);
                if (u >= 1.0) continue;
                const double psi = od_theta1 * std::exp(-0.01 / (1.0 - u));
                b[0] += psi * dx0;
                b[1] += psi * dx1;
            }
            b[0] /= pop->size();
            b[1] /= pop->size();
            return b;
        }
        case System::MeanFieldAtlas: {
            // gamma(u) = 1 - u e^{2u}, u = fraction of particles strictly below x
            double below = 0.0;
            for (const auto& y : pop->particles)
                if (y[0] < x[0]) below += 1.0;
            const double u = below / pop->size();
            return {1.0 - u * std::exp(2.0 * u)};
        }
        case System::OrnsteinUhlenbeck:
            return {-3.0 * x[0], -2.0 * x[1]};
        case System::Circle:
            return {-x[0] - 2.0 * x[1], -x[1] + 2.0 * x[0]};
        case System::JumpOU:
            return {-x[0], -x[1]};
    }
    throw UsageError("true drift: unknown system");
}

TrueDrift::System system_from_string(const std::string& s) {
    if (s == "kuramoto") return TrueDrift::System::Kuramoto;
    if (s == "fhn" || s == "fitzhugh_nagumo") return TrueDrift::System::FitzHughNagumo;
    if (s == "opinion" || s == "opinion_dynamics") return TrueDrift::System::OpinionDynamics;
    if (s == "atlas" || s == "mean_field_atlas") return TrueDrift::System::MeanFieldAtlas;
    if (s == "ou") return TrueDrift::System::OrnsteinUhlenbeck;
    if (s == "circle") return TrueDrift::System::Circle;
    if (s == "jump_ou") return TrueDrift::System::JumpOU;
    throw ConfigError("unknown system: " + s);
}

std::string to_string(TrueDrift::System s) {
    switch (s) {
        case TrueDrift::System::Kuramoto: return "kuramoto";
        case TrueDrift::System::FitzHughNagumo: return "fhn";
        case TrueDrift::System::OpinionDynamics: return "opinion";
        case TrueDrift::System::MeanFieldAtlas: return "atlas";
        case TrueDrift::System::OrnsteinUhlenbeck: return "ou";
        case TrueDrift::System::Circle: return "circle";
        case TrueDrift::System::JumpOU: return "jump_ou";
    }
    return "ou";
}

}  // namespace mvsde
