#include "mvsde/graph.hpp"

#include <cmath>
#include <cstring>

namespace mvsde {

NodeId Graph::push(Op op, int len, int a, int b) {
    Node nd;
    nd.op = op;
    nd.a = a;
    nd.b = b;
    nd.len = len;
    nd.off = static_cast<std::int32_t>(vals_.size());
    vals_.resize(vals_.size() + len, 0.0);
    nodes_.push_back(nd);
    return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

NodeId Graph::input(std::span<const double> x) {
    NodeId n = push(Op::Input, static_cast<int>(x.size()));
    std::memcpy(out(nodes_[n.idx]), x.data(), x.size() * sizeof(double));
    return n;
}

NodeId Graph::param_vec(int off, int len) {
    if (!store_) throw UsageError("graph: no ParamStore bound");
    NodeId n = push(Op::ParamVec, len);
    Node& nd = nodes_[n.idx];
    nd.p0 = off;
    std::memcpy(out(nd), store_->values.data() + off, len * sizeof(double));
    return n;
}

NodeId Graph::affine(NodeId x, int w_off, int b_off, int out_dim) {
    if (!store_) throw UsageError("graph: no ParamStore bound");
    const int in_dim = len(x);
    NodeId n = push(Op::Affine, out_dim, x.idx);
    Node& nd = nodes_[n.idx];
    nd.p0 = w_off;
    nd.p1 = b_off;
    nd.c0 = in_dim;  // stored for the backward pass
    const double* w = store_->values.data() + w_off;
    const double* b = store_->values.data() + b_off;
    const double* xv = in_val(x.idx);
    double* y = out(nd);
    for (int r = 0; r < out_dim; ++r) {
        double acc = b[r];
        const double* wr = w + static_cast<std::size_t>(r) * in_dim;
        for (int c = 0; c < in_dim; ++c) acc += wr[c] * xv[c];
        y[r] = acc;
    }
    return n;
}

NodeId Graph::linear(NodeId x, int w_off, int out_dim) {
    if (!store_) throw UsageError("graph: no ParamStore bound");
    const int in_dim = len(x);
    NodeId n = push(Op::Linear, out_dim, x.idx);
    Node& nd = nodes_[n.idx];
    nd.p0 = w_off;
    nd.c0 = in_dim;
    const double* w = store_->values.data() + w_off;
    const double* xv = in_val(x.idx);
    double* y = out(nd);
    for (int r = 0; r < out_dim; ++r) {
        double acc = 0.0;
        const double* wr = w + static_cast<std::size_t>(r) * in_dim;
        for (int c = 0; c < in_dim; ++c) acc += wr[c] * xv[c];
        y[r] = acc;
    }
    return n;
}

NodeId Graph::act_grad(NodeId a, int act_kind, double slope) {
    NodeId n = push(Op::ActGrad, len(a), a.idx);
    Node& nd = nodes_[n.idx];
    nd.c0 = act_kind;
    nd.c1 = slope;
    const double* av = in_val(a.idx);
    double* y = out(nd);
    for (int i = 0; i < nd.len; ++i) {
        switch (act_kind) {
            case 0: {  // tanh
                const double th = std::tanh(av[i]);
                y[i] = 1.0 - th * th;
                break;
            }
            case 1:  // relu
                y[i] = av[i] > 0.0 ? 1.0 : 0.0;
                break;
            default:  // leaky relu
                y[i] = av[i] > 0.0 ? 1.0 : slope;
                break;
        }
    }
    return n;
}

NodeId Graph::add(NodeId a, NodeId b) {
    if (len(a) != len(b)) throw UsageError("graph: add length mismatch");
    NodeId n = push(Op::Add, len(a), a.idx, b.idx);
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] + bv[i];
    return n;
}

NodeId Graph::sub(NodeId a, NodeId b) {
    if (len(a) != len(b)) throw UsageError("graph: sub length mismatch");
    NodeId n = push(Op::Sub, len(a), a.idx, b.idx);
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] - bv[i];
    return n;
}

NodeId Graph::mul(NodeId a, NodeId b) {
    if (len(a) != len(b)) throw UsageError("graph: mul length mismatch");
    NodeId n = push(Op::Mul, len(a), a.idx, b.idx);
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] * bv[i];
    return n;
}

NodeId Graph::scale(NodeId a, double c) {
    NodeId n = push(Op::Scale, len(a), a.idx);
    nodes_[n.idx].c0 = c;
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = c * av[i];
    return n;
}

NodeId Graph::add_scaled(NodeId a, NodeId b, double c) {
    if (len(a) != len(b)) throw UsageError("graph: add_scaled length mismatch");
    NodeId n = push(Op::AddScaled, len(a), a.idx, b.idx);
    nodes_[n.idx].c0 = c;
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] + c * bv[i];
    return n;
}

NodeId Graph::exp(NodeId a) {
    NodeId n = push(Op::Exp, len(a), a.idx);
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = std::exp(av[i]);
    return n;
}

NodeId Graph::tanh(NodeId a) {
    NodeId n = push(Op::Tanh, len(a), a.idx);
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = std::tanh(av[i]);
    return n;
}

NodeId Graph::relu(NodeId a) {
    NodeId n = push(Op::Relu, len(a), a.idx);
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] > 0.0 ? av[i] : 0.0;
    return n;
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
    NodeId n = push(Op::LeakyRelu, len(a), a.idx);
    nodes_[n.idx].c0 = slope;
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] > 0.0 ? av[i] : slope * av[i];
    return n;
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
    NodeId n = push(Op::Clamp, len(a), a.idx);
    nodes_[n.idx].c0 = lo;
    nodes_[n.idx].c1 = hi;
    const double* av = in_val(a.idx);
    double* y = out(nodes_[n.idx]);
    for (int i = 0; i < len(a); ++i) y[i] = av[i] < lo ? lo : (av[i] > hi ? hi : av[i]);
    return n;
}

NodeId Graph::concat(NodeId a, NodeId b) {
    NodeId n = push(Op::Concat, len(a) + len(b), a.idx, b.idx);
    Node& nd = nodes_[n.idx];
    std::memcpy(out(nd), in_val(a.idx), len(a) * sizeof(double));
    std::memcpy(out(nd) + len(a), in_val(b.idx), len(b) * sizeof(double));
    return n;
}

NodeId Graph::gather(NodeId a, std::span<const int> idx) {
    NodeId n = push(Op::Gather, static_cast<int>(idx.size()), a.idx);
    Node& nd = nodes_[n.idx];
    nd.aux = static_cast<std::int32_t>(aux_.size());
    aux_.insert(aux_.end(), idx.begin(), idx.end());
    const double* av = in_val(a.idx);
    double* y = out(nd);
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = av[idx[i]];
    return n;
}

NodeId Graph::scatter2(NodeId a, std::span<const int> idx_a, NodeId b, std::span<const int> idx_b) {
    if (static_cast<int>(idx_a.size()) != len(a) || static_cast<int>(idx_b.size()) != len(b))
        throw UsageError("graph: scatter2 index length mismatch");
    NodeId n = push(Op::Scatter2, len(a) + len(b), a.idx, b.idx);
    Node& nd = nodes_[n.idx];
    nd.aux = static_cast<std::int32_t>(aux_.size());
    aux_.insert(aux_.end(), idx_a.begin(), idx_a.end());
    aux_.insert(aux_.end(), idx_b.begin(), idx_b.end());
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double* y = out(nd);
    for (std::size_t i = 0; i < idx_a.size(); ++i) y[idx_a[i]] = av[i];
    for (std::size_t i = 0; i < idx_b.size(); ++i) y[idx_b[i]] = bv[i];
    return n;
}

NodeId Graph::dot(NodeId a, NodeId b) {
    if (len(a) != len(b)) throw UsageError("graph: dot length mismatch");
    NodeId n = push(Op::Dot, 1, a.idx, b.idx);
    const double* av = in_val(a.idx);
    const double* bv = in_val(b.idx);
    double acc = 0.0;
    for (int i = 0; i < len(a); ++i) acc += av[i] * bv[i];
    out(nodes_[n.idx])[0] = acc;
    return n;
}

NodeId Graph::sum(NodeId a) {
    NodeId n = push(Op::Sum, 1, a.idx);
    const double* av = in_val(a.idx);
    double acc = 0.0;
    for (int i = 0; i < len(a); ++i) acc += av[i];
    out(nodes_[n.idx])[0] = acc;
    return n;
}

void Graph::backward(NodeId root) {
    if (!root.valid() || root.idx >= size()) throw UsageError("graph: invalid backward root");
    if (len(root) != 1) throw UsageError("graph: backward root must be scalar");

    grads_.assign(vals_.size(), 0.0);
    grads_[nodes_[root.idx].off] = 1.0;

    for (int k = root.idx; k >= 0; --k) {
        const Node& nd = nodes_[k];
        const double* gy = grads_.data() + nd.off;
        switch (nd.op) {
            case Op::Input:
                break;
            case Op::ParamVec: {
                double* pg = store_->grads.data() + nd.p0;
                for (int i = 0; i < nd.len; ++i) pg[i] += gy[i];
                break;
            }
            case Op::Affine: {
                const int in_dim = static_cast<int>(nd.c0);
                const double* w = store_->values.data() + nd.p0;
                const double* xv = in_val(nd.a);
                double* gx = node_grad(nd.a);
                double* gw = store_->grads.data() + nd.p0;
                double* gb = store_->grads.data() + nd.p1;
                for (int r = 0; r < nd.len; ++r) {
                    const double g = gy[r];
                    if (g == 0.0) continue;
                    const double* wr = w + static_cast<std::size_t>(r) * in_dim;
                    double* gwr = gw + static_cast<std::size_t>(r) * in_dim;
                    gb[r] += g;
                    for (int c = 0; c < in_dim; ++c) {
                        gx[c] += g * wr[c];
                        gwr[c] += g * xv[c];
                    }
                }
                break;
            }
            case Op::Linear: {
                const int in_dim = static_cast<int>(nd.c0);
                const double* w = store_->values.data() + nd.p0;
                const double* xv = in_val(nd.a);
                double* gx = node_grad(nd.a);
                double* gw = store_->grads.data() + nd.p0;
                for (int r = 0; r < nd.len; ++r) {
                    const double g = gy[r];
                    if (g == 0.0) continue;
                    const double* wr = w + static_cast<std::size_t>(r) * in_dim;
                    double* gwr = gw + static_cast<std::size_t>(r) * in_dim;
                    for (int c = 0; c < in_dim; ++c) {
                        gx[c] += g * wr[c];
                        gwr[c] += g * xv[c];
                    }
                }
                break;
            }
            case Op::ActGrad: {
                // relu/leaky-relu second derivative is zero a.e.
                if (static_cast<int>(nd.c0) == 0) {
                    const double* av = in_val(nd.a);
                    double* ga = node_grad(nd.a);
                    for (int i = 0; i < nd.len; ++i) {
                        const double th = std::tanh(av[i]);
                        ga[i] += gy[i] * (-2.0 * th * (1.0 - th * th));
                    }
                }
                break;
            }
            case Op::Add: {
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                for (int i = 0; i < nd.len; ++i) {
                    ga[i] += gy[i];
                    gb[i] += gy[i];
                }
                break;
            }
            case Op::Sub: {
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                for (int i = 0; i < nd.len; ++i) {
                    ga[i] += gy[i];
                    gb[i] -= gy[i];
                }
                break;
            }
            case Op::Mul: {
                const double* av = in_val(nd.a);
                const double* bv = in_val(nd.b);
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                for (int i = 0; i < nd.len; ++i) {
                    ga[i] += gy[i] * bv[i];
                    gb[i] += gy[i] * av[i];
                }
                break;
            }
            case Op::Scale: {
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i) ga[i] += nd.c0 * gy[i];
                break;
            }
            case Op::AddScaled: {
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                for (int i = 0; i < nd.len; ++i) {
                    ga[i] += gy[i];
                    gb[i] += nd.c0 * gy[i];
                }
                break;
            }
            case Op::Exp: {
                const double* y = vals_.data() + nd.off;
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i) ga[i] += gy[i] * y[i];
                break;
            }
            case Op::Tanh: {
                const double* y = vals_.data() + nd.off;
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i) ga[i] += gy[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Relu: {
                const double* av = in_val(nd.a);
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i) ga[i] += av[i] > 0.0 ? gy[i] : 0.0;
                break;
            }
            case Op::LeakyRelu: {
                const double* av = in_val(nd.a);
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i) ga[i] += av[i] > 0.0 ? gy[i] : nd.c0 * gy[i];
                break;
            }
            case Op::Clamp: {
                const double* av = in_val(nd.a);
                double* ga = node_grad(nd.a);
                for (int i = 0; i < nd.len; ++i)
                    if (av[i] > nd.c0 && av[i] < nd.c1) ga[i] += gy[i];
                break;
            }
            case Op::Concat: {
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                const int la = nodes_[nd.a].len;
                for (int i = 0; i < la; ++i) ga[i] += gy[i];
                for (int i = 0; i < nd.len - la; ++i) gb[i] += gy[la + i];
                break;
            }
            case Op::Gather: {
                double* ga = node_grad(nd.a);
                const int* idx = aux_.data() + nd.aux;
                for (int i = 0; i < nd.len; ++i) ga[idx[i]] += gy[i];
                break;
            }
            case Op::Scatter2: {
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                const int la = nodes_[nd.a].len;
                const int* idx = aux_.data() + nd.aux;
                for (int i = 0; i < la; ++i) ga[i] += gy[idx[i]];
                for (int i = 0; i < nd.len - la; ++i) gb[i] += gy[idx[la + i]];
                break;
            }
            case Op::Dot: {
                const double* av = in_val(nd.a);
                const double* bv = in_val(nd.b);
                double* ga = node_grad(nd.a);
                double* gb = node_grad(nd.b);
                const double g = gy[0];
                const int la = nodes_[nd.a].len;
                for (int i = 0; i < la; ++i) {
                    ga[i] += g * bv[i];
                    gb[i] += g * av[i];
                }
                break;
            }
            case Op::Sum: {
                double* ga = node_grad(nd.a);
                const double g = gy[0];
                const int la = nodes_[nd.a].len;
                for (int i = 0; i < la; ++i) ga[i] += g;
                break;
            }
        }
    }
}

double grad_check(const std::function<double(std::span<const double>)>& loss,
                  const std::function<std::vector<double>(std::span<const double>)>& autodiff_grad,
                  std::span<const double> params, double h) {
    std::vector<double> p(params.begin(), params.end());
    const std::vector<double> g = autodiff_grad(p);
    if (g.size() != p.size()) throw UsageError("grad_check: gradient length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + h;
        const double up = loss(p);
        p[i] = saved - h;
        const double dn = loss(p);
        p[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double denom = std::max(1.0, std::abs(fd));
        worst = std::max(worst, std::abs(g[i] - fd) / denom);
    }
    return worst;
}

}  // namespace mvsde
