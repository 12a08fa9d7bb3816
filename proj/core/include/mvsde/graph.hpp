#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvsde/errors.hpp"

namespace mvsde {

/// Flat trainable-parameter vector plus parallel gradient buffer.
/// All networks of one model allocate slices out of a single store, so a
/// checkpoint is just this vector and the optimizer sees one contiguous array.
struct ParamStore {
    std::vector<double> values;
    std::vector<double> grads;

    int alloc(int n) {
        const int off = static_cast<int>(values.size());
        values.resize(values.size() + n, 0.0);
        grads.resize(values.size(), 0.0);
        return off;
    }

    void zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }
    int size() const { return static_cast<int>(values.size()); }
};

/// Handle to a node on the tape.
struct NodeId {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

/// Reverse-mode autodiff tape at vector granularity.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and backward() is a single reverse sweep. Values and adjoints
/// live in arenas that keep their capacity across reset(), which makes the
/// steady-state of a training loop allocation-free.
///
/// A Graph is single-threaded. It binds to one ParamStore at reset();
/// backward() accumulates parameter adjoints into that store's grad buffer
/// (callers zero it between optimizer steps).
class Graph {
  public:
    enum class Op : std::uint8_t {
        Input,      // constant leaf (gradient tracked, nothing upstream)
        ParamVec,   // leaf view of params[off..off+len)
        Affine,     // W x + b with W,b parameter slices
        Linear,     // W x without bias (tangent propagation)
        ActGrad,    // elementwise activation derivative at a
        Add,        // a + b elementwise
        Sub,        // a - b elementwise
        Mul,        // a * b elementwise (same length)
        Scale,      // c * a
        AddScaled,  // a + c * b
        Exp,
        Tanh,
        Relu,
        LeakyRelu,  // slope in c0
        Clamp,      // [c0, c1], pass-through gradient inside
        Concat,
        Gather,     // pick indices from a
        Scatter2,   // place a at indices A, b at indices B
        Dot,        // scalar <a, b>
        Sum,        // scalar sum of entries
    };

    Graph() = default;

    void reset(ParamStore* store = nullptr) {
        if (store) store_ = store;
        nodes_.clear();
        vals_.clear();
        grads_.clear();
        aux_.clear();
    }

    ParamStore* store() const { return store_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    int len(NodeId n) const { return nodes_[n.idx].len; }

    std::span<const double> val(NodeId n) const {
        const Node& nd = nodes_[n.idx];
        return {vals_.data() + nd.off, static_cast<std::size_t>(nd.len)};
    }
    /// Node adjoint; meaningful after backward().
    std::span<const double> grad(NodeId n) const {
        const Node& nd = nodes_[n.idx];
        return {grads_.data() + nd.off, static_cast<std::size_t>(nd.len)};
    }
    double scalar(NodeId n) const {
        if (len(n) != 1) throw UsageError("graph: node is not scalar");
        return val(n)[0];
    }

    // ---- leaves ----
    NodeId input(std::span<const double> x);
    NodeId input(double x) { return input(std::span<const double>(&x, 1)); }
    NodeId param_vec(int off, int len);

    // ---- ops ----
    NodeId affine(NodeId x, int w_off, int b_off, int out_dim);
    NodeId linear(NodeId x, int w_off, int out_dim);
    /// act'(a) as a node; its own backward uses act''. Used by forward-mode
    /// tangent passes (divergence computation).
    NodeId act_grad(NodeId a, int act_kind, double slope = 0.0);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_scaled(NodeId a, NodeId b, double c);
    NodeId exp(NodeId a);
    NodeId tanh(NodeId a);
    NodeId relu(NodeId a);
    NodeId leaky_relu(NodeId a, double slope);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId concat(NodeId a, NodeId b);
    NodeId gather(NodeId a, std::span<const int> idx);
    NodeId scatter2(NodeId a, std::span<const int> idx_a, NodeId b, std::span<const int> idx_b);
    NodeId dot(NodeId a, NodeId b);
    NodeId sum(NodeId a);

    /// Seed d(root)/d(root) = 1 and sweep the tape once in reverse.
    /// Node adjoints are zeroed first; parameter adjoints accumulate into the
    /// bound ParamStore (not zeroed here).
    void backward(NodeId root);

  private:
    struct Node {
        Op op;
        std::int32_t a = -1, b = -1;  // input node indices
        std::int32_t off = 0;         // value/grad offset in arena
        std::int32_t len = 0;
        std::int32_t p0 = -1, p1 = -1;  // parameter offsets (Affine, ParamVec)
        std::int32_t aux = -1;          // offset into aux_ (Gather/Scatter2 index lists)
        double c0 = 0.0, c1 = 0.0;
    };

    NodeId push(Op op, int len, int a = -1, int b = -1);
    double* out(const Node& nd) { return vals_.data() + nd.off; }
    const double* in_val(int node) const { return vals_.data() + nodes_[node].off; }
    double* node_grad(int node) { return grads_.data() + nodes_[node].off; }

    ParamStore* store_ = nullptr;
    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<int> aux_;
};

/// Max over coordinates of |autodiff - central difference| / max(1, |central difference|).
/// `loss` must be deterministic in the parameters; `autodiff_grad` returns
/// d(loss)/d(params) at the same point.
double grad_check(const std::function<double(std::span<const double>)>& loss,
                  const std::function<std::vector<double>(std::span<const double>)>& autodiff_grad,
                  std::span<const double> params, double h);

}  // namespace mvsde
