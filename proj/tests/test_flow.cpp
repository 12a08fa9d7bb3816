#include <cmath>

#include "doctest.h"
#include "mvsde/errors.hpp"
#include "mvsde/flow.hpp"

using namespace mvsde;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

CouplingFlow zero_flow(int dim, int layers, ParamStore& store) {
    Rng rng(1);
    CouplingFlow flow(dim, layers, {}, store, rng);
    std::fill(store.values.begin(), store.values.end(), 0.0);
    return flow;
}

}  // namespace

TEST_CASE("identity flow: log-density is the standard normal's") {
    ParamStore store;
    CouplingFlow flow = zero_flow(2, 4, store);
    Graph g;
    g.reset(&store);
    CHECK(flow.log_prob_value(g, std::vector<double>{0.0, 0.0}, 0.3) ==
          doctest::Approx(-kLog2Pi).epsilon(1e-12));
    CHECK(flow.log_prob_value(g, std::vector<double>{1.0, 0.0}, 0.3) ==
          doctest::Approx(-kLog2Pi - 0.5).epsilon(1e-12));
}

TEST_CASE("random 1-d flow: density integrates to one (trapezoid oracle)") {
    ParamStore store;
    Rng rng(17);
    CouplingFlow flow(1, 3, {8}, store, rng);
    // scale down the random conditioner outputs a bit so the affine maps stay tame
    for (double& v : store.values) v *= 0.5;
    Graph g;
    // the 1-d flow is an affine map of the base normal; bracket +-8 sigma
    const std::vector<double> z_lo = {-8.0}, z_hi = {8.0};
    double lo = flow.forward(z_lo, 0.4)[0];
    double hi = flow.forward(z_hi, 0.4)[0];
    if (lo > hi) std::swap(lo, hi);
    const int n = 20000;
    double integral = 0.0;
    double prev = std::exp(flow.log_prob_value(g, std::vector<double>{lo}, 0.4));
    const double h = (hi - lo) / n;
    for (int i = 1; i <= n; ++i) {
        const double x = lo + h * i;
        const double cur = std::exp(flow.log_prob_value(g, std::vector<double>{x}, 0.4));
        integral += 0.5 * (prev + cur) * h;
        prev = cur;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("identity flow: sample mean over 1e5 draws is near zero") {
    ParamStore store;
    CouplingFlow flow = zero_flow(2, 4, store);
    Graph g;
    Rng rng(99);
    double m0 = 0.0, m1 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        if (i % 500 == 0) g.reset(&store);
        NodeId s = flow.sample(g, 0.1, rng);
        m0 += g.val(s)[0];
        m1 += g.val(s)[1];
    }
    m0 /= n;
    m1 /= n;
    const double se = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(m0) < 3.0 * se);
    CHECK(std::abs(m1) < 3.0 * se);
}

TEST_CASE("fixed rng seed reproduces the sample") {
    ParamStore store;
    Rng init(5);
    CouplingFlow flow(2, 4, {6}, store, init);
    Graph g;
    Rng r1(42), r2(42);
    g.reset(&store);
    NodeId a = flow.sample(g, 0.7, r1);
    const std::vector<double> av(g.val(a).begin(), g.val(a).end());
    g.reset(&store);
    NodeId b = flow.sample(g, 0.7, r2);
    CHECK(av[0] == g.val(b)[0]);
    CHECK(av[1] == g.val(b)[1]);
}

TEST_CASE("log_prob of samples stays finite over 1e4 draws") {
    ParamStore store;
    Rng init(8);
    CouplingFlow flow(2, 4, {6}, store, init);
    Graph g;
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        g.reset(&store);
        NodeId s = flow.sample(g, 0.25, rng);
        const std::vector<double> x(g.val(s).begin(), g.val(s).end());
        const double lp = flow.log_prob_value(g, x, 0.25);
        REQUIRE(std::isfinite(lp));
    }
}

TEST_CASE("inverse: identity flow gives z = x with zero logdet") {
    ParamStore store;
    CouplingFlow flow = zero_flow(2, 4, store);
    const std::vector<double> x = {0.6, -1.3};
    const auto [z, logdet] = flow.inverse(x, 0.9);
    CHECK(z[0] == x[0]);
    CHECK(z[1] == x[1]);
    CHECK(logdet == 0.0);
}

TEST_CASE("inverse: constant scale log-s = c gives logdet = k c") {
    ParamStore store;
    Rng rng(1);
    CouplingFlow flow(1, 1, {}, store, rng);  // conditioner sees only t
    std::fill(store.values.begin(), store.values.end(), 0.0);
    // s-net is the first allocation: weights [t-coeff], bias; set bias to c
    const double c = 0.37;
    store.values[1] = c;
    const auto [z, logdet] = flow.inverse(std::vector<double>{2.0}, 0.0);
    CHECK(logdet == doctest::Approx(c).epsilon(1e-15));
    CHECK(z[0] == doctest::Approx(2.0 * std::exp(c)).epsilon(1e-15));
}

TEST_CASE("round trip forward(inverse(x)) over 1000 random points") {
    ParamStore store;
    Rng init(23);
    CouplingFlow flow(3, 4, {8}, store, init);
    Rng rng(7);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> x = {2.0 * rng.normal(), 2.0 * rng.normal(),
                                       2.0 * rng.normal()};
        const double t = rng.uniform();
        const auto [z, logdet] = flow.inverse(x, t);
        const auto back = flow.forward(z, t);
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back[c] - x[c]));
        // and the other direction
        const auto y = flow.forward(x, t);
        const auto [zz, ld2] = flow.inverse(y, t);
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(zz[c] - x[c]));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("tape log_prob agrees with the value path and matches change of variables") {
    ParamStore store;
    Rng init(31);
    CouplingFlow flow(2, 4, {6}, store, init);
    Graph g;
    const std::vector<double> x = {0.4, -0.2};
    const double t = 0.55;
    const double lp = flow.log_prob_value(g, x, t);
    const auto [z, logdet] = flow.inverse(x, t);
    CHECK(lp == doctest::Approx(std_normal_log_density(z) + logdet).epsilon(1e-12));
}

TEST_CASE("construction rejects masks that never transform a coordinate") {
    ParamStore store;
    Rng rng(1);
    CHECK_THROWS_AS(CouplingFlow(2, 1, {}, store, rng), ConfigError);
}

TEST_CASE("log_prob gradient w.r.t. parameters passes grad_check") {
    ParamStore store;
    Rng init(13);
    CouplingFlow flow(2, 2, {5}, store, init);
    const std::vector<double> x = {0.3, 0.8};
    // rebuild the flow on a fresh store so the slice layout matches, then
    // overwrite the values with the perturbed parameters
    auto loss = [&](std::span<const double> p) {
        ParamStore s;
        Rng r(13);
        CouplingFlow f(2, 2, {5}, s, r);
        std::copy(p.begin(), p.end(), s.values.begin());
        Graph g;
        return f.log_prob_value(g, x, 0.2);
    };
    auto grad = [&](std::span<const double> p) {
        ParamStore s;
        Rng r(13);
        CouplingFlow f(2, 2, {5}, s, r);
        std::copy(p.begin(), p.end(), s.values.begin());
        Graph g;
        g.reset(&s);
        g.backward(f.log_prob(g, g.input(x), 0.2));
        return s.grads;
    };
    CHECK(grad_check(loss, grad, store.values, 1e-5) < 1e-4);
}

TEST_CASE("log_prob is differentiable w.r.t. x") {
    ParamStore store;
    Rng init(41);
    CouplingFlow flow(2, 2, {5}, store, init);
    Graph g;
    const std::vector<double> x = {0.1, -0.5};
    g.reset(&store);
    NodeId xn = g.input(x);
    NodeId lp = flow.log_prob(g, xn, 0.6);
    g.backward(lp);
    const std::vector<double> gx(g.grad(xn).begin(), g.grad(xn).end());
    // finite differences in x
    const double h = 1e-6;
    for (int c = 0; c < 2; ++c) {
        std::vector<double> up = x, dn = x;
        up[c] += h;
        dn[c] -= h;
        const double fd =
            (flow.log_prob_value(g, up, 0.6) - flow.log_prob_value(g, dn, 0.6)) / (2.0 * h);
        CHECK(gx[c] == doctest::Approx(fd).epsilon(1e-5));
    }
}
