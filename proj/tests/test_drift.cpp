#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mvsde/drift.hpp"
#include "mvsde/errors.hpp"

using namespace mvsde;

namespace {

ArchSpec tiny_spec(DriftKind kind, int dim = 1) {
    ArchSpec s;
    s.kind = kind;
    s.dim = dim;
    s.f_hidden = {};  // single linear layer, easy to hard-code
    s.phi_hidden = {};
    s.w0_width = 4;
    s.sample_count = 4;
    s.flow_layers = 2;
    s.flow_hidden = {};
    return s;
}

void zero_params(DriftModel& m) {
    std::fill(m.store().values.begin(), m.store().values.end(), 0.0);
}

/// phi(x, y[, t]) = y: weights [0 | I | 0], zero bias.
void set_phi_second_argument(DriftModel& m) {
    const int d = m.dim();
    const int in = m.phi_net().widths().front();
    std::vector<double> w(static_cast<std::size_t>(d) * in, 0.0);
    for (int r = 0; r < d; ++r) w[static_cast<std::size_t>(r) * in + d + r] = 1.0;
    std::vector<double> b(d, 0.0);
    m.phi_net().set_layer(m.store(), 0, w, b);
}

/// phi(x, y) = y - x.
void set_phi_attraction(DriftModel& m) {
    const int d = m.dim();
    const int in = m.phi_net().widths().front();
    std::vector<double> w(static_cast<std::size_t>(d) * in, 0.0);
    for (int r = 0; r < d; ++r) {
        w[static_cast<std::size_t>(r) * in + r] = -1.0;
        w[static_cast<std::size_t>(r) * in + d + r] = 1.0;
    }
    std::vector<double> b(d, 0.0);
    m.phi_net().set_layer(m.store(), 0, w, b);
}

Population point_population(const std::vector<std::vector<double>>& pts, double t = 0.0) {
    Population pop;
    pop.particles = pts;
    pop.t = t;
    return pop;
}

}  // namespace

TEST_CASE("ito: zero-weight network gives the zero drift") {
    DriftModel m(tiny_spec(DriftKind::ItoMlp, 2), 1);
    zero_params(m);
    Graph g;
    const auto b = m.eval_value(g, std::vector<double>{0.7, -0.3}, nullptr, 0.5);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
}

TEST_CASE("ito: hand-coded weights encode b = (-3 x1, -2 x2)") {
    DriftModel m(tiny_spec(DriftKind::ItoMlp, 2), 1);
    zero_params(m);
    // f input is (x1, x2, t)
    const std::vector<double> w = {-3.0, 0.0, 0.0, 0.0, -2.0, 0.0};
    const std::vector<double> b = {0.0, 0.0};
    m.f_net().set_layer(m.store(), 0, w, b);
    Graph g;
    const auto out = m.eval_value(g, std::vector<double>{1.0, 1.0}, nullptr, 3.0);
    CHECK(out[0] == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("ito: eval equals the f-network forward of (x, t)") {
    ArchSpec spec = tiny_spec(DriftKind::ItoMlp, 2);
    spec.f_hidden = {8, 8};
    DriftModel m(spec, 77);
    Graph g;
    const std::vector<double> x = {0.2, -1.4};
    const double t = 0.8;
    const auto b = m.eval_value(g, x, nullptr, t);
    g.reset(&m.store());
    const std::vector<double> xt = {0.2, -1.4, 0.8};
    NodeId direct = m.f_net().forward(g, g.input(xt));
    CHECK(b[0] == g.val(direct)[0]);
    CHECK(b[1] == g.val(direct)[1]);
}

TEST_CASE("em: hand average of phi(x,y) = y - x") {
    DriftModel m(tiny_spec(DriftKind::EmpiricalMeasure, 1), 1);
    zero_params(m);
    set_phi_attraction(m);
    Graph g;
    const Population pop = point_population({{0.0}, {2.0}});
    const auto b = m.eval_value(g, std::vector<double>{0.0}, &pop, 0.0);
    CHECK(b[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("em: self-interaction vanishes for phi(x,y) = y - x") {
    DriftModel m(tiny_spec(DriftKind::EmpiricalMeasure, 1), 1);
    zero_params(m);
    set_phi_attraction(m);
    Graph g;
    const Population pop = point_population({{0.7}});
    const auto b = m.eval_value(g, std::vector<double>{0.7}, &pop, 0.0);
    CHECK(b[0] == 0.0);
}

TEST_CASE("em: empty population is a usage error") {
    DriftModel m(tiny_spec(DriftKind::EmpiricalMeasure, 1), 1);
    Graph g;
    Population pop;
    CHECK_THROWS_AS(m.eval_value(g, std::vector<double>{0.0}, &pop, 0.0), UsageError);
    CHECK_THROWS_AS(m.eval_value(g, std::vector<double>{0.0}, nullptr, 0.0), UsageError);
}

TEST_CASE("kuramoto true drift: synchronized population") {
    TrueDrift kuramoto;
    kuramoto.system = TrueDrift::System::Kuramoto;
    kuramoto.coupling = 2.0;
    const double half_pi = 1.5707963267948966;
    Population pop = point_population(std::vector<std::vector<double>>(20, {half_pi, half_pi}));
    const auto b = kuramoto.eval(std::vector<double>{0.0, 0.0}, &pop, 0.0);
    CHECK(b[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("mean-field layer: single row returns that row") {
    ArchSpec spec = tiny_spec(DriftKind::ImplicitMeasure, 1);
    spec.w0_width = 1;
    DriftModel m(spec, 1);
    zero_params(m);
    set_phi_second_argument(m);
    m.set_w0_row(0, std::vector<double>{0.37});
    Graph g;
    g.reset(&m.store());
    NodeId mf = m.mean_field_layer(g, g.input(std::vector<double>{5.0}), 0.1);
    CHECK(g.val(mf)[0] == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("mean-field layer: arithmetic mean over rows") {
    ArchSpec spec = tiny_spec(DriftKind::ImplicitMeasure, 1);
    spec.w0_width = 4;
    DriftModel m(spec, 1);
    zero_params(m);
    set_phi_second_argument(m);
    for (int i = 0; i < 4; ++i) m.set_w0_row(i, std::vector<double>{static_cast<double>(i + 1)});
    Graph g;
    g.reset(&m.store());
    NodeId mf = m.mean_field_layer(g, g.input(std::vector<double>{0.0}), 0.0);
    CHECK(g.val(mf)[0] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("mean-field layer: W0 gradient matches finite differences") {
    ArchSpec spec = tiny_spec(DriftKind::ImplicitMeasure, 2);
    spec.phi_hidden = {6};
    spec.w0_width = 3;
    DriftModel m(spec, 4);
    const std::vector<double> x = {0.3, -0.8};
    auto loss = [&](std::span<const double> p) {
        DriftModel tmp = m;
        std::copy(p.begin(), p.end(), tmp.store().values.begin());
        Graph g;
        g.reset(&tmp.store());
        return g.scalar(g.sum(tmp.mean_field_layer(g, g.input(x), 0.4)));
    };
    auto grad = [&](std::span<const double> p) {
        DriftModel tmp = m;
        std::copy(p.begin(), p.end(), tmp.store().values.begin());
        Graph g;
        g.reset(&tmp.store());
        g.backward(g.sum(tmp.mean_field_layer(g, g.input(x), 0.4)));
        return tmp.store().grads;
    };
    CHECK(grad_check(loss, grad, m.store().values, 1e-5) < 1e-4);
}

TEST_CASE("im: f + mean-field composition, zero everything gives zero") {
    DriftModel m(tiny_spec(DriftKind::ImplicitMeasure, 2), 9);
    zero_params(m);
    Graph g;
    const auto b = m.eval_value(g, std::vector<double>{1.0, 2.0}, nullptr, 0.3);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
}

TEST_CASE("im: eval equals f plus the mean-field layer") {
    ArchSpec spec = tiny_spec(DriftKind::ImplicitMeasure, 1);
    spec.w0_width = 4;
    DriftModel m(spec, 1);
    zero_params(m);
    set_phi_second_argument(m);
    for (int i = 0; i < 4; ++i) m.set_w0_row(i, std::vector<double>{static_cast<double>(i + 1)});
    Graph g;
    const auto b = m.eval_value(g, std::vector<double>{0.0}, nullptr, 0.0);
    CHECK(b[0] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("ml: identity flow with phi(x,y) = y averages the base normal") {
    ArchSpec spec = tiny_spec(DriftKind::MarginalLaw, 2);
    spec.sample_count = 2000;
    DriftModel m(spec, 3);
    zero_params(m);  // identity flow, f = 0
    set_phi_second_argument(m);
    Graph g;
    Rng rng(2024);
    double mean0 = 0.0, mean1 = 0.0;
    const int reps = 50;  // 1e5 draws total
    for (int r = 0; r < reps; ++r) {
        const auto b = m.eval_value(g, std::vector<double>{0.0, 0.0}, nullptr, 0.5, &rng);
        mean0 += b[0];
        mean1 += b[1];
    }
    mean0 /= reps;
    mean1 /= reps;
    const double se = 1.0 / std::sqrt(2000.0 * reps);  // draws are standard normal
    CHECK(std::abs(mean0) < 3.0 * se);
    CHECK(std::abs(mean1) < 3.0 * se);
}

TEST_CASE("ml: fixed rng gives reproducible output") {
    ArchSpec spec = tiny_spec(DriftKind::MarginalLaw, 2);
    spec.sample_count = 1;
    DriftModel m(spec, 15);
    Graph g;
    Rng r1(5), r2(5);
    const auto a = m.eval_value(g, std::vector<double>{0.1, 0.2}, nullptr, 0.7, &r1);
    const auto b = m.eval_value(g, std::vector<double>{0.1, 0.2}, nullptr, 0.7, &r2);
    CHECK(a == b);
}

TEST_CASE("ml: zero interaction reduces to the ito evaluation") {
    ArchSpec spec = tiny_spec(DriftKind::MarginalLaw, 2);
    spec.f_hidden = {6};
    DriftModel m(spec, 21);
    // zero phi only
    const int in = m.phi_net().widths().front();
    std::vector<double> w(static_cast<std::size_t>(2) * in, 0.0);
    m.phi_net().set_layer(m.store(), 0, w, std::vector<double>{0.0, 0.0});

    ArchSpec ito = spec;
    ito.kind = DriftKind::ItoMlp;
    DriftModel ref(ito, 21);  // same seed: f-net draws are the first allocations
    Graph g;
    Rng rng(1);
    const auto a = m.eval_value(g, std::vector<double>{0.4, -0.9}, nullptr, 0.2, &rng);
    const auto b = ref.eval_value(g, std::vector<double>{0.4, -0.9}, nullptr, 0.2);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-15));
}

TEST_CASE("true drift: mean-field atlas rank cases") {
    TrueDrift atlas;
    atlas.system = TrueDrift::System::MeanFieldAtlas;
    Population below = point_population({{-1.0}, {-2.0}, {-0.5}});
    const auto b1 = atlas.eval(std::vector<double>{0.0}, &below, 0.0);
    CHECK(b1[0] == doctest::Approx(1.0 - std::exp(2.0)).epsilon(1e-12));
    Population above = point_population({{1.0}, {2.0}, {0.5}});
    const auto b0 = atlas.eval(std::vector<double>{0.0}, &above, 0.0);
    CHECK(b0[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("true drift: OU at (1, 2)") {
    TrueDrift ou;
    ou.system = TrueDrift::System::OrnsteinUhlenbeck;
    const auto b = ou.eval(std::vector<double>{1.0, 2.0}, nullptr, 0.0);
    CHECK(b[0] == doctest::Approx(-3.0));
    CHECK(b[1] == doctest::Approx(-4.0));
}

TEST_CASE("true drift: opinion kernel vanishes outside its support") {
    TrueDrift od;
    od.system = TrueDrift::System::OpinionDynamics;
    // distance 5 from the single population point: (r - 2.5)^2 >= 1
    Population far = point_population({{5.0, 0.0}});
    const auto b = od.eval(std::vector<double>{0.0, 0.0}, &far, 0.0);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
    // distance 2.5: kernel at full strength theta1 * exp(-0.01)
    Population near = point_population({{2.5, 0.0}});
    const auto b2 = od.eval(std::vector<double>{0.0, 0.0}, &near, 0.0);
    CHECK(b2[0] == doctest::Approx(-2.5 * std::exp(-0.01)).epsilon(1e-12));
}

TEST_CASE("population permutation leaves EM and IM outputs unchanged") {
    ArchSpec spec = tiny_spec(DriftKind::EmpiricalMeasure, 2);
    spec.phi_hidden = {6};
    DriftModel em(spec, 8);
    Rng rng(3);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 7; ++i) pts.push_back({rng.normal(), rng.normal()});
    Population pop = point_population(pts);
    std::reverse(pts.begin(), pts.end());
    Population rev = point_population(pts);
    Graph g;
    const std::vector<double> x = {0.1, 0.9};
    const auto a = em.eval_value(g, x, &pop, 0.0);
    const auto b = em.eval_value(g, x, &rev, 0.0);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));

    ArchSpec im_spec = tiny_spec(DriftKind::ImplicitMeasure, 2);
    im_spec.phi_hidden = {6};
    im_spec.w0_width = 5;
    DriftModel im(im_spec, 8);
    const auto before = im.eval_value(g, x, nullptr, 0.0);
    // reverse the W0 rows
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 5; ++i) {
        auto r = im.w0_row(i);
        rows.emplace_back(r.begin(), r.end());
    }
    for (int i = 0; i < 5; ++i) im.set_w0_row(i, rows[4 - i]);
    const auto after = im.eval_value(g, x, nullptr, 0.0);
    CHECK(before[0] == doctest::Approx(after[0]).epsilon(1e-12));
    CHECK(before[1] == doctest::Approx(after[1]).epsilon(1e-12));
}

TEST_CASE("zero interaction makes every mean-field variant agree with ito") {
    for (DriftKind kind :
         {DriftKind::EmpiricalMeasure, DriftKind::ImplicitMeasure, DriftKind::MarginalLaw}) {
        ArchSpec spec = tiny_spec(kind, 2);
        spec.f_hidden = {5};
        DriftModel m(spec, 33);
        const int in = m.phi_net().widths().front();
        m.phi_net().set_layer(m.store(), 0, std::vector<double>(2 * in, 0.0),
                              std::vector<double>{0.0, 0.0});
        ArchSpec ito = spec;
        ito.kind = DriftKind::ItoMlp;
        DriftModel ref(ito, 33);
        Population pop = point_population({{0.5, 0.5}, {-1.0, 2.0}});
        Graph g;
        Rng rng(6);
        const std::vector<double> x = {0.25, -0.75};
        const auto a = m.eval_value(g, x, &pop, 0.6, &rng);
        const auto b = ref.eval_value(g, x, &pop, 0.6);
        CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
        CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-14));
    }
}

TEST_CASE("em with n copies of one point equals f(x,t) + phi(x,y) exactly") {
    ArchSpec spec = tiny_spec(DriftKind::EmpiricalMeasure, 2);
    spec.f_hidden = {4};
    spec.phi_hidden = {4};
    DriftModel m(spec, 12);
    const std::vector<double> y = {0.8, -0.1};
    Population pop = point_population(std::vector<std::vector<double>>(9, y));
    Graph g;
    const std::vector<double> x = {-0.4, 0.6};
    const double t = 0.35;
    const auto full = m.eval_value(g, x, &pop, t);

    // f(x,t) + phi(x,y) assembled by hand on the same store
    g.reset(&m.store());
    NodeId xt = g.concat(g.input(x), g.input(t));
    NodeId f = m.f_net().forward(g, xt);
    NodeId phi = m.phi_net().forward(g, g.concat(g.input(x), g.input(y)));
    NodeId expect = g.add(f, phi);
    CHECK(full[0] == doctest::Approx(g.val(expect)[0]).epsilon(1e-13));
    CHECK(full[1] == doctest::Approx(g.val(expect)[1]).epsilon(1e-13));
}

TEST_CASE("every architecture is differentiable: grad_check on random inputs") {
    for (DriftKind kind : {DriftKind::ItoMlp, DriftKind::EmpiricalMeasure,
                           DriftKind::ImplicitMeasure, DriftKind::MarginalLaw}) {
        CAPTURE(to_string(kind));
        ArchSpec spec = tiny_spec(kind, 2);
        spec.f_hidden = {5};
        spec.phi_hidden = {5};
        spec.w0_width = 3;
        spec.sample_count = 3;
        spec.flow_hidden = {4};
        spec.activation = Activation::Tanh;
        DriftModel m(spec, 19);
        Population pop = point_population({{0.2, 0.2}, {-0.6, 1.1}, {0.0, -0.3}});
        const std::vector<double> x = {0.15, -0.45};
        auto build = [&](ParamStore& s, bool want_grad) {
            DriftModel tmp = m;
            std::copy(s.values.begin(), s.values.end(), tmp.store().values.begin());
            Graph g;
            g.reset(&tmp.store());
            Rng rng(99);  // fixed seed keeps the closure deterministic
            NodeId b = tmp.eval(g, x, &pop, 0.4, &rng);
            NodeId l = g.sum(b);
            if (want_grad) {
                g.backward(l);
                s.grads = tmp.store().grads;
            }
            return g.scalar(l);
        };
        ParamStore snapshot = m.store();
        auto loss = [&](std::span<const double> p) {
            ParamStore s = snapshot;
            std::copy(p.begin(), p.end(), s.values.begin());
            return build(s, false);
        };
        auto grad = [&](std::span<const double> p) {
            ParamStore s = snapshot;
            std::copy(p.begin(), p.end(), s.values.begin());
            build(s, true);
            return s.grads;
        };
        CHECK(grad_check(loss, grad, m.store().values, 1e-5) < 1e-4);
    }
}
