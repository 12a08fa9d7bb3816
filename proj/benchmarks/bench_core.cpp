#include <benchmark/benchmark.h>

#include "mvsde/estimate.hpp"
#include "mvsde/metrics.hpp"
#include "mvsde/simulate.hpp"

using namespace mvsde;

namespace {

DriftModel make_model(DriftKind kind, int width) {
    ArchSpec spec;
    spec.kind = kind;
    spec.dim = 2;
    spec.f_hidden = {width, width};
    spec.phi_hidden = {width, width};
    spec.w0_width = width;
    spec.sample_count = 16;
    spec.flow_hidden = {width};
    return DriftModel(spec, 7);
}

void BM_MlpForwardBackward(benchmark::State& state) {
    const int width = static_cast<int>(state.range(0));
    ParamStore store;
    Rng rng(1);
    Mlp mlp({3, width, width, 2}, Activation::LeakyRelu, store, rng);
    Graph g;
    const std::vector<double> x = {0.3, -0.2, 0.9};
    for (auto _ : state) {
        g.reset(&store);
        NodeId out = mlp.forward(g, g.input(x));
        g.backward(g.sum(out));
        benchmark::DoNotOptimize(store.grads.data());
    }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(128);

void BM_DriftEval(benchmark::State& state) {
    const auto kind = static_cast<DriftKind>(state.range(0));
    DriftModel m = make_model(kind, 32);
    Population pop;
    Rng prng(3);
    for (int i = 0; i < 20; ++i) pop.particles.push_back({prng.normal(), prng.normal()});
    Graph g;
    Rng rng(5);
    const std::vector<double> x = {0.1, -0.4};
    for (auto _ : state) {
        auto b = m.eval_value(g, x, &pop, 0.5, &rng);
        benchmark::DoNotOptimize(b.data());
    }
}
BENCHMARK(BM_DriftEval)
    ->Arg(static_cast<int>(DriftKind::ItoMlp))
    ->Arg(static_cast<int>(DriftKind::EmpiricalMeasure))
    ->Arg(static_cast<int>(DriftKind::ImplicitMeasure))
    ->Arg(static_cast<int>(DriftKind::MarginalLaw));

void BM_GirsanovStep(benchmark::State& state) {
    DriftModel m = make_model(DriftKind::ImplicitMeasure, 32);
    GeneratorSpec gs = GeneratorSpec::defaults(TrueDrift::System::OrnsteinUhlenbeck);
    gs.particles = 10;
    gs.T = 1.0;
    const TrajectoryDataset ds = generate(gs).data;
    Graph g;
    for (auto _ : state) {
        g.reset(&m.store());
        m.store().zero_grad();
        NodeId acc;
        for (int i = 0; i < ds.n_particles; ++i) {
            NodeId ll = girsanov_loglik(m, g, ds, i, 1.0);
            acc = acc.valid() ? g.add(acc, ll) : ll;
        }
        g.backward(g.scale(acc, -0.1));
        benchmark::DoNotOptimize(m.store().grads.data());
    }
}
BENCHMARK(BM_GirsanovStep);

void BM_BridgeSampling(benchmark::State& state) {
    BridgeSpec spec;
    spec.a = {0.0, 0.0};
    spec.b = {1.0, -1.0};
    spec.t0 = 0.0;
    spec.t1 = 1.0;
    spec.inner_steps = static_cast<int>(state.range(0));
    Rng rng(11);
    for (auto _ : state) {
        auto path = sample_bridge(spec, rng);
        benchmark::DoNotOptimize(path.data());
    }
}
BENCHMARK(BM_BridgeSampling)->Arg(10)->Arg(50);

void BM_EnergyDistance(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(13);
    std::vector<std::vector<double>> p(n), q(n);
    for (auto& v : p) v = {rng.normal(), rng.normal()};
    for (auto& v : q) v = {rng.normal(), rng.normal()};
    for (auto _ : state) {
        benchmark::DoNotOptimize(energy_distance_sq(p, q));
    }
}
BENCHMARK(BM_EnergyDistance)->Arg(100)->Arg(400);

void BM_FlowLogProb(benchmark::State& state) {
    ParamStore store;
    Rng rng(17);
    CouplingFlow flow(2, 4, {64, 64}, store, rng);
    Graph g;
    const std::vector<double> x = {0.4, -0.7};
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow.log_prob_value(g, x, 0.3));
    }
}
BENCHMARK(BM_FlowLogProb);

}  // namespace

BENCHMARK_MAIN();
