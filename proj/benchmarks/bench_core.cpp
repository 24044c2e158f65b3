#include "critdiff/corrector.hpp"
#include "critdiff/field_sim.hpp"
#include "critdiff/kolmogorov_tail.hpp"
#include "critdiff/moment_odes.hpp"
#include "critdiff/particle.hpp"
#include "critdiff/proxy_sde.hpp"
#include "critdiff/rng.hpp"
#include "critdiff/shell_cov.hpp"
#include "critdiff/tensor2d.hpp"

#include <benchmark/benchmark.h>


using namespace critdiff;

static void BM_ContractIdentities(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(contract_identities(static_cast<std::size_t>(st.range(0)), 1));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_ContractIdentities)->Arg(1000);

static void BM_BuildCov(benchmark::State& st) {
    double x = 1.0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(build_cov(x, 0.2, true));
        x = x < 20.0 ? x + 0.01 : 1.0;
    }
}
BENCHMARK(BM_BuildCov);

static void BM_SdeEnsemble(benchmark::State& st) {
    SdeConfig c;
    c.eps = 0.2;
    c.lambda2_max = 4.0;
    c.n_steps = 100;
    c.n_traj = static_cast<std::size_t>(st.range(0));
    c.record_every = 100;
    c.threads = 1;
    for (auto _ : st) benchmark::DoNotOptimize(run_ensemble(c));
    st.SetItemsProcessed(st.iterations() * st.range(0) * 100);
}
BENCHMARK(BM_SdeEnsemble)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_MomentOdeBound(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(integrate(0.1, 25.0, ClosureSource::bound()));
}
BENCHMARK(BM_MomentOdeBound)->Unit(benchmark::kMillisecond);

static void BM_TailEvolve(benchmark::State& st) {
    TailConfig c;
    c.tau = 5.0;
    c.sigma_hat = -1.0;
    c.resolution = static_cast<std::size_t>(st.range(0));
    const TailProfile p = terminal_zeta(c);
    for (auto _ : st) benchmark::DoNotOptimize(evolve(p, 2.0));
}
BENCHMARK(BM_TailEvolve)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_FieldRun(benchmark::State& st) {
    FieldRunConfig c;
    c.n = static_cast<std::size_t>(st.range(0));
    c.L_max = 8.0;
    c.eps = 0.4;
    c.n_samples = 2;
    c.threads = 1;
    for (auto _ : st) benchmark::DoNotOptimize(run_fields(c));
}
BENCHMARK(BM_FieldRun)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_CorrectorSolve(benchmark::State& st) {
    const std::size_t n = static_cast<std::size_t>(st.range(0));
    NormalStream rng(derive_seed(1, "bench"), 0);
    const CoefField coef = sample_psi(TorusGrid::for_cutoff(n, 16.0), 0.2, 16.0, rng);
    for (auto _ : st) benchmark::DoNotOptimize(solve_corrector(coef, CoVec{{1.0, 0.0}}));
}
BENCHMARK(BM_CorrectorSolve)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_ParticlePaths(benchmark::State& st) {
    NormalStream rng(derive_seed(2, "bench"), 0);
    const DriftField d =
        DriftField::from_psi(sample_psi(TorusGrid::for_cutoff(512, 16.0), 0.4, 16.0, rng));
    PathOptions o;
    o.n_paths = static_cast<std::size_t>(st.range(0));
    o.times = {10.0};
    o.threads = 1;
    for (auto _ : st) benchmark::DoNotOptimize(euler_maruyama(d, o));
    st.SetItemsProcessed(st.iterations() * st.range(0) * 100);
}
BENCHMARK(BM_ParticlePaths)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
