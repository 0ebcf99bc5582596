#include <benchmark/benchmark.h>

#include "gps/estimators.hpp"
#include "gps/selective.hpp"
#include "gps/simulation.hpp"
#include "gps/variance.hpp"

using namespace gps;

namespace {

SimulatedPanel study_panel(int t) {
    SimConfig cfg;
    cfg.t = t;
    cfg.dgp = Dgp::DGP2;
    return simulate_panel(cfg, 0);
}

FitOptions restarts(int r) {
    FitOptions o;
    o.groups = 2;
    o.restarts = r;
    o.seed = 1;
    return o;
}

void BM_TskFit(benchmark::State& state) {
    const CoefMatrix b = unit_ols(study_panel(static_cast<int>(state.range(0))).data);
    for (auto _ : state) benchmark::DoNotOptimize(tsk_fit(b, restarts(50)));
}
BENCHMARK(BM_TskFit)->Arg(20)->Arg(50);

void BM_PcrFit(benchmark::State& state) {
    const PanelDataset d = study_panel(static_cast<int>(state.range(0))).data;
    for (auto _ : state) benchmark::DoNotOptimize(pcr_fit(d, restarts(50)));
}
BENCHMARK(BM_PcrFit)->Arg(20)->Arg(50);

void BM_GfeFit(benchmark::State& state) {
    const PanelDataset d = study_panel(static_cast<int>(state.range(0))).data;
    for (auto _ : state) benchmark::DoNotOptimize(gfe_fit(d, restarts(50)));
}
BENCHMARK(BM_GfeFit)->Arg(20)->Arg(50);

void BM_DriscollKraay(benchmark::State& state) {
    const SimulatedPanel p = study_panel(static_cast<int>(state.range(0)));
    const Eigen::MatrixXd c = *pooled_group_ols(p.data, p.truth);
    Eigen::VectorXd alpha(4);
    alpha << c.row(0).transpose(), c.row(1).transpose();
    for (auto _ : state) benchmark::DoNotOptimize(driscoll_kraay_cov(p.data, p.truth, alpha, default_bandwidth(p.data.t())));
}
BENCHMARK(BM_DriscollKraay)->Arg(20)->Arg(50)->Arg(200);

void BM_SelectiveTestPcr(benchmark::State& state) {
    const PanelDataset d = study_panel(static_cast<int>(state.range(0))).data;
    const GroupFit fit = pcr_fit(d, restarts(10));
    const GroupCovariances cov = default_covariance(Method::PCR, d, fit);
    const LinearHypothesis h = study_hypothesis(HypothesisId::H01);
    for (auto _ : state) benchmark::DoNotOptimize(selective_test(fit, d, h, cov));
}
BENCHMARK(BM_SelectiveTestPcr)->Arg(20)->Arg(50);

void BM_Replication(benchmark::State& state) {
    SimConfig cfg;
    cfg.t = static_cast<int>(state.range(0));
    int rep = 0;
    for (auto _ : state) benchmark::DoNotOptimize(run_replication(cfg, rep++));
}
BENCHMARK(BM_Replication)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
