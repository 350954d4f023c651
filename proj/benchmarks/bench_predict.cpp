#include "gpccopf/ccopf.hpp"
#include "gpccopf/dataset.hpp"
#include "gpccopf/gp.hpp"
#include "gpccopf/powerflow.hpp"
#include "gpccopf/propagate.hpp"
#include "gpccopf/sparse_gp.hpp"

#include <benchmark/benchmark.h>

using namespace gpccopf;

namespace {

const GridCase& ieee9() {
    static const GridCase c = load_case(std::string(GPCCOPF_DATA_DIR) + "/cases/ieee9.json");
    return c;
}

const SampleSet& samples() {
    static const SampleSet s = [] {
        SamplingParams p;
        p.mu_nu_unc = -0.2;
        return generate_dataset(ieee9(), p, 75);
    }();
    return s;
}

GpConfig quick() {
    GpConfig g;
    g.restarts = 2;
    g.seed = 1;
    return g;
}

const GpModel& full_model() {
    static const GpModel m = train(samples(), quick());
    return m;
}

void BM_AcPowerFlow(benchmark::State& st) {
    const InjectionSet inj = reference_injections(ieee9());
    for (auto _ : st) benchmark::DoNotOptimize(solve_ac_pf(ieee9(), inj));
}
BENCHMARK(BM_AcPowerFlow);

void BM_PredictFull(benchmark::State& st) {
    const GpModel& m = full_model();  // trains once, outside the timed loop
    const Eigen::VectorXd x = samples().X.row(0).transpose();
    Eigen::VectorXd mu, var;
    for (auto _ : st) {
        m.predict(x, mu, var);
        benchmark::DoNotOptimize(var.data());
    }
}
BENCHMARK(BM_PredictFull)->Unit(benchmark::kMicrosecond);

void BM_PredictSparse(benchmark::State& st) {
    SparseConfig cfg;
    cfg.m_m = static_cast<int>(st.range(0));
    cfg.gp = quick();
    const SparseGpModel m = train_sparse(samples(), cfg);
    const Eigen::VectorXd x = samples().X.row(0).transpose();
    Eigen::VectorXd mu, var;
    for (auto _ : st) {
        m.predict(x, mu, var);
        benchmark::DoNotOptimize(var.data());
    }
}
BENCHMARK(BM_PredictSparse)->Arg(10)->Arg(30)->Arg(50)->Unit(benchmark::kMicrosecond);

void BM_Propagate(benchmark::State& st) {
    const Propagation method = static_cast<Propagation>(st.range(0));
    const std::vector<OutputPosterior> post = full_model().posteriors();
    const Forecast f = reference_forecast(ieee9());
    const UncertaintySpec u = default_uncertainty(f);
    const Eigen::VectorXd x = samples().X.row(0).transpose();
    const GaussianInput gin{x, input_covariance(ieee9(), Eigen::VectorXd::Constant(3, 1.0 / 3), u)};
    for (auto _ : st) benchmark::DoNotOptimize(propagate(post, gin, method));
}
BENCHMARK(BM_Propagate)->ArgName("ta1_ta2_em")->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
