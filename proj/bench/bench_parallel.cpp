#include "cbs/fisher.hpp"
#include "cbs/fullwave.hpp"
#include "cbs/phasescreen.hpp"
#include "cbs/rmt.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace cbs;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::openmp : Exec::serial; }
const char* label(const benchmark::State& s) { return s.range(0) ? "openmp" : "serial"; }

void BM_Rmt(benchmark::State& state) {
  rmt::RmtConfig cfg;
  cfg.n_modes = 32;
  for (auto _ : state) benchmark::DoNotOptimize(rmt::run_rmt_acc(cfg, 2000, 0, exec_of(state)));
  state.SetLabel(label(state));
  state.SetItemsProcessed(state.iterations() * 2000);
}

void BM_PhaseScreen(benchmark::State& state) {
  const auto cfg = phasescreen::ScreenConfig::make(2 * M_PI, 1.1e-2 / 808e-9, 4.4e-3, 0);
  const phasescreen::ScreenPlan plan(cfg);
  phasescreen::McOptions opts;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(phasescreen::run_double_passage_acc(plan, 256, opts));
  state.SetLabel(label(state));
  state.SetItemsProcessed(state.iterations() * 256);
}

void BM_FisherTrials(benchmark::State& state) {
  const double ell = 9.5, k = 2 * M_PI;
  fisher::NoiseConfig nc;
  nc.n_r = 1e5;
  nc.rate = 1e8;
  for (int i = 1; i <= 10; ++i) nc.angles.push_back(2 * std::asin(0.0025 * i / ell / (2 * k)));
  const auto prof = fisher::cbs_profiles(fisher::LineshapeForm::diffusive_2d, k);
  fisher::EstimationOptions eo;
  eo.exec = exec_of(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        fisher::simulate_estimation(ell, nc, 200, fisher::Mode::two_photon, prof, eo));
  state.SetLabel(label(state));
  state.SetItemsProcessed(state.iterations() * 200);
}

void BM_Fullwave(benchmark::State& state) {
  fullwave::SlabSpec spec;
  spec.width = 20;
  spec.thickness = 5;
  spec.density = 0.2;
  fullwave::FullwaveOptions fo;
  fo.columns = 9;
  fo.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(fullwave::run_fullwave_acc(spec, 8, fo));
  state.SetLabel(label(state));
  state.SetItemsProcessed(state.iterations() * 8);
}

}  // namespace

BENCHMARK(BM_Rmt)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PhaseScreen)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FisherTrials)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Fullwave)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
