// Differential evolution on the Holzinger39 CFA objective: OpenMP population
// evaluation against the serial loop.
#include <benchmark/benchmark.h>

#include "sem/data.hpp"
#include "sem/log.hpp"
#include "sem/model.hpp"
#include "sem/optimizer.hpp"

#ifndef SEM_SOURCE_DIR
#define SEM_SOURCE_DIR "."
#endif

namespace {

sem::SolveRequest make_request(bool parallel) {
  static sem::SemModel* model = [] {
    sem::set_warnings_quiet(true);
    auto* m = new sem::SemModel(sem::ModelKind::Model,
                                "visual =~ x1 + x2 + x3\ntextual =~ x4 + x5 + x6\nspeed =~ x7 + x8 + x9");
    m->fit(sem::read_csv(std::string(SEM_SOURCE_DIR) + "/data/holzinger_swineford39_data.csv"));
    return m;
  }();
  sem::SolveRequest req;
  req.objective = [](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return model->objective(t, g); };
  req.theta0 = model->start();
  std::tie(req.lo, req.hi) = model->bounds();
  req.method = sem::Solver::DE;
  req.de_generations = 20;
  req.max_iter = 1;
  req.parallel = parallel;
  return req;
}

void BM_DeSerial(benchmark::State& state) {
  auto req = make_request(false);
  for (auto _ : state) benchmark::DoNotOptimize(sem::minimize(req).value);
}

void BM_DeParallel(benchmark::State& state) {
  auto req = make_request(true);
  for (auto _ : state) benchmark::DoNotOptimize(sem::minimize(req).value);
}

}  // namespace

BENCHMARK(BM_DeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeParallel)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
