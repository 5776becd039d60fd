#include <benchmark/benchmark.h>

#include <vector>

#include "flips/binomial_tests.hpp"
#include "flips/hier_model.hpp"
#include "flips/numerics.hpp"
#include "flips/rng.hpp"
#include "flips/simulator.hpp"

namespace {

void bm_reg_inc_beta(benchmark::State& state) {
  double x = 0.50001;
  for (auto _ : state) {
    benchmark::DoNotOptimize(flips::reg_inc_beta(x, 5100.0, 4900.0));
    x = x == 0.50001 ? 0.7 : 0.50001;
  }
}
BENCHMARK(bm_reg_inc_beta);

void bm_log_beta_interval_mass(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(flips::log_beta_interval_mass(5100.0, 4900.0, 0.5, 1.0));
}
BENCHMARK(bm_log_beta_interval_mass);

void bm_informed_bf(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(flips::bf_informed_binomial(178079, 350757, {}));
}
BENCHMARK(bm_informed_bf);

void bm_gauss_hermite(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(flips::gauss_hermite(25));
}
BENCHMARK(bm_gauss_hermite);

flips::CellTable bench_cells() {
  flips::GenerativeConfig cfg;
  cfg.n_persons = 48;
  cfg.n_coins = 44;
  cfg.flips_per_person = 500;
  cfg.theta = 0.51;
  cfg.sigma_theta = 0.05;
  cfg.seed = 42;
  return flips::CellTable::from(flips::simulate(cfg).data);
}

void bm_hier_log_density(benchmark::State& state) {
  const flips::CellTable cells = bench_cells();
  flips::HierTarget target(flips::ModelSpec{}, flips::PriorSet::estimation(), cells);
  const std::vector<double> x = target.initial_point(0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(target.log_density(x.data()));
}
BENCHMARK(bm_hier_log_density);

}  // namespace

BENCHMARK_MAIN();
