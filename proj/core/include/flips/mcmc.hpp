#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace flips {

struct McmcSettings {
  int chains = 4;
  int warmup = 2000;
  int iters = 2000;
  std::uint64_t seed = 1;
  int threads = 1;
};

// Post-warmup draws, laid out [chain][iteration][parameter].
struct Draws {
  std::vector<std::string> names;
  int chains = 0;
  int iters = 0;
  std::vector<double> data;

  int dim() const { return static_cast<int>(names.size()); }
  double at(int c, int i, int p) const {
    return data[(static_cast<std::size_t>(c) * iters + i) * names.size() + p];
  }
  // concatenated series of one parameter over all chains
  std::vector<double> series(int p) const;
  int index_of(const std::string& name) const;  // -1 when absent
};

struct ChainDiagnostics {
  std::vector<double> rhat;      // split-R-hat per parameter
  std::vector<double> ess_bulk;  // rank-normalized bulk ESS per parameter
  double max_rhat = 0.0;
  double min_ess = 0.0;
};

double split_rhat(const std::vector<std::vector<double>>& chains);
// Effective sample size via Geyer's initial positive/monotone sequence.
double ess_geyer(const std::vector<std::vector<double>>& chains);
// Rank-normalize pooled values (fractional ranks through the normal quantile).
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains);
ChainDiagnostics diagnose(const Draws& draws);

// Posterior mean and central 95% interval of a scalar function of the draws.
struct Estimate {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

Estimate summarize_fn(const Draws& draws, const std::function<double(const double*)>& f);
Estimate summarize_values(std::vector<double> values);

// Robbins-Monro adapter for a single proposal scale.
struct ScaleAdapter {
  double log_scale = 0.0;
  double target = 0.44;
  double t = 0.0;

  explicit ScaleAdapter(double initial_scale = 0.1, double target_rate = 0.44);
  void update(double accept_prob);
  double scale() const;
};

// Runs fn(chain_index) for each chain, optionally across threads; deterministic
// results regardless of thread count because each chain owns its RNG stream.
void run_chains(int chains, int threads, const std::function<void(int)>& fn);

}  // namespace flips
