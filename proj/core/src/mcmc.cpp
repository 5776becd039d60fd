#include "flips/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "flips/numerics.hpp"

namespace flips {

std::vector<double> Draws::series(int p) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * iters);
  for (int c = 0; c < chains; ++c)
    for (int i = 0; i < iters; ++i) out.push_back(at(c, i, p));
  return out;
}

int Draws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

// split every chain in half (dropping the middle element when odd)
std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& ch : chains) {
    const std::size_t half = ch.size() / 2;
    if (half == 0) continue;
    out.emplace_back(ch.begin(), ch.begin() + half);
    out.emplace_back(ch.end() - half, ch.end());
  }
  return out;
}

struct Moments {
  double W = 0.0;       // mean within-chain variance
  double var_plus = 0.0;
  double B_over_n = 0.0;
  std::vector<double> means;
};

Moments chain_moments(const std::vector<std::vector<double>>& chains) {
  Moments m;
  const std::size_t M = chains.size(), N = chains.front().size();
  m.means.resize(M);
  double grand = 0.0;
  for (std::size_t c = 0; c < M; ++c) {
    m.means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / N;
    grand += m.means[c];
  }
  grand /= M;
  double W = 0.0, B = 0.0;
  for (std::size_t c = 0; c < M; ++c) {
    double s2 = 0.0;
    for (double x : chains[c]) s2 += (x - m.means[c]) * (x - m.means[c]);
    W += N > 1 ? s2 / (N - 1) : 0.0;
    B += (m.means[c] - grand) * (m.means[c] - grand);
  }
  m.W = W / M;
  m.B_over_n = M > 1 ? B / (M - 1) : 0.0;
  m.var_plus = (N - 1.0) / N * m.W + m.B_over_n;
  return m;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  const auto halves = split_halves(chains);
  if (halves.size() < 2 || halves.front().size() < 2) return 1.0;
  const auto m = chain_moments(halves);
  if (m.W <= 0.0) return 1.0;  // constant draws (pinned parameter)
  return std::sqrt(m.var_plus / m.W);
}

double ess_geyer(const std::vector<std::vector<double>>& chains) {
  const auto halves = split_halves(chains);
  if (halves.empty() || halves.front().size() < 4) return 0.0;
  const std::size_t M = halves.size(), N = halves.front().size();
  const auto m = chain_moments(halves);
  if (m.var_plus <= 0.0) return static_cast<double>(M * N);
  // biased (1/N) autocovariances per chain, computed lag by lag until Geyer stop
  auto acov = [&](std::size_t c, std::size_t t) {
    const auto& x = halves[c];
    const double mu = m.means[c];
    double s = 0.0;
    for (std::size_t i = 0; i + t < N; ++i) s += (x[i] - mu) * (x[i + t] - mu);
    return s / N;
  };
  auto rho = [&](std::size_t t) {
    double g = 0.0;
    for (std::size_t c = 0; c < M; ++c) g += acov(c, t);
    g /= M;
    return 1.0 - (m.W - g) / m.var_plus;
  };
  double tau = 0.0, prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0;; ++k) {
    const std::size_t t0 = 2 * k, t1 = 2 * k + 1;
    if (t1 >= N) break;
    double pair = rho(t0) + (t1 < N ? rho(t1) : 0.0);
    if (k == 0) pair = std::min(pair, 1.0 + rho(1));
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    prev_pair = pair;
    tau += pair;
  }
  const double tau_hat = std::max(2.0 * tau - 1.0, 1.0 / std::log10(static_cast<double>(M * N) + 10.0));
  return static_cast<double>(M * N) / tau_hat;
}

std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> pool;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) pool.push_back({chains[c][i], {c, i}});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const double S = static_cast<double>(pool.size());
  std::vector<std::vector<double>> out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) out[c].resize(chains[c].size());
  // average ranks over ties
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j + 1 < pool.size() && pool[j + 1].first == pool[i].first) ++j;
    const double r = 0.5 * (i + j) + 1.0;  // 1-based average rank
    const double z = normal_quantile((r - 0.375) / (S + 0.25));
    for (std::size_t t = i; t <= j; ++t) out[pool[t].second.first][pool[t].second.second] = z;
    i = j + 1;
  }
  return out;
}

ChainDiagnostics diagnose(const Draws& draws) {
  ChainDiagnostics d;
  d.rhat.resize(draws.dim());
  d.ess_bulk.resize(draws.dim());
  d.max_rhat = 1.0;
  d.min_ess = std::numeric_limits<double>::infinity();
  for (int p = 0; p < draws.dim(); ++p) {
    std::vector<std::vector<double>> chains(draws.chains);
    for (int c = 0; c < draws.chains; ++c) {
      chains[c].resize(draws.iters);
      for (int i = 0; i < draws.iters; ++i) chains[c][i] = draws.at(c, i, p);
    }
    bool constant = true;
    for (const auto& ch : chains)
      for (double x : ch)
        if (x != chains[0][0]) { constant = false; break; }
    if (constant) {
      d.rhat[p] = 1.0;
      d.ess_bulk[p] = static_cast<double>(draws.chains) * draws.iters;
      continue;
    }
    d.rhat[p] = split_rhat(chains);
    d.ess_bulk[p] = ess_geyer(rank_normalize(chains));
    d.max_rhat = std::max(d.max_rhat, d.rhat[p]);
    d.min_ess = std::min(d.min_ess, d.ess_bulk[p]);
  }
  if (!std::isfinite(d.min_ess)) d.min_ess = 0.0;
  return d;
}

Estimate summarize_values(std::vector<double> values) {
  Estimate e;
  if (values.empty()) return e;
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (values.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= values.size()) return values.back();
    const double frac = pos - i;
    return values[i] * (1.0 - frac) + values[i + 1] * frac;
  };
  e.ci_low = quantile(0.025);
  e.ci_high = quantile(0.975);
  return e;
}

Estimate summarize_fn(const Draws& draws, const std::function<double(const double*)>& f) {
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(draws.chains) * draws.iters);
  for (int c = 0; c < draws.chains; ++c)
    for (int i = 0; i < draws.iters; ++i) {
      const double* x = draws.data.data() +
                        (static_cast<std::size_t>(c) * draws.iters + i) * draws.names.size();
      vals.push_back(f(x));
    }
  return summarize_values(std::move(vals));
}

ScaleAdapter::ScaleAdapter(double initial_scale, double target_rate)
    : log_scale(std::log(initial_scale)), target(target_rate) {}

void ScaleAdapter::update(double accept_prob) {
  t += 1.0;
  log_scale += (accept_prob - target) / std::pow(t, 0.6);
  log_scale = std::clamp(log_scale, -15.0, 5.0);
}

double ScaleAdapter::scale() const { return std::exp(log_scale); }

void run_chains(int chains, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1) {
    for (int c = 0; c < chains; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int workers = std::min(threads, chains);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int c = next.fetch_add(1); c < chains; c = next.fetch_add(1)) fn(c);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace flips
