#include "flips/model_averaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flips/numerics.hpp"
#include "flips/rng.hpp"

namespace flips {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Lower Cholesky factor; one diagonal-jitter retry before giving up.
std::vector<std::vector<double>> cholesky_lower(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  auto attempt = [&](std::vector<std::vector<double>> m,
                     std::vector<std::vector<double>>& out) {
    out.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = m[i][j];
        for (std::size_t k = 0; k < j; ++k) s -= out[i][k] * out[j][k];
        if (i == j) {
          if (!(s > 0.0)) return false;
          out[i][i] = std::sqrt(s);
        } else {
          out[i][j] = s / out[j][j];
        }
      }
    }
    return true;
  };
  std::vector<std::vector<double>> L;
  if (attempt(a, L)) return L;
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += a[i][i];
  const double jitter = 1e-8 * std::max(1.0, trace / n);
  for (std::size_t i = 0; i < n; ++i) a[i][i] += jitter;
  if (attempt(a, L)) return L;
  throw std::runtime_error("bridge proposal covariance is not positive definite");
}

struct MvnProposal {
  std::vector<double> mean;
  std::vector<std::vector<double>> chol;  // lower
  double log_norm = 0.0;                  // -d/2 log(2 pi) - sum log L_ii

  double log_pdf(const double* x) const {
    const std::size_t d = mean.size();
    // forward substitution of L y = x - mean
    std::vector<double> y(d);
    for (std::size_t i = 0; i < d; ++i) {
      double s = x[i] - mean[i];
      for (std::size_t k = 0; k < i; ++k) s -= chol[i][k] * y[k];
      y[i] = s / chol[i][i];
    }
    double q = 0.0;
    for (double v : y) q += v * v;
    return log_norm - 0.5 * q;
  }

  void sample(Rng& rng, std::vector<double>& x) const {
    const std::size_t d = mean.size();
    std::vector<double> z(d);
    for (auto& v : z) v = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
      double s = mean[i];
      for (std::size_t k = 0; k <= i; ++k) s += chol[i][k] * z[k];
      x[i] = s;
    }
  }
};

MvnProposal fit_proposal(const Draws& draws, int half) {
  const int d = draws.dim();
  const int n_fit = draws.chains * half;
  if (n_fit < d + 2) throw std::domain_error("bridge_log_ml: too few draws to fit proposal");
  MvnProposal p;
  p.mean.assign(d, 0.0);
  for (int c = 0; c < draws.chains; ++c)
    for (int i = 0; i < half; ++i)
      for (int j = 0; j < d; ++j) p.mean[j] += draws.at(c, i, j);
  for (auto& v : p.mean) v /= n_fit;
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (int c = 0; c < draws.chains; ++c)
    for (int i = 0; i < half; ++i)
      for (int j = 0; j < d; ++j) {
        const double dj = draws.at(c, i, j) - p.mean[j];
        for (int k = 0; k <= j; ++k)
          cov[j][k] += dj * (draws.at(c, i, k) - p.mean[k]);
      }
  for (int j = 0; j < d; ++j)
    for (int k = 0; k <= j; ++k) {
      cov[j][k] /= (n_fit - 1);
      cov[k][j] = cov[j][k];
    }
  p.chol = cholesky_lower(cov);
  p.log_norm = -0.5 * d * kLog2Pi;
  for (int i = 0; i < d; ++i) p.log_norm -= std::log(p.chol[i][i]);
  return p;
}

}  // namespace

MarginalLikelihood bridge_log_ml(const Draws& draws,
                                 const std::function<double(const double*)>& log_target,
                                 std::uint64_t seed, int n_proposal) {
  const int d = draws.dim();
  if (d == 0) throw std::domain_error("bridge_log_ml: dimension-zero model is analytic");
  if (draws.iters < 4) throw std::domain_error("bridge_log_ml: too few iterations");
  const int half = draws.iters / 2;
  const int keep = draws.iters - half;
  const MvnProposal prop = fit_proposal(draws, half);

  // l = log target - log proposal at the retained posterior draws
  const int n1 = draws.chains * keep;
  std::vector<std::vector<double>> l1_chain(draws.chains);
  std::vector<double> l1;
  l1.reserve(n1);
  for (int c = 0; c < draws.chains; ++c) {
    l1_chain[c].reserve(keep);
    for (int i = half; i < draws.iters; ++i) {
      const double* x = draws.data.data() +
                        (static_cast<std::size_t>(c) * draws.iters + i) * d;
      const double v = log_target(x) - prop.log_pdf(x);
      if (!std::isfinite(v))
        throw std::runtime_error("bridge_log_ml: non-finite ratio at a posterior draw");
      l1_chain[c].push_back(v);
      l1.push_back(v);
    }
  }
  const int n2 = n_proposal > 0 ? n_proposal : n1;
  std::vector<double> l2(n2);
  Rng rng(seed);
  std::vector<double> x(d);
  for (int j = 0; j < n2; ++j) {
    prop.sample(rng, x);
    l2[j] = log_target(x.data()) - prop.log_pdf(x.data());
  }

  // median shift keeps the fixed-point iteration well scaled
  std::vector<double> sorted(l1);
  std::nth_element(sorted.begin(), sorted.begin() + n1 / 2, sorted.end());
  const double lstar = sorted[n1 / 2];
  for (auto& v : l1) v -= lstar;
  for (auto& v : l2)
    if (v != -kInf) v -= lstar;

  const double log_s1 = std::log(static_cast<double>(n1) / (n1 + n2));
  const double log_s2 = std::log(static_cast<double>(n2) / (n1 + n2));
  double r = 0.0;
  int used = 0;
  std::vector<double> num_terms(n2), den_terms(n1);
  for (int it = 0; it < 1000; ++it) {
    for (int j = 0; j < n2; ++j)
      num_terms[j] = l2[j] == -kInf
                         ? -kInf
                         : l2[j] - log_sum_exp(log_s1 + l2[j], log_s2 + r);
    for (int i = 0; i < n1; ++i)
      den_terms[i] = -log_sum_exp(log_s1 + l1[i], log_s2 + r);
    const double num = log_sum_exp(num_terms) - std::log(static_cast<double>(n2));
    const double den = log_sum_exp(den_terms) - std::log(static_cast<double>(n1));
    const double r_new = num - den;
    used = it + 1;
    if (std::fabs(r_new - r) <= 1e-10 * std::max(1.0, std::fabs(r_new))) {
      r = r_new;
      MarginalLikelihood out;
      out.log_ml = r + lstar;
      out.iterations = used;
      // approximate relative MC error of exp(log_ml)
      double m1 = 0.0, m2 = 0.0, v1 = 0.0, v2 = 0.0;
      std::vector<double> f1(n2), f2(n1);
      for (int j = 0; j < n2; ++j)
        f1[j] = l2[j] == -kInf
                    ? 0.0
                    : std::exp(l2[j] - log_sum_exp(log_s1 + l2[j], log_s2 + r));
      for (int i = 0; i < n1; ++i)
        f2[i] = std::exp(-log_sum_exp(log_s1 + l1[i], log_s2 + r));
      for (double v : f1) m1 += v;
      for (double v : f2) m2 += v;
      m1 /= n2;
      m2 /= n1;
      for (double v : f1) v1 += (v - m1) * (v - m1);
      for (double v : f2) v2 += (v - m2) * (v - m2);
      v1 /= (n2 - 1);
      v2 /= (n1 - 1);
      std::vector<std::vector<double>> f2_chain(draws.chains);
      std::size_t pos = 0;
      for (int c = 0; c < draws.chains; ++c) {
        f2_chain[c].assign(f2.begin() + pos, f2.begin() + pos + keep);
        pos += keep;
      }
      const double ess2 = std::max(1.0, ess_geyer(f2_chain));
      double rel2 = 0.0;
      if (m1 > 0.0) rel2 += v1 / (n2 * m1 * m1);
      if (m2 > 0.0) rel2 += v2 / (ess2 * m2 * m2);
      out.rel_mc_error = std::sqrt(rel2);
      return out;
    }
    r = r_new;
  }
  throw std::runtime_error("bridge_log_ml: fixed-point iteration did not converge");
}

std::vector<double> posterior_model_probs(const std::vector<double>& log_ml,
                                          const std::vector<double>& prior_prob) {
  if (log_ml.size() != prior_prob.size() || log_ml.empty())
    throw std::domain_error("posterior_model_probs: size mismatch");
  std::vector<double> lw(log_ml.size());
  for (std::size_t i = 0; i < log_ml.size(); ++i) {
    if (!(prior_prob[i] > 0.0))
      throw std::domain_error("posterior_model_probs: prior weights must be positive");
    lw[i] = log_ml[i] + std::log(prior_prob[i]);
  }
  const double norm = log_sum_exp(lw);
  std::vector<double> out(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) out[i] = std::exp(lw[i] - norm);
  return out;
}

double log10_inclusion_bf(const std::vector<double>& log_ml, const std::vector<bool>& in_a) {
  if (log_ml.size() != in_a.size() || log_ml.empty())
    throw std::domain_error("log10_inclusion_bf: size mismatch");
  std::vector<double> a, b;
  for (std::size_t i = 0; i < log_ml.size(); ++i) (in_a[i] ? a : b).push_back(log_ml[i]);
  if (a.empty() || b.empty())
    throw std::domain_error("log10_inclusion_bf: one side of the partition is empty");
  const double log_post_odds = log_sum_exp(a) - log_sum_exp(b);
  const double log_prior_odds =
      std::log(static_cast<double>(a.size())) - std::log(static_cast<double>(b.size()));
  return (log_post_odds - log_prior_odds) / std::log(10.0);
}

BmaResult run_model_averaging(const CellTable& cells, const PriorSet& priors,
                              const BmaSettings& settings) {
  BmaResult out;
  const auto specs = enumerate_models();
  std::vector<double> log_ml;
  log_ml.reserve(specs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    ModelEvidence ev;
    ev.spec = specs[m];
    HierTarget target(specs[m], priors, cells);
    if (target.dim() == 0) {
      ev.ml.log_ml = cells.total_flips() * std::log(0.5);
      ev.max_rhat = 1.0;
      ev.min_ess = static_cast<double>(settings.mcmc.chains) * settings.mcmc.iters;
    } else {
      PosteriorDraws fit = sample_posterior(target, settings.mcmc);
      ev.max_rhat = fit.diagnostics.max_rhat;
      ev.min_ess = fit.diagnostics.min_ess;
      ev.converged = fit.converged;
      ev.ml = bridge_log_ml(
          fit.draws, [&target](const double* x) { return target.log_density(x); },
          settings.bridge_seed + 1000 * m, settings.n_proposal);
    }
    log_ml.push_back(ev.ml.log_ml);
    out.models.push_back(std::move(ev));
  }
  out.posterior_prob =
      posterior_model_probs(log_ml, std::vector<double>(specs.size(), 1.0 / specs.size()));
  auto flags = [&](bool ModelSpec::*field) {
    std::vector<bool> v(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) v[i] = specs[i].*field;
    return v;
  };
  out.log10_bf_same_side = log10_inclusion_bf(log_ml, flags(&ModelSpec::same_side_bias));
  out.log10_bf_heads_tails = log10_inclusion_bf(log_ml, flags(&ModelSpec::heads_tails_bias));
  out.log10_bf_person_het = log10_inclusion_bf(log_ml, flags(&ModelSpec::person_heterogeneity));
  out.log10_bf_coin_het = log10_inclusion_bf(log_ml, flags(&ModelSpec::coin_heterogeneity));
  return out;
}

}  // namespace flips
