#include "flips/binomial_tests.hpp"

#include <cmath>
#include <stdexcept>

#include "flips/numerics.hpp"

namespace flips {

namespace {

constexpr double kLog2 = 0.6931471805599453094;

// central 95% interval of a Beta(A,B) truncated to [lo,hi]
void truncated_beta_summary(double A, double B, double lo, double hi, double* mean,
                            double* ci_low, double* ci_high) {
  const double F_lo = lo <= 0.0 ? 0.0 : reg_inc_beta(lo, A, B);
  const double F_hi = hi >= 1.0 ? 1.0 : reg_inc_beta(hi, A, B);
  const double mass = F_hi - F_lo;
  if (!(mass > 0.0)) throw std::runtime_error("truncated posterior has vanishing mass");
  // E[x | lo<=x<=hi] via the conjugate shift identity x * Beta(A,B) ~ Beta(A+1,B) kernel
  const double mass_up = std::exp(log_beta_interval_mass(A + 1.0, B, lo, hi));
  *mean = A / (A + B) * (mass_up / mass);
  *ci_low = beta_quantile(F_lo + 0.025 * mass, A, B);
  *ci_high = beta_quantile(F_lo + 0.975 * mass, A, B);
}

}  // namespace

BinomialTestResult bf_informed_binomial(std::int64_t k, std::int64_t n,
                                        const TruncatedBetaPrior& prior) {
  if (k < 0 || n < 0 || k > n) throw std::domain_error("bf_informed_binomial: bad counts");
  if (!(prior.a > 0.0) || !(prior.b > 0.0) || !(prior.lower < prior.upper) ||
      prior.lower < 0.0 || prior.upper > 1.0)
    throw std::domain_error("bf_informed_binomial: bad prior");
  const double log_prior_mass =
      log_beta_interval_mass(prior.a, prior.b, prior.lower, prior.upper);
  if (!std::isfinite(log_prior_mass))
    throw std::domain_error("bf_informed_binomial: degenerate prior (zero mass on interval)");
  const double A = prior.a + static_cast<double>(k);
  const double B = prior.b + static_cast<double>(n - k);
  const double log_post_mass = log_beta_interval_mass(A, B, prior.lower, prior.upper);

  BinomialTestResult r;
  r.k = k;
  r.n = n;
  r.log_bf10 = log_beta(A, B) + log_post_mass - log_beta(prior.a, prior.b) -
               log_prior_mass + static_cast<double>(n) * kLog2;
  r.log10_bf10 = r.log_bf10 / std::log(10.0);
  r.bf10 = std::exp(r.log_bf10);
  truncated_beta_summary(A, B, prior.lower, prior.upper, &r.posterior_mean, &r.ci_low,
                         &r.ci_high);
  r.prior = "truncated-beta";
  return r;
}

BinomialTestResult bf_symmetric_binomial(std::int64_t h, std::int64_t n, double a, double b) {
  if (h < 0 || n < 0 || h > n) throw std::domain_error("bf_symmetric_binomial: bad counts");
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("bf_symmetric_binomial: bad prior");
  const double A = a + static_cast<double>(h);
  const double B = b + static_cast<double>(n - h);
  BinomialTestResult r;
  r.k = h;
  r.n = n;
  r.log_bf10 = log_beta(A, B) - log_beta(a, b) + static_cast<double>(n) * kLog2;
  r.log10_bf10 = r.log_bf10 / std::log(10.0);
  r.bf10 = std::exp(r.log_bf10);
  r.posterior_mean = A / (A + B);
  r.ci_low = beta_quantile(0.025, A, B);
  r.ci_high = beta_quantile(0.975, A, B);
  r.prior = "beta";
  return r;
}

UniformPosterior posterior_interval_uniform(std::int64_t k, std::int64_t n) {
  if (k < 0 || n < 0 || k > n) throw std::domain_error("posterior_interval_uniform: bad counts");
  UniformPosterior p;
  p.mean = (static_cast<double>(k) + 1.0) / (static_cast<double>(n) + 2.0);
  p.ci_low = beta_quantile(0.025, k + 1.0, n - k + 1.0);
  p.ci_high = beta_quantile(0.975, k + 1.0, n - k + 1.0);
  return p;
}

namespace {

// P(X <= k) and P(X >= k) for X ~ Binomial(n, p), exact via the incomplete beta
double binom_cdf(std::int64_t k, std::int64_t n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  return std::exp(log_reg_inc_beta(1.0 - p, static_cast<double>(n - k),
                                   static_cast<double>(k) + 1.0));
}

double binom_sf(std::int64_t k, std::int64_t n, double p) {  // P(X >= k)
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  return std::exp(log_reg_inc_beta(p, static_cast<double>(k),
                                   static_cast<double>(n - k) + 1.0));
}

}  // namespace

double exact_binomial_p(std::int64_t k, std::int64_t n, double p0) {
  if (k < 0 || n < 0 || k > n) throw std::domain_error("exact_binomial_p: bad counts");
  if (!(p0 > 0.0) || !(p0 < 1.0)) throw std::domain_error("exact_binomial_p: p0 outside (0,1)");
  const double log_p = std::log(p0), log_q = std::log1p(-p0);
  auto lpmf = [&](std::int64_t j) { return log_binom_pmf(j, n, log_p, log_q); };
  const auto mode = static_cast<std::int64_t>(std::floor((n + 1) * p0));
  if (k == mode) return 1.0;
  // minimum-likelihood rule with the customary (1 + 1e-7) relative slack
  const double log_d = lpmf(k) + std::log1p(1e-7);
  if (k < mode) {
    // pmf is nonincreasing on [mode, n]: first j there with pmf(j) <= d
    std::int64_t lo = mode, hi = n + 1;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (lpmf(mid) <= log_d) hi = mid; else lo = mid + 1;
    }
    return std::min(1.0, binom_cdf(k, n, p0) + binom_sf(lo, n, p0));
  }
  // pmf is nondecreasing on [0, mode]: last j there with pmf(j) <= d
  std::int64_t lo = -1, hi = mode;
  while (lo < hi) {
    const std::int64_t mid = hi - (hi - lo) / 2;
    if (lpmf(mid) <= log_d) lo = mid; else hi = mid - 1;
  }
  const double left = lo < 0 ? 0.0 : binom_cdf(lo, n, p0);
  return std::min(1.0, binom_sf(k, n, p0) + left);
}

}  // namespace flips
