#pragma once

#include <cstdint>
#include <string>

namespace flips {

struct TruncatedBetaPrior {
  double a = 5100.0;
  double b = 4900.0;
  double lower = 0.5;
  double upper = 1.0;
};

struct BinomialTestResult {
  std::int64_t k = 0;
  std::int64_t n = 0;
  double log_bf10 = 0.0;   // natural log
  double log10_bf10 = 0.0;
  double bf10 = 0.0;       // presentation only; may overflow to inf for huge BFs
  double posterior_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string prior;
};

// Informed test against H0: p = 1/2 with a truncated conjugate Beta prior.
// The binomial coefficient cancels between numerator and denominator.
BinomialTestResult bf_informed_binomial(std::int64_t k, std::int64_t n,
                                        const TruncatedBetaPrior& prior = {});

// Symmetric conjugate test against H0: p = 1/2 with a Beta(a,b) prior.
BinomialTestResult bf_symmetric_binomial(std::int64_t h, std::int64_t n, double a = 5000.0,
                                         double b = 5000.0);

struct UniformPosterior {
  double mean = 0.5;
  double ci_low = 0.0;
  double ci_high = 1.0;
};

// Posterior under a uniform prior: mean (k+1)/(n+2), central 95% of Beta(k+1, n-k+1).
UniformPosterior posterior_interval_uniform(std::int64_t k, std::int64_t n);

// Two-sided exact binomial p-value, minimum-likelihood convention: the sum of the
// probabilities of all outcomes no more likely than the observed one.
double exact_binomial_p(std::int64_t k, std::int64_t n, double p0 = 0.5);

}  // namespace flips
