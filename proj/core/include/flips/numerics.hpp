#pragma once

#include <functional>
#include <vector>

namespace flips {

// ---- stable elementary transforms ----

double logit(double p);          // log(p/(1-p)), p in (0,1)
double inv_logit(double x);      // 1/(1+exp(-x)), stable for |x| large
double log_sigmoid(double x);    // log inv_logit(x)
double log1p_exp(double x);      // log(1+exp(x)) without overflow
double log1m_exp(double x);      // log(1-exp(x)) for x <= 0
double log_sum_exp(double a, double b);
double log_sum_exp(const std::vector<double>& v);
double log_diff_exp(double a, double b);  // log(exp(a)-exp(b)), requires a >= b

// ---- special functions ----

// log Gamma(x), x > 0. Lanczos approximation, relative error <= 1e-13 on [1e-3, 1e7].
double log_gamma(double x);

// log B(a,b) = log Gamma(a) + log Gamma(b) - log Gamma(a+b).
double log_beta(double a, double b);

// Regularized incomplete beta I_x(a,b), absolute error <= 1e-12.
// Continued fraction (Lentz) evaluated on the smaller tail, prefactor in log space.
double reg_inc_beta(double x, double a, double b);

// log I_x(a,b); exact in log space even when I_x underflows.
double log_reg_inc_beta(double x, double a, double b);

// log of the Beta(a,b) probability mass on [lo, hi].
double log_beta_interval_mass(double a, double b, double lo, double hi);

// Inverse of reg_inc_beta in x: |I_result(a,b) - q| <= 1e-10. Bracketed Newton.
double beta_quantile(double q, double a, double b);

// Regularized lower incomplete gamma P(a,x); series/continued-fraction split.
double reg_inc_gamma_lower(double a, double x);

// Survival function of the chi-square distribution with k degrees of freedom.
double chi2_sf(double x, double k);

double normal_cdf(double z);
double normal_sf(double z);
double normal_quantile(double p);  // inverse of normal_cdf on (0,1)

// log C(n,k) + k*log_p + (n-k)*log_q where log_p/log_q are log(p), log(1-p).
double log_binom_pmf(long long k, long long n, double log_p, double log_q);

// ---- quadrature ----

struct QuadratureRule {
  enum class Kind { gauss_hermite, adaptive_interval };
  std::vector<double> nodes;
  std::vector<double> weights;
  Kind kind = Kind::gauss_hermite;
};

// Gauss-Hermite rule for integral of f(x) exp(-x^2) dx over the real line,
// m in [1, 200]. Newton iteration on the (scaled) Hermite recurrence.
QuadratureRule gauss_hermite(int m);

// Adaptive Gauss-Kronrod (G7,K15) on [lo, hi].
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double rel_tol = 1e-9, double abs_tol = 0.0);

// log of integral of exp(log_f(x)) dx on [lo, hi]; shifts by the max of log_f on a
// scan grid so the linear-space quadrature never overflows.
double log_integrate(const std::function<double(double)>& log_f, double lo, double hi,
                     double rel_tol = 1e-9);

}  // namespace flips
