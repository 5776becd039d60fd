#include "flips/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace flips {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogHalf = -0.6931471805599453094;

}  // namespace

double logit(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw std::domain_error("logit: p outside (0,1)");
  return std::log(p) - std::log1p(-p);
}

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1p_exp(double x) {
  if (x > 35.0) return x + std::exp(-x);
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -log1p_exp(-x); }

double log1m_exp(double x) {
  if (x > 0.0) throw std::domain_error("log1m_exp: x > 0");
  if (x == 0.0) return -kInf;
  if (x > -0.6931471805599453) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_diff_exp(double a, double b) {
  if (b == -kInf) return a;
  if (b > a) throw std::domain_error("log_diff_exp: b > a");
  if (b == a) return -kInf;
  return a + log1m_exp(b - a);
}

// ---- log gamma (Lanczos, g = 7, 9 coefficients) ----

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: x <= 0");
  static const double c[9] = {
      0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,    12.507343278686905,
      -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double a = c[0];
  for (int i = 1; i < 9; ++i) a += c[i] / (z + i);
  const double t = z + 7.5;
  return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(a);
}

double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

namespace {

// Continued fraction for the incomplete beta (Lentz). Returns log of the CF value.
double log_betacf(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  constexpr long max_iter = 1000000;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  long m = 1;
  for (; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  if (m > max_iter) throw std::runtime_error("reg_inc_beta: continued fraction did not converge");
  return std::log(h);
}

// log I_x(a,b) computed directly on the lower tail (requires x below the CF split point).
double log_inc_beta_lower(double x, double a, double b) {
  if (x <= 0.0) return -kInf;
  return a * std::log(x) + b * std::log1p(-x) - std::log(a) - log_beta(a, b) +
         log_betacf(x, a, b);
}

}  // namespace

double log_reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: shapes <= 0");
  if (x < 0.0 || x > 1.0) throw std::domain_error("reg_inc_beta: x outside [0,1]");
  if (x == 0.0) return -kInf;
  if (x == 1.0) return 0.0;
  if (x < (a + 1.0) / (a + b + 2.0)) return log_inc_beta_lower(x, a, b);
  // symmetry: I_x(a,b) = 1 - I_{1-x}(b,a)
  return log1m_exp(std::min(0.0, log_inc_beta_lower(1.0 - x, b, a)));
}

double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: shapes <= 0");
  if (x < 0.0 || x > 1.0) throw std::domain_error("reg_inc_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_inc_beta_lower(x, a, b));
  return 1.0 - std::exp(log_inc_beta_lower(1.0 - x, b, a));
}

double log_beta_interval_mass(double a, double b, double lo, double hi) {
  if (!(lo < hi)) throw std::domain_error("log_beta_interval_mass: lo >= hi");
  lo = std::max(lo, 0.0);
  hi = std::min(hi, 1.0);
  const double log_F_hi = log_reg_inc_beta(hi, a, b);
  const double log_G_lo = lo <= 0.0 ? 0.0 : log_reg_inc_beta(1.0 - lo, b, a);
  if (log_F_hi <= kLogHalf) {
    const double log_F_lo = lo <= 0.0 ? -kInf : log_reg_inc_beta(lo, a, b);
    return log_diff_exp(log_F_hi, log_F_lo);
  }
  if (log_G_lo <= kLogHalf) {
    const double log_G_hi = hi >= 1.0 ? -kInf : log_reg_inc_beta(1.0 - hi, b, a);
    return log_diff_exp(log_G_lo, log_G_hi);
  }
  // interval straddles the bulk: both excluded tails are small in linear space
  const double F_lo = lo <= 0.0 ? 0.0 : reg_inc_beta(lo, a, b);
  const double G_hi = hi >= 1.0 ? 0.0 : reg_inc_beta(1.0 - hi, b, a);
  return std::log1p(-(F_lo + G_hi));
}

double beta_quantile(double q, double a, double b) {
  if (!(q > 0.0) || !(q < 1.0)) throw std::domain_error("beta_quantile: q outside (0,1)");
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("beta_quantile: shapes <= 0");
  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);
  const double lb = log_beta(a, b);
  for (int it = 0; it < 300; ++it) {
    const double fx = reg_inc_beta(x, a, b) - q;
    if (std::fabs(fx) <= 1e-10 && it > 0) return x;
    if (fx > 0.0) hi = x; else lo = x;
    const double log_pdf = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lb;
    double step = fx / std::exp(log_pdf);
    double next = x - step;
    if (!(next > lo) || !(next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (next == x) return x;
    x = next;
  }
  return x;
}

// ---- incomplete gamma ----

double reg_inc_gamma_lower(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("reg_inc_gamma_lower: a <= 0");
  if (x < 0.0) throw std::domain_error("reg_inc_gamma_lower: x < 0");
  if (x == 0.0) return 0.0;
  const double lg = log_gamma(a);
  if (x < a + 1.0) {
    // series
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // continued fraction for Q(a,x)
  constexpr double tiny = 1e-300;
  double bq = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / bq, h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    bq += 2.0;
    d = an * d + bq;
    if (std::fabs(d) < tiny) d = tiny;
    c = bq + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

double chi2_sf(double x, double k) {
  if (x <= 0.0) return 1.0;
  return 1.0 - reg_inc_gamma_lower(0.5 * k, 0.5 * x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  // Acklam's rational approximation, then one Halley refinement step
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double log_binom_pmf(long long k, long long n, double log_p, double log_q) {
  if (k < 0 || k > n) return -kInf;
  const double lc = log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
  double t = lc;
  if (k > 0) t += k * log_p;
  if (k < n) t += (n - k) * log_q;
  return t;
}

// ---- Gauss-Hermite ----

namespace {

// number of eigenvalues of the Hermite Jacobi matrix (zero diagonal,
// off-diagonals sqrt(k/2)) strictly below x, by Sturm sequence
int hermite_eigs_below(int m, double x) {
  constexpr double kPiv = 1e-300;
  int cnt = 0;
  double d = -x;
  if (std::fabs(d) < kPiv) d = -kPiv;
  if (d < 0.0) ++cnt;
  for (int k = 1; k < m; ++k) {
    d = -x - (0.5 * k) / d;
    if (std::fabs(d) < kPiv) d = -kPiv;
    if (d < 0.0) ++cnt;
  }
  return cnt;
}

}  // namespace

QuadratureRule gauss_hermite(int m) {
  if (m < 1 || m > 200) throw std::domain_error("gauss_hermite: m outside [1,200]");
  QuadratureRule rule;
  rule.kind = QuadratureRule::Kind::gauss_hermite;
  rule.nodes.assign(m, 0.0);
  rule.weights.assign(m, 0.0);
  const double pim4 = 0.7511255444649425;  // pi^{-1/4}
  const int half = (m + 1) / 2;
  const double bound = std::sqrt(2.0 * m) + 1.0;  // Gershgorin radius plus slack
  for (int i = 0; i < half; ++i) {
    // the (i+1)-th largest node is the (m-i)-th smallest eigenvalue; bisection
    // on the Sturm count brackets it unconditionally, with no initial guess
    double lo = -1.0, hi = bound;
    for (int it = 0; it < 110; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (hermite_eigs_below(m, mid) >= m - i)
        hi = mid;
      else
        lo = mid;
      if (hi - lo < 1e-17 * bound) break;
    }
    double z = 0.5 * (lo + hi);
    if (m % 2 == 1 && i == half - 1) z = 0.0;  // odd rules carry an exact center
    // orthonormal Hermite recurrence keeps values finite up to m = 200
    double p1 = pim4, p2 = 0.0;
    for (int j = 0; j < m; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(j / (j + 1.0)) * p3;
    }
    const double pp = std::sqrt(2.0 * m) * p2;  // derivative of the m-th at a root
    rule.nodes[i] = z;
    rule.nodes[m - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[m - 1 - i] = rule.weights[i];
  }
  // ascending node order
  std::reverse(rule.nodes.begin(), rule.nodes.end());
  std::reverse(rule.weights.begin(), rule.weights.end());
  return rule;
}

// ---- adaptive Gauss-Kronrod (G7, K15) ----

namespace {

const double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
const double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
const double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Segment {
  double lo, hi, value, error;
};

Segment eval_gk(const std::function<double(double)>& f, double lo, double hi) {
  const double c = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  const double f_center = f(c);
  double kronrod = kKronrodWeights[7] * f_center;
  double gauss = kGaussWeights[3] * f_center;
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const double fsum = f(c - dx) + f(c + dx);
    kronrod += kKronrodWeights[i] * fsum;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * fsum;
  }
  kronrod *= half;
  gauss *= half;
  double err = std::fabs(kronrod - gauss);
  err = std::min(err, std::pow(200.0 * err, 1.5));
  return {lo, hi, kronrod, err};
}

}  // namespace

double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double rel_tol, double abs_tol) {
  if (!(lo < hi)) throw std::domain_error("integrate: lo >= hi");
  std::vector<Segment> segs;
  segs.push_back(eval_gk(f, lo, hi));
  for (int round = 0; round < 4000; ++round) {
    double total = 0.0, err = 0.0;
    for (const auto& s : segs) {
      total += s.value;
      err += s.error;
    }
    if (err <= std::max(abs_tol, rel_tol * std::fabs(total))) return total;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segs.size(); ++i)
      if (segs[i].error > segs[worst].error) worst = i;
    const Segment s = segs[worst];
    const double mid = 0.5 * (s.lo + s.hi);
    if (mid <= s.lo || mid >= s.hi) throw std::runtime_error("integrate: interval exhausted");
    segs[worst] = eval_gk(f, s.lo, mid);
    segs.push_back(eval_gk(f, mid, s.hi));
  }
  throw std::runtime_error("integrate: failed to reach tolerance");
}

double log_integrate(const std::function<double(double)>& log_f, double lo, double hi,
                     double rel_tol) {
  if (!(lo < hi)) throw std::domain_error("log_integrate: lo >= hi");
  constexpr int kScan = 257;
  double shift = -kInf;
  for (int i = 0; i < kScan; ++i) {
    const double x = lo + (hi - lo) * i / (kScan - 1.0);
    shift = std::max(shift, log_f(x));
  }
  if (shift == -kInf) return -kInf;
  // integrate panel-by-panel over the scan grid: a peak much narrower than
  // the full range cannot hide between the nodes of a single adaptive pass
  const auto f = [&](double x) { return std::exp(log_f(x) - shift); };
  double v = 0.0;
  for (int i = 0; i + 1 < kScan; ++i) {
    const double a = lo + (hi - lo) * i / (kScan - 1.0);
    const double b = lo + (hi - lo) * (i + 1) / (kScan - 1.0);
    v += integrate(f, a, b, rel_tol, 0.0);
  }
  if (!(v > 0.0)) return -kInf;
  return shift + std::log(v);
}

}  // namespace flips
