#include "flips/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "flips/numerics.hpp"

namespace flips {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double nm_logpdf(double x, double phi, bool positive_only) {
  if (!(phi > 0.0)) throw std::domain_error("nm_logpdf: phi must be positive");
  if (positive_only && x <= 0.0) return -kInf;
  if (x == 0.0) return -kInf;
  // 2x^2/(sqrt(pi) phi^3) exp(-x^2/phi^2) integrates to one over the real
  // line; truncating to the positive half-line doubles it again
  double v = std::log(2.0) + std::log(x * x) - 0.5 * std::log(M_PI) -
             3.0 * std::log(phi) - x * x / (phi * phi);
  if (positive_only) v += std::log(2.0);
  return v;
}

std::vector<double> default_bff_grid() {
  std::vector<double> g{0.0};
  for (int i = 1; i <= 16; ++i) g.push_back(0.005 * i);
  return g;
}

namespace {

BffCurve assemble_curve(std::vector<BffPoint> points) {
  BffCurve c;
  c.points = std::move(points);
  c.max_log10_bf = -kInf;
  for (const auto& p : c.points)
    if (p.log10_bf > c.max_log10_bf) {
      c.max_log10_bf = p.log10_bf;
      c.phi_at_max = p.phi;
    }
  return c;
}

}  // namespace

BffCurve bff_binomial(double k, double n, const std::vector<double>& grid,
                      bool positive_only, double rel_tol) {
  if (!(n > 0.0) || k < 0.0 || k > n) throw std::domain_error("bff_binomial: bad counts");
  if (grid.empty()) throw std::domain_error("bff_binomial: empty grid");
  const double log_null = n * std::log(0.5);
  const double p_hat = std::clamp(k / n, 1.0 / (n + 1.0), n / (n + 1.0));
  const double x_hat = logit(p_hat);
  const double sd_hat = 1.0 / std::sqrt(n * p_hat * (1.0 - p_hat));
  std::vector<BffPoint> points;
  points.reserve(grid.size());
  for (double phi : grid) {
    BffPoint pt;
    pt.phi = phi;
    pt.mode_prob = inv_logit(phi);
    if (phi == 0.0) {
      pt.log10_bf = 0.0;  // the prior collapses onto the null
      points.push_back(pt);
      continue;
    }
    if (phi < 0.0) throw std::domain_error("bff_binomial: negative prior mode");
    const double up = std::max({10.0 * phi, std::fabs(x_hat) + 12.0 * sd_hat, 0.5});
    auto log_f = [&](double x) {
      return k * log_sigmoid(x) + (n - k) * log_sigmoid(-x) +
             nm_logpdf(x, phi, positive_only);
    };
    const double lo = positive_only ? 0.0 : -up;
    const double log_m1 = log_integrate(log_f, lo, up, rel_tol);
    pt.log10_bf = (log_m1 - log_null) / std::log(10.0);
    points.push_back(pt);
  }
  return assemble_curve(std::move(points));
}

BffCurve bff_hierarchical(const CellTable& cells, BffComponent sweep,
                          const std::vector<double>& grid,
                          const HierBffSettings& settings) {
  if (grid.empty()) throw std::domain_error("bff_hierarchical: empty grid");
  std::vector<BffPoint> points;
  points.reserve(grid.size());
  for (double phi : grid) {
    BffPoint pt;
    pt.phi = phi;
    const bool prob_sweep =
        sweep == BffComponent::same_side || sweep == BffComponent::heads_tails;
    pt.mode_prob = prob_sweep ? inv_logit(phi) : phi;
    if (phi == 0.0) {
      // the component prior degenerates to the null value: the models with and
      // without the component coincide and the inclusion Bayes factor is 1
      pt.log10_bf = 0.0;
      points.push_back(pt);
      continue;
    }
    PriorSet priors;
    using F = ComponentPrior::Family;
    priors.beta_mu = {F::normal_moment,
                      sweep == BffComponent::same_side ? phi : settings.phi_beta,
                      0.0, 0.0, 0.0, true};
    priors.alpha_mu = {F::normal_moment,
                       sweep == BffComponent::heads_tails ? phi : settings.phi_alpha,
                       0.0, 0.0, 0.0, false};
    priors.sigma_beta = {F::normal_moment,
                         sweep == BffComponent::person_het ? phi : settings.phi_sigma_beta,
                         0.0, 0.0, 0.0, true};
    priors.sigma_alpha = {F::normal_moment,
                          sweep == BffComponent::coin_het ? phi : settings.phi_sigma_alpha,
                          0.0, 0.0, 0.0, true};
    const BmaResult bma = run_model_averaging(cells, priors, settings.bma);
    switch (sweep) {
      case BffComponent::same_side: pt.log10_bf = bma.log10_bf_same_side; break;
      case BffComponent::heads_tails: pt.log10_bf = bma.log10_bf_heads_tails; break;
      case BffComponent::person_het: pt.log10_bf = bma.log10_bf_person_het; break;
      case BffComponent::coin_het: pt.log10_bf = bma.log10_bf_coin_het; break;
    }
    points.push_back(pt);
  }
  return assemble_curve(std::move(points));
}

}  // namespace flips
