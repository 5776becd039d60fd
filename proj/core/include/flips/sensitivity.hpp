#pragma once

#include <vector>

#include "flips/hier_model.hpp"
#include "flips/model_averaging.hpp"

namespace flips {

// log density of the normal-moment prior with mode parameter phi:
// p(x | phi) = 2 x^2 / (sqrt(pi) phi^3) exp(-x^2 / phi^2), doubled and
// restricted to x > 0 when positive_only.
double nm_logpdf(double x, double phi, bool positive_only);

struct BffPoint {
  double phi = 0.0;        // prior mode on the logit scale
  double mode_prob = 0.5;  // invlogit(phi), the mode as a probability
  double log10_bf = 0.0;
};

struct BffCurve {
  std::vector<BffPoint> points;
  double max_log10_bf = 0.0;
  double phi_at_max = 0.0;
};

// {0} plus 16 equally spaced modes 0.005..0.08
std::vector<double> default_bff_grid();

// Bayes-factor function of a single binomial count: normal-moment prior on the
// logit of the success probability against a point null at one half. The
// phi = 0 point is the null itself and has Bayes factor 1 by definition.
BffCurve bff_binomial(double k, double n, const std::vector<double>& grid,
                      bool positive_only, double rel_tol = 1e-9);

enum class BffComponent { same_side, heads_tails, person_het, coin_het };

struct HierBffSettings {
  BmaSettings bma;
  // fixed normal-moment modes for the components not being swept
  double phi_beta = 0.04;
  double phi_alpha = 0.04;
  double phi_sigma_beta = 0.02;
  double phi_sigma_alpha = 0.02;
};

// Prior-sensitivity sweep of one component's inclusion Bayes factor in the
// full model-averaged analysis. Expensive; intended to run behind a flag.
BffCurve bff_hierarchical(const CellTable& cells, BffComponent sweep,
                          const std::vector<double>& grid, const HierBffSettings& settings);

}  // namespace flips
