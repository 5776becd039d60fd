#pragma once

// Internal helpers shared by the hierarchical and learning targets: component
// prior densities evaluated on the unconstrained sampling coordinates, with
// the change-of-variables terms folded in.

#include <cmath>
#include <limits>
#include <stdexcept>

#include "flips/hier_model.hpp"
#include "flips/numerics.hpp"

namespace flips::detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

// prior log density on a logit-scale coordinate t (parameter p = invlogit(t))
inline double coord_prior_prob(const ComponentPrior& c, double t) {
  using F = ComponentPrior::Family;
  switch (c.family) {
    case F::beta:
      // Beta on p; the Jacobian p(1-p) folds the exponents to (a, b)
      return c.p1 * log_sigmoid(t) + c.p2 * log_sigmoid(-t) - log_beta(c.p1, c.p2);
    case F::trunc_beta: {
      const double p = inv_logit(t);
      if (!(p > c.lo) || !(p < c.hi)) return kNegInf;
      return c.p1 * log_sigmoid(t) + c.p2 * log_sigmoid(-t) - log_beta(c.p1, c.p2) -
             log_beta_interval_mass(c.p1, c.p2, c.lo, c.hi);
    }
    case F::normal_moment: {
      if (c.positive_only && !(t > 0.0)) return kNegInf;
      if (t == 0.0) return kNegInf;
      double v = std::log(t * t) - 0.5 * std::log(M_PI) - 3.0 * std::log(c.p1) -
                 t * t / (c.p1 * c.p1);
      if (c.positive_only) v += std::log(2.0);
      return v;
    }
    default:
      throw std::domain_error("prior family not valid for a probability parameter");
  }
}

// prior log density on a log-scale coordinate ls (parameter sigma = exp(ls))
inline double coord_prior_scale(const ComponentPrior& c, double ls) {
  using F = ComponentPrior::Family;
  const double sigma = std::exp(ls);
  switch (c.family) {
    case F::half_normal:
      return std::log(2.0) - 0.5 * kLog2Pi - std::log(c.p1) -
             0.5 * sigma * sigma / (c.p1 * c.p1) + ls;
    case F::gamma:
      return c.p1 * std::log(c.p2) - log_gamma(c.p1) + c.p1 * ls - c.p2 * sigma;
    case F::normal_moment:
      return std::log(2.0) + std::log(sigma * sigma) - 0.5 * std::log(M_PI) -
             3.0 * std::log(c.p1) - sigma * sigma / (c.p1 * c.p1) + ls;
    default:
      throw std::domain_error("prior family not valid for a scale parameter");
  }
}

}  // namespace flips::detail
