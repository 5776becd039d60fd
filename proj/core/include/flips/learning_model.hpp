#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flips/flip_data.hpp"
#include "flips/hier_model.hpp"
#include "flips/mcmc.hpp"

namespace flips {

// One start-direction cell of a batch of consecutive flips of one person-coin
// run. `t` is the mean within-person flip index of the batch, in thousands.
struct LearnCell {
  int person = 0;
  int coin = 0;
  int sign = 0;  // +1 start-heads, -1 start-tails
  double t = 0.0;
  double log_t = 0.0;
  double n = 0.0;
  double heads = 0.0;
};

struct LearnData {
  std::vector<std::string> persons;
  std::vector<std::string> coins;
  std::vector<LearnCell> cells;
  double total_flips() const;
};

// Splits every person-coin run into batches of `batch_size` consecutive flips
// (final short batch kept) and aggregates heads counts by start direction.
LearnData make_batches(const FlipDataset& d, int batch_size = 100);

struct LearnPriors {
  ComponentPrior alpha_mu{ComponentPrior::Family::beta, 312.0, 312.0};
  ComponentPrior theta_mu{ComponentPrior::Family::beta, 312.0, 312.0};
  ComponentPrior lambda_mu{ComponentPrior::Family::beta, 312.0, 312.0};
  double rho_mu_sd = 10.0;
  ComponentPrior sigma_alpha{ComponentPrior::Family::half_normal, 0.04};
  ComponentPrior sigma_theta{ComponentPrior::Family::half_normal, 0.04};
  ComponentPrior sigma_lambda{ComponentPrior::Family::half_normal, 0.04};
  ComponentPrior sigma_rho{ComponentPrior::Family::half_normal, 1.0};
};

// start-direction part of the linear predictor: logit theta + logit lambda * t^rho
double learning_mu_same(double logit_theta, double logit_lambda, double rho, double t);

// Decaying-effect model on the unconstrained space. Layout: four population
// coordinates, four log scales, then non-centered unit offsets per coin
// (alpha) and per person (theta, lambda, rho).
class LearnTarget {
 public:
  LearnTarget(LearnData data, LearnPriors priors);

  int dim() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const LearnData& data() const { return data_; }
  const LearnPriors& priors() const { return priors_; }

  double log_density(const double* x) const;
  double log_likelihood_at(const double* x) const;
  double cell_mu(const double* x, int cell_index) const;
  std::vector<double> initial_point(unsigned chain, std::uint64_t seed) const;

  int i_ta() const { return 0; }    // logit alpha_mu
  int i_tt() const { return 1; }    // logit theta_mu
  int i_tl() const { return 2; }    // logit lambda_mu
  int i_rho() const { return 3; }   // rho_mu
  int i_lsa() const { return 4; }   // log sigma_alpha
  int i_lst() const { return 5; }   // log sigma_theta
  int i_lsl() const { return 6; }   // log sigma_lambda
  int i_lsr() const { return 7; }   // log sigma_rho
  int o_za() const { return 8; }
  int o_zt() const { return 8 + n_coins(); }
  int o_zl() const { return 8 + n_coins() + n_persons(); }
  int o_zr() const { return 8 + n_coins() + 2 * n_persons(); }
  int n_persons() const { return static_cast<int>(data_.persons.size()); }
  int n_coins() const { return static_cast<int>(data_.coins.size()); }
  const std::vector<std::vector<int>>& cells_by_person() const { return by_person_; }
  const std::vector<std::vector<int>>& cells_by_coin() const { return by_coin_; }

 private:
  LearnData data_;
  LearnPriors priors_;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> by_person_, by_coin_;
};

struct LearningFit {
  PosteriorDraws fit;
  Estimate baseline;    // invlogit(logit theta_mu): asymptotic same-side rate
  Estimate toss_order;  // invlogit(logit lambda_mu): decaying component
  Estimate initial;     // invlogit(logit theta_mu + logit lambda_mu)
  Estimate rho;         // decay exponent
  bool converged = false;
};

LearningFit fit_learning(const LearnData& data, const LearnPriors& priors,
                         const McmcSettings& settings);

// Population same-side curve invlogit(logit theta + logit lambda * t^rho) at
// each requested t, summarized over the posterior draws.
std::vector<Estimate> learning_curve(const LearnTarget& target, const LearningFit& fit,
                                     const std::vector<double>& ts);

}  // namespace flips
