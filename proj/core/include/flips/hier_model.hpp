#pragma once

#include <string>
#include <vector>

#include "flips/flip_data.hpp"
#include "flips/mcmc.hpp"

namespace flips {

// One of the 16 models: orthogonal on/off combination of the four components.
struct ModelSpec {
  bool same_side_bias = true;
  bool heads_tails_bias = true;
  bool person_heterogeneity = true;
  bool coin_heterogeneity = true;

  std::string label() const;
  bool operator==(const ModelSpec&) const = default;
};

// M1 (all present) ... M16 (all absent); flag order as above, most-significant first.
std::vector<ModelSpec> enumerate_models();

struct ComponentPrior {
  enum class Family {
    beta,           // probability scale: p1=a, p2=b
    trunc_beta,     // probability scale restricted to [lo,hi]
    half_normal,    // sd scale: p1=sd of the underlying normal
    gamma,          // sd scale: p1=shape, p2=rate
    normal_moment,  // directly on the sampled coordinate: p1=phi (mode)
  };
  Family family = Family::beta;
  double p1 = 1.0, p2 = 1.0;
  double lo = 0.0, hi = 1.0;
  bool positive_only = false;
};

struct PriorSet {
  ComponentPrior beta_mu;      // same-side probability
  ComponentPrior alpha_mu;     // heads probability
  ComponentPrior sigma_beta;   // person heterogeneity scale (logit)
  ComponentPrior sigma_alpha;  // coin heterogeneity scale (logit)

  static PriorSet estimation();  // Beta(312,312)^2, half-Normal(0, 0.04)^2
  static PriorSet testing();     // Beta(5100,4900)_[0.5,1], Beta(5000,5000), Gamma(4,200)^2
};

struct HierParams {
  double alpha_mu = 0.5;
  double beta_mu = 0.5;
  std::vector<double> gamma_alpha;  // logit-scale coin offsets
  std::vector<double> gamma_beta;   // logit-scale person offsets
  double sigma_alpha = 0.0;
  double sigma_beta = 0.0;
};

// Bernoulli likelihood of the aggregated cells with
// mu = logit(alpha_mu) + gamma_alpha[j] + sign * (logit(beta_mu) + gamma_beta[k]).
double log_likelihood(const HierParams& p, const CellTable& cells);

double log_prior(const HierParams& p, const PriorSet& priors, const ModelSpec& spec);

// Unconstrained posterior: logit coordinates for probabilities, log for scales,
// offsets raw. Log density includes all change-of-variable terms, so marginal
// likelihoods computed against it are in the data's own scale.
class HierTarget {
 public:
  HierTarget(const ModelSpec& spec, const PriorSet& priors, CellTable cells);

  // adds site contrasts on the same-side term: delta = C * eta with an
  // orthonormal Helmert basis and eta_m ~ Normal(0, prior_sd^2); estimation only
  void enable_site_contrasts(std::vector<int> person_site, int n_sites, double prior_sd);

  int dim() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const ModelSpec& spec() const { return spec_; }
  const PriorSet& priors() const { return priors_; }
  const CellTable& cells() const { return cells_; }

  double log_density(const double* x) const;
  double log_likelihood_at(const double* x) const;
  HierParams to_params(const double* x) const;
  std::vector<double> initial_point(unsigned chain, std::uint64_t seed) const;

  // coordinate layout (-1 when the block is absent)
  int i_tb() const { return i_tb_; }
  int i_ta() const { return i_ta_; }
  int i_lsb() const { return i_lsb_; }
  int i_lsa() const { return i_lsa_; }
  int o_gb() const { return o_gb_; }
  int o_ga() const { return o_ga_; }
  int o_eta() const { return o_eta_; }
  int n_persons() const { return static_cast<int>(cells_.persons.size()); }
  int n_coins() const { return static_cast<int>(cells_.coins.size()); }
  int n_sites() const { return n_sites_; }
  double site_prior_sd() const { return site_prior_sd_; }
  const std::vector<std::vector<int>>& cells_by_person() const { return by_person_; }
  const std::vector<std::vector<int>>& cells_by_coin() const { return by_coin_; }
  double cell_mu(const double* x, int cell_index) const;
  double site_delta(const double* x, int site) const;  // C * eta
  const std::vector<std::vector<double>>& contrast_matrix() const { return contrast_; }

 private:
  ModelSpec spec_;
  PriorSet priors_;
  CellTable cells_;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> by_person_, by_coin_;
  std::vector<int> person_site_;
  std::vector<std::vector<double>> contrast_;
  double site_prior_sd_ = 0.2;
  int n_sites_ = 0;
  int i_tb_ = -1, i_ta_ = -1, i_lsb_ = -1, i_lsa_ = -1;
  int o_gb_ = -1, o_ga_ = -1, o_eta_ = -1;
};

struct PosteriorDraws {
  Draws draws;  // unconstrained scale, names from HierTarget
  ChainDiagnostics diagnostics;
  McmcSettings settings;
  bool converged = true;  // all split R-hat < 1.01
};

// Adaptive random-walk Metropolis: single-site updates plus translation and
// scale-offset interweaving moves; adaptation during warmup only.
PosteriorDraws sample_posterior(const HierTarget& target, const McmcSettings& settings);

struct HierEstimates {
  Estimate pr_same;    // beta_mu on probability scale
  Estimate pr_heads;   // alpha_mu on probability scale
  Estimate sd_people;  // sigma_beta * p(1-p) at the draw's beta_mu
  Estimate sd_coins;
};

// simulate_offsets: replace the first-order transform by the empirical sd of the
// draw's per-unit probabilities.
HierEstimates summarize_hier(const HierTarget& target, const PosteriorDraws& fit,
                             bool simulate_offsets = false);

struct SiteContrasts {
  std::vector<std::string> sites;
  std::vector<std::vector<double>> contrast;  // n_sites x (n_sites - 1), orthonormal
  std::vector<Estimate> delta_logit;
  std::vector<Estimate> delta_prob;  // invlogit(logit beta_mu + delta) - beta_mu, per draw
  ChainDiagnostics diagnostics;
};

SiteContrasts fit_site_contrasts(const FlipDataset& d, const PriorSet& priors,
                                 const McmcSettings& settings, double prior_sd = 0.2);

// Orthonormal zero-sum (Helmert-style) contrast basis, n x (n-1).
std::vector<std::vector<double>> orthonormal_contrasts(int n);

// Maximum-likelihood random-intercept logistic fit of the same-side indicator on
// the starting side, adaptive Gauss-Hermite integration over the person intercept.
struct GlmmFit {
  double b_mu = 0.0, se_b_mu = 0.0, z = 0.0, p = 1.0;
  double b_start = 0.0, se_start = 0.0, p_start = 1.0;
  double tau = 0.0;
  double lr_chi2 = 0.0, lr_p = 1.0;
  double loglik = 0.0;
  bool converged = false;
};

GlmmFit ml_fit_random_intercept(const CellTable& cells, int quad_nodes = 25);

}  // namespace flips
