#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flips/hier_model.hpp"
#include "flips/mcmc.hpp"

namespace flips {

// Marginal likelihood estimated by the optimal-bridge identity with a
// moment-matched multivariate normal proposal.
struct MarginalLikelihood {
  double log_ml = 0.0;
  double rel_mc_error = 0.0;  // approximate relative Monte Carlo error
  int iterations = 0;         // bridge fixed-point iterations used
};

// `draws` are posterior draws in the unconstrained space; `log_target` is the
// un-normalized log posterior density on that space. The first half of each
// chain fits the proposal; the second half enters the bridge estimator.
// `n_proposal` = 0 draws as many proposal points as retained posterior points.
MarginalLikelihood bridge_log_ml(const Draws& draws,
                                 const std::function<double(const double*)>& log_target,
                                 std::uint64_t seed, int n_proposal = 0);

// posterior model probabilities from log marginal likelihoods and prior weights
std::vector<double> posterior_model_probs(const std::vector<double>& log_ml,
                                          const std::vector<double>& prior_prob);

// Inclusion Bayes factor for the models flagged `true` against the rest,
// assuming equal prior model probabilities. Returned on the log10 scale.
double log10_inclusion_bf(const std::vector<double>& log_ml, const std::vector<bool>& in_a);

struct ModelEvidence {
  ModelSpec spec;
  MarginalLikelihood ml;
  double max_rhat = 1.0;
  double min_ess = 0.0;
  bool converged = true;
};

struct BmaResult {
  std::vector<ModelEvidence> models;   // enumeration order
  std::vector<double> posterior_prob;  // equal prior over the model space
  double log10_bf_same_side = 0.0;
  double log10_bf_heads_tails = 0.0;
  double log10_bf_person_het = 0.0;
  double log10_bf_coin_het = 0.0;
};

struct BmaSettings {
  McmcSettings mcmc;
  int n_proposal = 0;
  std::uint64_t bridge_seed = 7;
};

// Fits every model in enumerate_models() under the testing priors supplied,
// estimates each marginal likelihood by bridge sampling (the fully pinned
// model is analytic), and assembles inclusion Bayes factors.
BmaResult run_model_averaging(const CellTable& cells, const PriorSet& priors,
                              const BmaSettings& settings);

}  // namespace flips
