#include "flips/hier_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "flips/numerics.hpp"
#include "flips/rng.hpp"
#include "prior_density.hpp"

namespace flips {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

std::string ModelSpec::label() const {
  std::string s;
  s += same_side_bias ? 's' : '-';
  s += heads_tails_bias ? 'h' : '-';
  s += person_heterogeneity ? 'p' : '-';
  s += coin_heterogeneity ? 'c' : '-';
  return s;
}

std::vector<ModelSpec> enumerate_models() {
  std::vector<ModelSpec> out;
  out.reserve(16);
  for (int bits = 15; bits >= 0; --bits) {
    ModelSpec m;
    m.same_side_bias = bits & 8;
    m.heads_tails_bias = bits & 4;
    m.person_heterogeneity = bits & 2;
    m.coin_heterogeneity = bits & 1;
    out.push_back(m);
  }
  return out;
}

PriorSet PriorSet::estimation() {
  PriorSet p;
  p.beta_mu = {ComponentPrior::Family::beta, 312.0, 312.0};
  p.alpha_mu = {ComponentPrior::Family::beta, 312.0, 312.0};
  p.sigma_beta = {ComponentPrior::Family::half_normal, 0.04};
  p.sigma_alpha = {ComponentPrior::Family::half_normal, 0.04};
  return p;
}

PriorSet PriorSet::testing() {
  PriorSet p;
  p.beta_mu = {ComponentPrior::Family::trunc_beta, 5100.0, 4900.0, 0.5, 1.0};
  p.alpha_mu = {ComponentPrior::Family::beta, 5000.0, 5000.0};
  p.sigma_beta = {ComponentPrior::Family::gamma, 4.0, 200.0};
  p.sigma_alpha = {ComponentPrior::Family::gamma, 4.0, 200.0};
  return p;
}

double log_likelihood(const HierParams& p, const CellTable& cells) {
  const double ta = logit(p.alpha_mu), tb = logit(p.beta_mu);
  double ll = 0.0;
  for (const auto& c : cells.cells) {
    const double a = ta + (p.gamma_alpha.empty() ? 0.0 : p.gamma_alpha[c.coin]);
    const double b = tb + (p.gamma_beta.empty() ? 0.0 : p.gamma_beta[c.person]);
    const double mu = a + c.sign * b;
    ll += c.heads * log_sigmoid(mu) + (c.n - c.heads) * log_sigmoid(-mu);
  }
  if (!std::isfinite(ll)) throw std::runtime_error("log_likelihood: non-finite result");
  return ll;
}

namespace {

// log density of a component prior on its natural scale (probability or sd);
// normal-moment priors live directly on the logit/sd coordinate.
double component_logpdf(const ComponentPrior& c, double value, bool is_probability) {
  using F = ComponentPrior::Family;
  switch (c.family) {
    case F::beta: {
      if (!(value > 0.0) || !(value < 1.0)) return -kInf;
      return (c.p1 - 1.0) * std::log(value) + (c.p2 - 1.0) * std::log1p(-value) -
             log_beta(c.p1, c.p2);
    }
    case F::trunc_beta: {
      if (!(value > c.lo) || !(value < c.hi)) return -kInf;
      return (c.p1 - 1.0) * std::log(value) + (c.p2 - 1.0) * std::log1p(-value) -
             log_beta(c.p1, c.p2) - log_beta_interval_mass(c.p1, c.p2, c.lo, c.hi);
    }
    case F::half_normal: {
      if (value < 0.0) return -kInf;
      return 0.5 * kLog2Pi * -1.0 + std::log(2.0) - std::log(c.p1) -
             0.5 * value * value / (c.p1 * c.p1);
    }
    case F::gamma: {
      if (!(value > 0.0)) return -kInf;
      return c.p1 * std::log(c.p2) - log_gamma(c.p1) + (c.p1 - 1.0) * std::log(value) -
             c.p2 * value;
    }
    case F::normal_moment: {
      const double x = is_probability ? logit(value) : value;
      if (c.positive_only && !(x > 0.0)) return -kInf;
      if (x == 0.0) return -kInf;
      double v = std::log(x * x) - 0.5 * std::log(M_PI) - 3.0 * std::log(c.p1) -
                 x * x / (c.p1 * c.p1);
      if (c.positive_only) v += std::log(2.0);
      return v;
    }
  }
  return -kInf;
}

double offsets_logpdf(const std::vector<double>& g, double sigma) {
  if (g.empty()) return 0.0;
  if (!(sigma > 0.0)) return -kInf;
  double s = 0.0;
  for (double x : g) s += x * x;
  const double K = static_cast<double>(g.size());
  return -0.5 * K * kLog2Pi - K * std::log(sigma) - 0.5 * s / (sigma * sigma);
}

}  // namespace

double log_prior(const HierParams& p, const PriorSet& priors, const ModelSpec& spec) {
  double lp = 0.0;
  if (spec.same_side_bias) lp += component_logpdf(priors.beta_mu, p.beta_mu, true);
  if (spec.heads_tails_bias) lp += component_logpdf(priors.alpha_mu, p.alpha_mu, true);
  if (spec.person_heterogeneity) {
    lp += component_logpdf(priors.sigma_beta, p.sigma_beta, false);
    lp += offsets_logpdf(p.gamma_beta, p.sigma_beta);
  }
  if (spec.coin_heterogeneity) {
    lp += component_logpdf(priors.sigma_alpha, p.sigma_alpha, false);
    lp += offsets_logpdf(p.gamma_alpha, p.sigma_alpha);
  }
  return lp;
}

// ---- unconstrained target ----

using detail::coord_prior_prob;
using detail::coord_prior_scale;

HierTarget::HierTarget(const ModelSpec& spec, const PriorSet& priors, CellTable cells)
    : spec_(spec), priors_(priors), cells_(std::move(cells)) {
  const int K = n_persons(), J = n_coins();
  if (spec_.same_side_bias) {
    i_tb_ = static_cast<int>(names_.size());
    names_.push_back("logit_beta_mu");
  }
  if (spec_.heads_tails_bias) {
    i_ta_ = static_cast<int>(names_.size());
    names_.push_back("logit_alpha_mu");
  }
  if (spec_.person_heterogeneity) {
    i_lsb_ = static_cast<int>(names_.size());
    names_.push_back("log_sigma_beta");
    o_gb_ = static_cast<int>(names_.size());
    for (int k = 0; k < K; ++k) names_.push_back("gamma_beta." + cells_.persons[k]);
  }
  if (spec_.coin_heterogeneity) {
    i_lsa_ = static_cast<int>(names_.size());
    names_.push_back("log_sigma_alpha");
    o_ga_ = static_cast<int>(names_.size());
    for (int j = 0; j < J; ++j) names_.push_back("gamma_alpha." + cells_.coins[j]);
  }
  by_person_.assign(K, {});
  by_coin_.assign(J, {});
  for (std::size_t i = 0; i < cells_.cells.size(); ++i) {
    by_person_[cells_.cells[i].person].push_back(static_cast<int>(i));
    by_coin_[cells_.cells[i].coin].push_back(static_cast<int>(i));
  }
}

void HierTarget::enable_site_contrasts(std::vector<int> person_site, int n_sites,
                                       double prior_sd) {
  if (!spec_.same_side_bias)
    throw std::domain_error("site contrasts require the same-side component");
  if (n_sites < 2) throw std::domain_error("site contrasts require >= 2 sites");
  person_site_ = std::move(person_site);
  n_sites_ = n_sites;
  site_prior_sd_ = prior_sd;
  contrast_ = orthonormal_contrasts(n_sites);
  o_eta_ = static_cast<int>(names_.size());
  for (int m = 0; m + 1 < n_sites; ++m) names_.push_back("site_eta." + std::to_string(m));
}

double HierTarget::site_delta(const double* x, int site) const {
  if (o_eta_ < 0) return 0.0;
  double d = 0.0;
  for (int m = 0; m + 1 < n_sites_; ++m) d += contrast_[site][m] * x[o_eta_ + m];
  return d;
}

double HierTarget::cell_mu(const double* x, int cell_index) const {
  const auto& c = cells_.cells[cell_index];
  double a = i_ta_ >= 0 ? x[i_ta_] : 0.0;
  if (o_ga_ >= 0) a += x[o_ga_ + c.coin];
  double b = i_tb_ >= 0 ? x[i_tb_] : 0.0;
  if (o_gb_ >= 0) b += x[o_gb_ + c.person];
  if (o_eta_ >= 0) b += site_delta(x, person_site_[c.person]);
  return a + c.sign * b;
}

double HierTarget::log_likelihood_at(const double* x) const {
  double ll = 0.0;
  for (std::size_t i = 0; i < cells_.cells.size(); ++i) {
    const auto& c = cells_.cells[i];
    const double mu = cell_mu(x, static_cast<int>(i));
    ll += c.heads * log_sigmoid(mu) + (c.n - c.heads) * log_sigmoid(-mu);
  }
  return ll;
}

double HierTarget::log_density(const double* x) const {
  double lp = 0.0;
  if (i_tb_ >= 0) {
    lp += coord_prior_prob(priors_.beta_mu, x[i_tb_]);
    if (lp == -kInf) return -kInf;
  }
  if (i_ta_ >= 0) {
    lp += coord_prior_prob(priors_.alpha_mu, x[i_ta_]);
    if (lp == -kInf) return -kInf;
  }
  if (i_lsb_ >= 0) {
    lp += coord_prior_scale(priors_.sigma_beta, x[i_lsb_]);
    const double sigma = std::exp(x[i_lsb_]);
    const double K = static_cast<double>(n_persons());
    double s = 0.0;
    for (int k = 0; k < n_persons(); ++k) s += x[o_gb_ + k] * x[o_gb_ + k];
    lp += -0.5 * K * kLog2Pi - K * x[i_lsb_] - 0.5 * s / (sigma * sigma);
  }
  if (i_lsa_ >= 0) {
    lp += coord_prior_scale(priors_.sigma_alpha, x[i_lsa_]);
    const double sigma = std::exp(x[i_lsa_]);
    const double J = static_cast<double>(n_coins());
    double s = 0.0;
    for (int j = 0; j < n_coins(); ++j) s += x[o_ga_ + j] * x[o_ga_ + j];
    lp += -0.5 * J * kLog2Pi - J * x[i_lsa_] - 0.5 * s / (sigma * sigma);
  }
  if (o_eta_ >= 0) {
    for (int m = 0; m + 1 < n_sites_; ++m) {
      const double e = x[o_eta_ + m];
      lp += -0.5 * kLog2Pi - std::log(site_prior_sd_) -
            0.5 * e * e / (site_prior_sd_ * site_prior_sd_);
    }
  }
  if (lp == -kInf || !std::isfinite(lp)) return -kInf;
  return lp + log_likelihood_at(x);
}

HierParams HierTarget::to_params(const double* x) const {
  HierParams p;
  p.beta_mu = i_tb_ >= 0 ? inv_logit(x[i_tb_]) : 0.5;
  p.alpha_mu = i_ta_ >= 0 ? inv_logit(x[i_ta_]) : 0.5;
  p.sigma_beta = i_lsb_ >= 0 ? std::exp(x[i_lsb_]) : 0.0;
  p.sigma_alpha = i_lsa_ >= 0 ? std::exp(x[i_lsa_]) : 0.0;
  if (o_gb_ >= 0) p.gamma_beta.assign(x + o_gb_, x + o_gb_ + n_persons());
  if (o_ga_ >= 0) p.gamma_alpha.assign(x + o_ga_, x + o_ga_ + n_coins());
  return p;
}

std::vector<double> HierTarget::initial_point(unsigned chain, std::uint64_t seed) const {
  const int K = n_persons(), J = n_coins();
  // empirical logits, lightly regularized
  std::vector<double> lg_p(K, 0.0), lg_c(J, 0.0);
  for (int k = 0; k < K; ++k) {
    double n = 0.0, same = 0.0;
    for (int i : by_person_[k]) {
      n += cells_.cells[i].n;
      same += cells_.same_of(cells_.cells[i]);
    }
    lg_p[k] = logit((same + 1.0) / (n + 2.0));
  }
  for (int j = 0; j < J; ++j) {
    double n = 0.0, heads = 0.0;
    for (int i : by_coin_[j]) {
      n += cells_.cells[i].n;
      heads += cells_.cells[i].heads;
    }
    lg_c[j] = logit((heads + 1.0) / (n + 2.0));
  }
  const double mean_p = std::accumulate(lg_p.begin(), lg_p.end(), 0.0) / std::max(1, K);
  const double mean_c = std::accumulate(lg_c.begin(), lg_c.end(), 0.0) / std::max(1, J);

  std::vector<double> x(dim(), 0.0);
  Rng rng(seed ^ 0xC0FFEE123456789Aull, chain);
  const bool trunc_b = priors_.beta_mu.family == ComponentPrior::Family::trunc_beta ||
                       (priors_.beta_mu.family == ComponentPrior::Family::normal_moment &&
                        priors_.beta_mu.positive_only);
  if (i_tb_ >= 0) {
    double tb = mean_p + 0.02 * rng.normal();
    if (trunc_b) tb = std::max(1e-3, std::fabs(tb));
    x[i_tb_] = tb;
  }
  if (i_ta_ >= 0) x[i_ta_] = mean_c + 0.02 * rng.normal();
  if (o_gb_ >= 0) {
    double ss = 0.0;
    for (int k = 0; k < K; ++k) {
      const double resid = i_tb_ >= 0 ? lg_p[k] - mean_p : lg_p[k];
      x[o_gb_ + k] = 0.8 * resid + 0.01 * rng.normal();
      ss += x[o_gb_ + k] * x[o_gb_ + k];
    }
    const double sd = std::clamp(std::sqrt(ss / std::max(1, K)), 0.01, 0.5);
    x[i_lsb_] = std::log(sd) + 0.1 * rng.normal();
  }
  if (o_ga_ >= 0) {
    double ss = 0.0;
    for (int j = 0; j < J; ++j) {
      const double resid = i_ta_ >= 0 ? lg_c[j] - mean_c : lg_c[j];
      x[o_ga_ + j] = 0.8 * resid + 0.01 * rng.normal();
      ss += x[o_ga_ + j] * x[o_ga_ + j];
    }
    const double sd = std::clamp(std::sqrt(ss / std::max(1, J)), 0.005, 0.5);
    x[i_lsa_] = std::log(sd) + 0.1 * rng.normal();
  }
  return x;
}

// ---- sampler ----

namespace {

double subset_loglik(const HierTarget& t, const double* x, const std::vector<int>& subset) {
  double ll = 0.0;
  for (int i : subset) {
    const auto& c = t.cells().cells[i];
    const double mu = t.cell_mu(x, i);
    ll += c.heads * log_sigmoid(mu) + (c.n - c.heads) * log_sigmoid(-mu);
  }
  return ll;
}

// Gaussian log density of `count` offsets with given sum of squares, sd = exp(ls)
double offset_gauss(double ls, double sumsq, int count) {
  return -0.5 * count * kLog2Pi - count * ls - 0.5 * sumsq * std::exp(-2.0 * ls);
}

}  // namespace

PosteriorDraws sample_posterior(const HierTarget& target, const McmcSettings& settings) {
  if (settings.chains < 1 || settings.warmup < 0 || settings.iters < 1)
    throw std::domain_error("sample_posterior: bad settings");
  const int d = target.dim();
  PosteriorDraws out;
  out.settings = settings;
  out.draws.names = target.names();
  out.draws.chains = settings.chains;
  out.draws.iters = settings.iters;
  out.draws.data.assign(static_cast<std::size_t>(settings.chains) * settings.iters *
                            std::max(1, d),
                        0.0);
  if (d == 0) {  // fully pinned model: nothing to sample
    out.draws.data.clear();
    out.converged = true;
    return out;
  }

  const auto& cells = target.cells();
  const int K = target.n_persons(), J = target.n_coins();
  const double n_total = cells.total_flips();
  // per-unit flip counts, for proposal scale initialization
  std::vector<double> flips_p(K, 0.0), flips_c(J, 0.0);
  for (const auto& c : cells.cells) {
    flips_p[c.person] += c.n;
    flips_c[c.coin] += c.n;
  }
  std::vector<int> all_cells(cells.cells.size());
  std::iota(all_cells.begin(), all_cells.end(), 0);

  const int i_tb = target.i_tb(), i_ta = target.i_ta();
  const int i_lsb = target.i_lsb(), i_lsa = target.i_lsa();
  const int o_gb = target.o_gb(), o_ga = target.o_ga(), o_eta = target.o_eta();
  const double eta_sd = target.site_prior_sd();

  auto run_one = [&](int chain) {
    Rng rng(settings.seed, static_cast<std::uint64_t>(chain));
    std::vector<double> x = target.initial_point(chain, settings.seed);

    std::vector<ScaleAdapter> scale;
    scale.reserve(d);
    for (int i = 0; i < d; ++i) scale.emplace_back(0.1, 0.44);
    auto global_scale = [&](double n) { return 2.0 / std::sqrt(0.25 * n + 10.0); };
    if (i_tb >= 0) scale[i_tb] = ScaleAdapter(global_scale(n_total), 0.44);
    if (i_ta >= 0) scale[i_ta] = ScaleAdapter(global_scale(n_total), 0.44);
    if (i_lsb >= 0) scale[i_lsb] = ScaleAdapter(0.25, 0.44);
    if (i_lsa >= 0) scale[i_lsa] = ScaleAdapter(0.25, 0.44);
    if (o_gb >= 0)
      for (int k = 0; k < K; ++k) scale[o_gb + k] = ScaleAdapter(global_scale(flips_p[k]), 0.44);
    if (o_ga >= 0)
      for (int j = 0; j < J; ++j) scale[o_ga + j] = ScaleAdapter(global_scale(flips_c[j]), 0.44);
    if (o_eta >= 0)
      for (int m = o_eta; m < d; ++m)
        scale[m] = ScaleAdapter(global_scale(n_total / std::max(1, target.n_sites())), 0.44);
    ScaleAdapter trans_b(global_scale(n_total), 0.44), trans_a(global_scale(n_total), 0.44);
    ScaleAdapter resc_b(0.25, 0.44), resc_a(0.25, 0.44);

    double cur_ll = target.log_likelihood_at(x.data());
    if (!std::isfinite(cur_ll))
      throw std::runtime_error("sample_posterior: invalid initial point");
    auto sumsq_of = [&](int off, int count) {
      double s = 0.0;
      for (int i = 0; i < count; ++i) s += x[off + i] * x[off + i];
      return s;
    };
    double ssq_b = o_gb >= 0 ? sumsq_of(o_gb, K) : 0.0;
    double ssq_a = o_ga >= 0 ? sumsq_of(o_ga, J) : 0.0;

    auto accept = [&](double delta, ScaleAdapter& ad, bool adapt) {
      const double acc = delta >= 0.0 ? 1.0 : std::exp(delta);
      const bool ok = delta != -kInf && rng.uniform() < acc;
      if (adapt) ad.update(delta == -kInf ? 0.0 : acc);
      return ok;
    };

    const int total_iters = settings.warmup + settings.iters;
    for (int it = 0; it < total_iters; ++it) {
      const bool adapt = it < settings.warmup;

      // global mean parameters: full-likelihood single-site updates
      auto update_mean = [&](int i, const ComponentPrior& prior) {
        if (i < 0) return;
        const double old = x[i];
        const double lp_old = coord_prior_prob(prior, old);
        x[i] = old + scale[i].scale() * rng.normal();
        const double lp_new = coord_prior_prob(prior, x[i]);
        if (lp_new == -kInf) {
          x[i] = old;
          if (adapt) scale[i].update(0.0);
          return;
        }
        const double new_ll = subset_loglik(target, x.data(), all_cells);
        if (accept(lp_new - lp_old + new_ll - cur_ll, scale[i], adapt)) {
          cur_ll = new_ll;
        } else {
          x[i] = old;
        }
      };
      update_mean(i_tb, target.priors().beta_mu);
      update_mean(i_ta, target.priors().alpha_mu);

      // site contrast coordinates (estimation-only, few of them): full pass
      if (o_eta >= 0) {
        for (int m = o_eta; m < d; ++m) {
          const double old = x[m];
          x[m] = old + scale[m].scale() * rng.normal();
          const double dpr = -0.5 * (x[m] * x[m] - old * old) / (eta_sd * eta_sd);
          const double new_ll = subset_loglik(target, x.data(), all_cells);
          if (accept(dpr + new_ll - cur_ll, scale[m], adapt)) {
            cur_ll = new_ll;
          } else {
            x[m] = old;
          }
        }
      }

      // per-person offsets: likelihood restricted to that person's cells
      if (o_gb >= 0) {
        const double inv2v = 0.5 * std::exp(-2.0 * x[i_lsb]);
        for (int k = 0; k < K; ++k) {
          const int i = o_gb + k;
          const double old = x[i];
          const double old_ll = subset_loglik(target, x.data(), target.cells_by_person()[k]);
          x[i] = old + scale[i].scale() * rng.normal();
          const double new_ll = subset_loglik(target, x.data(), target.cells_by_person()[k]);
          const double dpr = -(x[i] * x[i] - old * old) * inv2v;
          if (accept(dpr + new_ll - old_ll, scale[i], adapt)) {
            cur_ll += new_ll - old_ll;
            ssq_b += x[i] * x[i] - old * old;
          } else {
            x[i] = old;
          }
        }
      }
      if (o_ga >= 0) {
        const double inv2v = 0.5 * std::exp(-2.0 * x[i_lsa]);
        for (int j = 0; j < J; ++j) {
          const int i = o_ga + j;
          const double old = x[i];
          const double old_ll = subset_loglik(target, x.data(), target.cells_by_coin()[j]);
          x[i] = old + scale[i].scale() * rng.normal();
          const double new_ll = subset_loglik(target, x.data(), target.cells_by_coin()[j]);
          const double dpr = -(x[i] * x[i] - old * old) * inv2v;
          if (accept(dpr + new_ll - old_ll, scale[i], adapt)) {
            cur_ll += new_ll - old_ll;
            ssq_a += x[i] * x[i] - old * old;
          } else {
            x[i] = old;
          }
        }
      }

      // scale parameters: the likelihood does not involve them
      auto update_scale = [&](int i, const ComponentPrior& prior, double ssq, int count) {
        if (i < 0) return;
        const double old = x[i];
        const double lp_old = coord_prior_scale(prior, old) + offset_gauss(old, ssq, count);
        x[i] = old + scale[i].scale() * rng.normal();
        const double lp_new = coord_prior_scale(prior, x[i]) + offset_gauss(x[i], ssq, count);
        if (!accept(lp_new - lp_old, scale[i], adapt)) x[i] = old;
      };
      update_scale(i_lsb, target.priors().sigma_beta, ssq_b, K);
      update_scale(i_lsa, target.priors().sigma_alpha, ssq_a, J);

      // translation move: mean up, offsets down; the likelihood is invariant
      auto translate = [&](int i_mean, const ComponentPrior& prior, int off, int count,
                           int i_ls, double& ssq, ScaleAdapter& ad) {
        if (i_mean < 0 || off < 0) return;
        const double eps = ad.scale() * rng.normal();
        const double lp_old = coord_prior_prob(prior, x[i_mean]);
        const double lp_new = coord_prior_prob(prior, x[i_mean] + eps);
        if (lp_new == -kInf) {
          if (adapt) ad.update(0.0);
          return;
        }
        double sum = 0.0;
        for (int k = 0; k < count; ++k) sum += x[off + k];
        const double ssq_new = ssq - 2.0 * eps * sum + count * eps * eps;
        const double dgauss = offset_gauss(x[i_ls], ssq_new, count) -
                              offset_gauss(x[i_ls], ssq, count);
        if (accept(lp_new - lp_old + dgauss, ad, adapt)) {
          x[i_mean] += eps;
          for (int k = 0; k < count; ++k) x[off + k] -= eps;
          ssq = ssq_new;
        }
      };
      translate(i_tb, target.priors().beta_mu, o_gb, K, i_lsb, ssq_b, trans_b);
      translate(i_ta, target.priors().alpha_mu, o_ga, J, i_lsa, ssq_a, trans_a);

      // rescale move: sigma and offsets scale together; the Gaussian term and the
      // log-Jacobian cancel exactly, leaving the sigma prior and the likelihood
      auto rescale = [&](int i_ls, const ComponentPrior& prior, int off, int count,
                         double& ssq, ScaleAdapter& ad) {
        if (i_ls < 0 || off < 0) return;
        // heavy-tailed proposal mixture: the wide component crosses the
        // low-sigma tail in a few jumps instead of a long random walk
        const bool wide = rng.uniform() < 0.25;
        const double eps = (wide ? 8.0 : 1.0) * ad.scale() * rng.normal();
        const double f = std::exp(eps);
        const double dpr = coord_prior_scale(prior, x[i_ls] + eps) -
                           coord_prior_scale(prior, x[i_ls]);
        for (int k = 0; k < count; ++k) x[off + k] *= f;
        const double saved_ls = x[i_ls];
        x[i_ls] += eps;
        const double new_ll = subset_loglik(target, x.data(), all_cells);
        if (accept(dpr + new_ll - cur_ll, ad, adapt && !wide)) {
          cur_ll = new_ll;
          ssq *= f * f;
        } else {
          x[i_ls] = saved_ls;
          const double inv = 1.0 / f;
          for (int k = 0; k < count; ++k) x[off + k] *= inv;
        }
      };
      rescale(i_lsb, target.priors().sigma_beta, o_gb, K, ssq_b, resc_b);
      rescale(i_lsa, target.priors().sigma_alpha, o_ga, J, ssq_a, resc_a);

      // guard against drift in the running sums
      if ((it & 1023) == 1023) {
        cur_ll = subset_loglik(target, x.data(), all_cells);
        if (o_gb >= 0) ssq_b = sumsq_of(o_gb, K);
        if (o_ga >= 0) ssq_a = sumsq_of(o_ga, J);
      }

      if (it >= settings.warmup) {
        const int rec = it - settings.warmup;
        double* dst = out.draws.data.data() +
                      (static_cast<std::size_t>(chain) * settings.iters + rec) * d;
        std::copy(x.begin(), x.end(), dst);
      }
    }
  };

  run_chains(settings.chains, settings.threads, run_one);
  out.diagnostics = diagnose(out.draws);
  out.converged = out.diagnostics.max_rhat < 1.01;
  return out;
}

HierEstimates summarize_hier(const HierTarget& target, const PosteriorDraws& fit,
                             bool simulate_offsets) {
  HierEstimates e;
  const int i_tb = target.i_tb(), i_ta = target.i_ta();
  const int i_lsb = target.i_lsb(), i_lsa = target.i_lsa();
  e.pr_same = summarize_fn(fit.draws, [&](const double* x) {
    return i_tb >= 0 ? inv_logit(x[i_tb]) : 0.5;
  });
  e.pr_heads = summarize_fn(fit.draws, [&](const double* x) {
    return i_ta >= 0 ? inv_logit(x[i_ta]) : 0.5;
  });
  auto prob_sd = [&](int i_mean, int i_ls, int o_off, int count) {
    return summarize_fn(fit.draws, [=](const double* x) {
      const double mean_logit = i_mean >= 0 ? x[i_mean] : 0.0;
      const double p = inv_logit(mean_logit);
      if (i_ls < 0) return 0.0;
      if (!simulate_offsets) return std::exp(x[i_ls]) * p * (1.0 - p);
      double m = 0.0, s2 = 0.0;
      for (int k = 0; k < count; ++k) m += inv_logit(mean_logit + x[o_off + k]);
      m /= count;
      for (int k = 0; k < count; ++k) {
        const double q = inv_logit(mean_logit + x[o_off + k]) - m;
        s2 += q * q;
      }
      return std::sqrt(s2 / std::max(1, count - 1));
    });
  };
  e.sd_people = prob_sd(i_tb, i_lsb, target.o_gb(), target.n_persons());
  e.sd_coins = prob_sd(i_ta, i_lsa, target.o_ga(), target.n_coins());
  return e;
}

// ---- site contrasts ----

std::vector<std::vector<double>> orthonormal_contrasts(int n) {
  if (n < 2) throw std::domain_error("orthonormal_contrasts: n < 2");
  std::vector<std::vector<double>> c(n, std::vector<double>(n - 1, 0.0));
  for (int m = 0; m < n - 1; ++m) {
    const double k = static_cast<double>(m + 1);
    const double norm = std::sqrt(k * (k + 1.0));
    for (int i = 0; i <= m; ++i) c[i][m] = 1.0 / norm;
    c[m + 1][m] = -k / norm;
  }
  return c;
}

SiteContrasts fit_site_contrasts(const FlipDataset& d, const PriorSet& priors,
                                 const McmcSettings& settings, double prior_sd) {
  // person -> site map from the records
  std::map<std::string, std::string> person_site_name;
  for (const auto& r : d.records) person_site_name.emplace(r.person_id, r.site);
  std::set<std::string> site_set;
  for (const auto& [p, s] : person_site_name) site_set.insert(s);
  std::vector<std::string> sites(site_set.begin(), site_set.end());
  if (sites.size() < 2) throw std::domain_error("fit_site_contrasts: need >= 2 sites");

  CellTable cells = CellTable::from(d);
  std::vector<int> person_site(cells.persons.size(), 0);
  for (std::size_t k = 0; k < cells.persons.size(); ++k) {
    const auto& nm = person_site_name.at(cells.persons[k]);
    person_site[k] = static_cast<int>(
        std::lower_bound(sites.begin(), sites.end(), nm) - sites.begin());
  }

  ModelSpec spec;  // full estimation model
  HierTarget target(spec, priors, std::move(cells));
  target.enable_site_contrasts(person_site, static_cast<int>(sites.size()), prior_sd);
  PosteriorDraws fit = sample_posterior(target, settings);

  SiteContrasts out;
  out.sites = sites;
  out.contrast = target.contrast_matrix();
  out.diagnostics = fit.diagnostics;
  const int S = static_cast<int>(sites.size());
  for (int s = 0; s < S; ++s) {
    out.delta_logit.push_back(summarize_fn(fit.draws, [&, s](const double* x) {
      return target.site_delta(x, s);
    }));
    out.delta_prob.push_back(summarize_fn(fit.draws, [&, s](const double* x) {
      const double tb = x[target.i_tb()];
      return inv_logit(tb + target.site_delta(x, s)) - inv_logit(tb);
    }));
  }
  return out;
}

// ---- maximum-likelihood random-intercept fit ----

namespace {

// Minimal Nelder-Mead for the handful of low-dimensional ML fits.
struct NelderMeadResult {
  std::vector<double> x;
  double fmin = 0.0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, double step, double ftol,
                             int max_iter) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step;
  for (std::size_t i = 0; i <= n; ++i) fv[i] = f(simplex[i]);
  NelderMeadResult res;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> ord(n + 1);
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = ord[0], worst = ord[n], second = ord[n - 1];
    if (std::fabs(fv[worst] - fv[best]) <= ftol * (std::fabs(fv[best]) + ftol)) {
      res.x = simplex[best];
      res.fmin = fv[best];
      res.converged = true;
      return res;
    }
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;
    }
    auto blend = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (simplex[worst][j] - centroid[j]);
      return p;
    };
    const auto refl = blend(-1.0);
    const double f_refl = f(refl);
    if (f_refl < fv[best]) {
      const auto expd = blend(-2.0);
      const double f_exp = f(expd);
      if (f_exp < f_refl) {
        simplex[worst] = expd;
        fv[worst] = f_exp;
      } else {
        simplex[worst] = refl;
        fv[worst] = f_refl;
      }
    } else if (f_refl < fv[second]) {
      simplex[worst] = refl;
      fv[worst] = f_refl;
    } else {
      const auto contr = blend(f_refl < fv[worst] ? -0.5 : 0.5);
      const double f_con = f(contr);
      if (f_con < std::min(f_refl, fv[worst])) {
        simplex[worst] = contr;
        fv[worst] = f_con;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < n; ++j)
            simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  res.x = simplex[best];
  res.fmin = fv[best];
  res.converged = false;
  return res;
}

// Gauss-Jordan inverse for the small observed-information matrices.
std::vector<std::vector<double>> invert_small(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-300) throw std::runtime_error("singular information matrix");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double scale = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= scale;
      inv[col][j] /= scale;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= factor * a[col][j];
        inv[r][j] -= factor * inv[col][j];
      }
    }
  }
  return inv;
}

struct PersonStartCounts {
  double n_h = 0.0, same_h = 0.0;  // start = heads
  double n_t = 0.0, same_t = 0.0;  // start = tails
};

}  // namespace

GlmmFit ml_fit_random_intercept(const CellTable& cells, int quad_nodes) {
  const int K = static_cast<int>(cells.persons.size());
  if (K < 2) throw std::domain_error("ml_fit_random_intercept: need >= 2 persons");
  std::vector<PersonStartCounts> pc(K);
  for (const auto& c : cells.cells) {
    auto& t = pc[c.person];
    const double same = cells.same_of(c);
    if (c.sign > 0) {
      t.n_h += c.n;
      t.same_h += same;
    } else {
      t.n_t += c.n;
      t.same_t += same;
    }
  }
  const QuadratureRule gh = gauss_hermite(quad_nodes);
  const double sqrt2 = std::sqrt(2.0);

  // marginal negative log likelihood; intercept b0, start=tails effect b1
  auto nll = [&](double b0, double b1, double tau, bool random_intercept) {
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto& t = pc[k];
      if (!random_intercept) {
        const double mu_h = b0, mu_t = b0 + b1;
        total += t.same_h * mu_h - t.n_h * log1p_exp(mu_h) + t.same_t * mu_t -
                 t.n_t * log1p_exp(mu_t);
        continue;
      }
      // conditional mode of the person intercept, Newton
      double u = 0.0, hess = -1.0;
      for (int it = 0; it < 100; ++it) {
        const double p_h = inv_logit(b0 + u), p_t = inv_logit(b0 + b1 + u);
        const double g = (t.same_h - t.n_h * p_h) + (t.same_t - t.n_t * p_t) - u / (tau * tau);
        hess = -(t.n_h * p_h * (1.0 - p_h) + t.n_t * p_t * (1.0 - p_t)) - 1.0 / (tau * tau);
        const double step = g / hess;
        u -= step;
        if (std::fabs(step) < 1e-13) break;
      }
      const double sd_h = 1.0 / std::sqrt(-hess);
      std::vector<double> terms(gh.nodes.size());
      for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
        const double z = u + sqrt2 * sd_h * gh.nodes[i];
        const double mu_h = b0 + z, mu_t = b0 + b1 + z;
        const double lf = t.same_h * mu_h - t.n_h * log1p_exp(mu_h) + t.same_t * mu_t -
                          t.n_t * log1p_exp(mu_t) - 0.5 * z * z / (tau * tau) -
                          std::log(tau) - 0.5 * kLog2Pi;
        terms[i] = lf + std::log(gh.weights[i]) + gh.nodes[i] * gh.nodes[i];
      }
      total += std::log(sqrt2 * sd_h) + log_sum_exp(terms);
    }
    return -total;
  };

  auto f_alt = [&](const std::vector<double>& v) { return nll(v[0], v[1], std::exp(v[2]), true); };
  auto f_null = [&](const std::vector<double>& v) { return nll(v[0], v[1], 1.0, false); };

  const auto alt = nelder_mead(f_alt, {0.03, 0.0, std::log(0.06)}, 0.02, 1e-12, 4000);
  const auto null = nelder_mead(f_null, {0.03, 0.0}, 0.02, 1e-12, 2000);
  if (!alt.converged || !null.converged)
    throw std::runtime_error("ml_fit_random_intercept: optimizer did not converge");

  GlmmFit fit;
  fit.b_mu = alt.x[0];
  fit.b_start = alt.x[1];
  fit.tau = std::exp(alt.x[2]);
  fit.loglik = -alt.fmin;
  fit.lr_chi2 = 2.0 * (null.fmin - alt.fmin);
  fit.lr_p = chi2_sf(fit.lr_chi2, 1.0);
  // observed information (numeric central differences)
  const double eps = 1e-4;
  std::vector<std::vector<double>> H(3, std::vector<double>(3, 0.0));
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      auto shift = [&](int ii, double di, int jj, double dj) {
        std::vector<double> v = alt.x;
        v[ii] += di;
        v[jj] += dj;
        return f_alt(v);
      };
      H[i][j] = H[j][i] = (shift(i, eps, j, eps) - shift(i, eps, j, -eps) -
                           shift(i, -eps, j, eps) + shift(i, -eps, j, -eps)) /
                          (4.0 * eps * eps);
    }
  const auto cov = invert_small(H);
  fit.se_b_mu = std::sqrt(std::max(0.0, cov[0][0]));
  fit.se_start = std::sqrt(std::max(0.0, cov[1][1]));
  fit.z = fit.se_b_mu > 0.0 ? fit.b_mu / fit.se_b_mu : 0.0;
  fit.p = 2.0 * normal_sf(std::fabs(fit.z));
  fit.p_start = fit.se_start > 0.0 ? 2.0 * normal_sf(std::fabs(fit.b_start / fit.se_start)) : 1.0;
  fit.converged = true;
  return fit;
}

}  // namespace flips
