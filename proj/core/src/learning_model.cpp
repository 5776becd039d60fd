#include "flips/learning_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "flips/numerics.hpp"
#include "flips/rng.hpp"
#include "prior_density.hpp"

namespace flips {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
using detail::kLog2Pi;
using detail::coord_prior_prob;
using detail::coord_prior_scale;

// Lower Cholesky factor of a d x d covariance held row-major; false when the
// matrix is not positive definite.
bool chol_lower(int d, const std::vector<double>& a, std::vector<double>& L) {
  L.assign(a.size(), 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * d + j];
      for (int k = 0; k < j; ++k) s -= L[i * d + k] * L[j * d + k];
      if (i == j) {
        if (!(s > 0.0)) return false;
        L[i * d + i] = std::sqrt(s);
      } else {
        L[i * d + j] = s / L[j * d + j];
      }
    }
  }
  return true;
}

// Adapted multivariate random-walk block over a fixed set of coordinates:
// running covariance fed during warmup (Welford), Cholesky-shaped proposals
// once enough draws have accumulated, Robbins-Monro step scale.
struct JointBlock {
  std::vector<int> idx;
  long n = 0;
  std::vector<double> mean, m2;  // m2 row-major d x d
  ScaleAdapter ad;
  std::vector<double> cov, chol, step;

  explicit JointBlock(std::vector<int> indices)
      : idx(std::move(indices)),
        mean(idx.size(), 0.0),
        m2(idx.size() * idx.size(), 0.0),
        ad(2.38 / std::sqrt(static_cast<double>(idx.size())), 0.28) {}

  void accumulate(const std::vector<double>& x) {
    const int d = static_cast<int>(idx.size());
    ++n;
    std::vector<double> d0(d);
    for (int i = 0; i < d; ++i) d0[i] = x[idx[i]] - mean[i];
    for (int i = 0; i < d; ++i) mean[i] += d0[i] / static_cast<double>(n);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m2[i * d + j] += d0[i] * (x[idx[j]] - mean[j]);
  }

  // fills `step` with a proposal displacement; false until warmed up
  bool propose(Rng& rng) {
    const int d = static_cast<int>(idx.size());
    if (n < 200) return false;
    cov.assign(m2.begin(), m2.end());
    for (double& v : cov) v /= static_cast<double>(n - 1);
    double tr = 0.0;
    for (int i = 0; i < d; ++i) tr += cov[i * d + i];
    for (int i = 0; i < d; ++i) cov[i * d + i] += 1e-10 * std::max(1.0, tr / d);
    std::vector<double> z(d);
    for (auto& v : z) v = rng.normal();
    if (!chol_lower(d, cov, chol)) return false;
    const double s = ad.scale();
    step.assign(d, 0.0);
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j <= i; ++j) acc += chol[i * d + j] * z[j];
      step[i] = s * acc;
    }
    return true;
  }
};
}  // namespace

double LearnData::total_flips() const {
  double n = 0.0;
  for (const auto& c : cells) n += c.n;
  return n;
}

double learning_mu_same(double logit_theta, double logit_lambda, double rho, double t) {
  return logit_theta + logit_lambda * std::exp(rho * std::log(t));
}

LearnData make_batches(const FlipDataset& d, int batch_size) {
  if (batch_size < 1) throw std::domain_error("make_batches: batch_size must be positive");
  LearnData out;
  out.persons = d.persons;
  out.coins = d.coins;
  // encounter-ordered runs per (person, coin)
  std::map<std::pair<std::string, std::string>, std::vector<const FlipRecord*>> runs;
  for (const auto& r : d.records) runs[{r.person_id, r.coin_id}].push_back(&r);
  auto person_index = [&](const std::string& id) {
    return static_cast<int>(std::lower_bound(out.persons.begin(), out.persons.end(), id) -
                            out.persons.begin());
  };
  auto coin_index = [&](const std::string& id) {
    return static_cast<int>(std::lower_bound(out.coins.begin(), out.coins.end(), id) -
                            out.coins.begin());
  };
  for (auto& [key, recs] : runs) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const FlipRecord* a, const FlipRecord* b) {
                       return a->flip_index < b->flip_index;
                     });
    const int k = person_index(key.first), j = coin_index(key.second);
    for (std::size_t pos = 0; pos < recs.size(); pos += batch_size) {
      const std::size_t end = std::min(recs.size(), pos + batch_size);
      double sum_idx = 0.0;
      double n_h = 0.0, heads_h = 0.0, n_t = 0.0, heads_t = 0.0;
      for (std::size_t i = pos; i < end; ++i) {
        const FlipRecord& r = *recs[i];
        sum_idx += static_cast<double>(r.flip_index);
        const bool heads = r.landed == Side::heads;
        if (r.start == Side::heads) {
          n_h += 1.0;
          heads_h += heads ? 1.0 : 0.0;
        } else {
          n_t += 1.0;
          heads_t += heads ? 1.0 : 0.0;
        }
      }
      const double t =
          std::max(1e-6, sum_idx / static_cast<double>(end - pos) / 1000.0);
      LearnCell cell;
      cell.person = k;
      cell.coin = j;
      cell.t = t;
      cell.log_t = std::log(t);
      if (n_h > 0.0) {
        cell.sign = 1;
        cell.n = n_h;
        cell.heads = heads_h;
        out.cells.push_back(cell);
      }
      if (n_t > 0.0) {
        cell.sign = -1;
        cell.n = n_t;
        cell.heads = heads_t;
        out.cells.push_back(cell);
      }
    }
  }
  return out;
}

LearnTarget::LearnTarget(LearnData data, LearnPriors priors)
    : data_(std::move(data)), priors_(std::move(priors)) {
  const int K = n_persons(), J = n_coins();
  names_ = {"logit_alpha_mu", "logit_theta_mu", "logit_lambda_mu", "rho_mu",
            "log_sigma_alpha", "log_sigma_theta", "log_sigma_lambda", "log_sigma_rho"};
  for (int j = 0; j < J; ++j) names_.push_back("z_alpha." + data_.coins[j]);
  for (int k = 0; k < K; ++k) names_.push_back("z_theta." + data_.persons[k]);
  for (int k = 0; k < K; ++k) names_.push_back("z_lambda." + data_.persons[k]);
  for (int k = 0; k < K; ++k) names_.push_back("z_rho." + data_.persons[k]);
  by_person_.assign(K, {});
  by_coin_.assign(J, {});
  for (std::size_t i = 0; i < data_.cells.size(); ++i) {
    by_person_[data_.cells[i].person].push_back(static_cast<int>(i));
    by_coin_[data_.cells[i].coin].push_back(static_cast<int>(i));
  }
}

double LearnTarget::cell_mu(const double* x, int cell_index) const {
  const auto& c = data_.cells[cell_index];
  const double a = x[i_ta()] + std::exp(x[i_lsa()]) * x[o_za() + c.coin];
  const double th = x[i_tt()] + std::exp(x[i_lst()]) * x[o_zt() + c.person];
  const double la = x[i_tl()] + std::exp(x[i_lsl()]) * x[o_zl() + c.person];
  const double rho = x[i_rho()] + std::exp(x[i_lsr()]) * x[o_zr() + c.person];
  return a + c.sign * (th + la * std::exp(rho * c.log_t));
}

namespace {

double learn_cell_ll(const LearnCell& c, double mu) {
  double ll = 0.0;
  if (c.heads > 0.0) ll += c.heads * log_sigmoid(mu);
  if (c.n - c.heads > 0.0) ll += (c.n - c.heads) * log_sigmoid(-mu);
  return ll;
}

double learn_subset_ll(const LearnTarget& t, const double* x, const std::vector<int>& subset) {
  double ll = 0.0;
  for (int i : subset) ll += learn_cell_ll(t.data().cells[i], t.cell_mu(x, i));
  return ll;
}

}  // namespace

double LearnTarget::log_likelihood_at(const double* x) const {
  double ll = 0.0;
  for (std::size_t i = 0; i < data_.cells.size(); ++i)
    ll += learn_cell_ll(data_.cells[i], cell_mu(x, static_cast<int>(i)));
  return ll;
}

double LearnTarget::log_density(const double* x) const {
  double lp = coord_prior_prob(priors_.alpha_mu, x[i_ta()]) +
              coord_prior_prob(priors_.theta_mu, x[i_tt()]) +
              coord_prior_prob(priors_.lambda_mu, x[i_tl()]);
  const double r = x[i_rho()];
  lp += -0.5 * kLog2Pi - std::log(priors_.rho_mu_sd) -
        0.5 * r * r / (priors_.rho_mu_sd * priors_.rho_mu_sd);
  lp += coord_prior_scale(priors_.sigma_alpha, x[i_lsa()]) +
        coord_prior_scale(priors_.sigma_theta, x[i_lst()]) +
        coord_prior_scale(priors_.sigma_lambda, x[i_lsl()]) +
        coord_prior_scale(priors_.sigma_rho, x[i_lsr()]);
  const int d = dim();
  for (int i = o_za(); i < d; ++i) lp += -0.5 * kLog2Pi - 0.5 * x[i] * x[i];
  if (!std::isfinite(lp)) return -kInf;
  const double ll = log_likelihood_at(x);
  return std::isfinite(ll) ? lp + ll : -kInf;
}

std::vector<double> LearnTarget::initial_point(unsigned chain, std::uint64_t seed) const {
  double n = 0.0, same = 0.0, heads = 0.0;
  for (const auto& c : data_.cells) {
    n += c.n;
    heads += c.heads;
    same += c.sign > 0 ? c.heads : c.n - c.heads;
  }
  std::vector<double> x(dim(), 0.0);
  Rng rng(seed ^ 0x5EEDFACE5EEDFACEull, chain);
  x[i_ta()] = logit((heads + 1.0) / (n + 2.0)) + 0.01 * rng.normal();
  x[i_tt()] = logit((same + 1.0) / (n + 2.0)) + 0.01 * rng.normal();
  x[i_tl()] = 0.08 + 0.05 * std::fabs(rng.normal());
  x[i_rho()] = -1.0 + 0.3 * rng.normal();
  x[i_lsa()] = std::log(0.02) + 0.1 * rng.normal();
  x[i_lst()] = std::log(0.02) + 0.1 * rng.normal();
  x[i_lsl()] = std::log(0.02) + 0.1 * rng.normal();
  x[i_lsr()] = std::log(0.3) + 0.1 * rng.normal();
  for (int i = o_za(); i < dim(); ++i) x[i] = 0.1 * rng.normal();
  return x;
}

LearningFit fit_learning(const LearnData& data, const LearnPriors& priors,
                         const McmcSettings& settings) {
  if (settings.chains < 1 || settings.warmup < 0 || settings.iters < 1)
    throw std::domain_error("fit_learning: bad settings");
  LearnTarget target(data, priors);
  const int d = target.dim();
  const int K = target.n_persons(), J = target.n_coins();
  const double n_total = data.total_flips();
  std::vector<int> all_cells(data.cells.size());
  std::iota(all_cells.begin(), all_cells.end(), 0);

  LearningFit out;
  out.fit.settings = settings;
  out.fit.draws.names = target.names();
  out.fit.draws.chains = settings.chains;
  out.fit.draws.iters = settings.iters;
  out.fit.draws.data.assign(
      static_cast<std::size_t>(settings.chains) * settings.iters * d, 0.0);

  auto run_one = [&](int chain) {
    Rng rng(settings.seed, static_cast<std::uint64_t>(chain));
    std::vector<double> x = target.initial_point(chain, settings.seed);

    std::vector<ScaleAdapter> scale;
    scale.reserve(d);
    const double g = 2.0 / std::sqrt(0.25 * n_total + 10.0);
    for (int i = 0; i < d; ++i) scale.emplace_back(1.0, 0.44);
    scale[target.i_ta()] = ScaleAdapter(g, 0.44);
    scale[target.i_tt()] = ScaleAdapter(g, 0.44);
    scale[target.i_tl()] = ScaleAdapter(10.0 * g, 0.44);
    scale[target.i_rho()] = ScaleAdapter(0.3, 0.44);
    for (int i = target.i_lsa(); i <= target.i_lsr(); ++i) scale[i] = ScaleAdapter(0.25, 0.44);
    std::vector<ScaleAdapter> trans(4, ScaleAdapter(0.1, 0.44));
    std::vector<ScaleAdapter> resc(4, ScaleAdapter(0.25, 0.44));

    // adapted joint proposals, fed by warmup draws past the initial
    // transient: one over the whole population block, one dedicated to the
    // tightly coupled mean triple so sigma-tail rejections cannot starve it
    const int cov_start = std::min(500, settings.warmup / 5);
    JointBlock joint_all({target.i_ta(), target.i_tt(), target.i_tl(), target.i_rho(),
                          target.i_lsa(), target.i_lst(), target.i_lsl(), target.i_lsr()});
    JointBlock joint_means({target.i_tt(), target.i_tl(), target.i_rho()});

    double cur_ll = target.log_likelihood_at(x.data());
    if (!std::isfinite(cur_ll)) throw std::runtime_error("fit_learning: invalid initial point");

    auto accept = [&](double delta, ScaleAdapter& ad, bool adapt) {
      const double acc = delta >= 0.0 ? 1.0 : std::exp(delta);
      const bool ok = std::isfinite(delta) && rng.uniform() < acc;
      if (adapt) ad.update(std::isfinite(delta) ? acc : 0.0);
      return ok;
    };
    auto prior_at = [&](int i, double v) {
      if (i == target.i_ta()) return coord_prior_prob(priors.alpha_mu, v);
      if (i == target.i_tt()) return coord_prior_prob(priors.theta_mu, v);
      if (i == target.i_tl()) return coord_prior_prob(priors.lambda_mu, v);
      if (i == target.i_rho())
        return -0.5 * v * v / (priors.rho_mu_sd * priors.rho_mu_sd);
      if (i == target.i_lsa()) return coord_prior_scale(priors.sigma_alpha, v);
      if (i == target.i_lst()) return coord_prior_scale(priors.sigma_theta, v);
      if (i == target.i_lsl()) return coord_prior_scale(priors.sigma_lambda, v);
      if (i == target.i_lsr()) return coord_prior_scale(priors.sigma_rho, v);
      return -0.5 * v * v;  // unit offset
    };

    const int total_iters = settings.warmup + settings.iters;
    for (int it = 0; it < total_iters; ++it) {
      const bool adapt = it < settings.warmup;

      // population coordinates and scales: every cell depends on them; the
      // log-scale coordinates get a heavy-tailed proposal mixture so deep
      // low-sigma excursions end in a few jumps instead of a long walk
      for (int i = 0; i < 8; ++i) {
        const bool wide = i >= target.i_lsa() && rng.uniform() < 0.25;
        const double old = x[i];
        x[i] = old + (wide ? 8.0 : 1.0) * scale[i].scale() * rng.normal();
        const double dpr = prior_at(i, x[i]) - prior_at(i, old);
        if (dpr == -kInf) {
          x[i] = old;
          if (adapt && !wide) scale[i].update(0.0);
          continue;
        }
        const double new_ll = learn_subset_ll(target, x.data(), all_cells);
        if (accept(dpr + new_ll - cur_ll, scale[i], adapt && !wide)) {
          cur_ll = new_ll;
        } else {
          x[i] = old;
        }
      }

      // joint moves along the running covariance: the likelihood ties the
      // population means and scales into ridges (theta, lambda and rho
      // especially) that coordinate-wise proposals cross slowly
      auto joint_move = [&](JointBlock& jb) {
        if (!jb.propose(rng)) return;
        const int bd = static_cast<int>(jb.idx.size());
        std::vector<double> old(bd);
        double dpr = 0.0;
        for (int i = 0; i < bd; ++i) {
          old[i] = x[jb.idx[i]];
          x[jb.idx[i]] = old[i] + jb.step[i];
          dpr += prior_at(jb.idx[i], x[jb.idx[i]]) - prior_at(jb.idx[i], old[i]);
        }
        const double new_ll = learn_subset_ll(target, x.data(), all_cells);
        if (accept(dpr + new_ll - cur_ll, jb.ad, adapt)) {
          cur_ll = new_ll;
        } else {
          for (int i = 0; i < bd; ++i) x[jb.idx[i]] = old[i];
        }
      };
      joint_move(joint_all);
      joint_move(joint_means);
      joint_move(joint_means);

      // unit offsets: likelihood restricted to the unit's cells
      auto update_block = [&](int off, int count, const std::vector<std::vector<int>>& groups) {
        for (int u = 0; u < count; ++u) {
          const int i = off + u;
          const double old = x[i];
          const double old_ll = learn_subset_ll(target, x.data(), groups[u]);
          x[i] = old + scale[i].scale() * rng.normal();
          const double new_ll = learn_subset_ll(target, x.data(), groups[u]);
          const double dpr = -0.5 * (x[i] * x[i] - old * old);
          if (accept(dpr + new_ll - old_ll, scale[i], adapt)) {
            cur_ll += new_ll - old_ll;
          } else {
            x[i] = old;
          }
        }
      };
      update_block(target.o_za(), J, target.cells_by_coin());
      update_block(target.o_zt(), K, target.cells_by_person());
      update_block(target.o_zl(), K, target.cells_by_person());
      update_block(target.o_zr(), K, target.cells_by_person());

      // translation: mean up, standardized offsets down by eps/sigma (likelihood fixed)
      auto translate = [&](int i_mean, int i_ls, int off, int count, ScaleAdapter& ad) {
        const double eps = ad.scale() * rng.normal();
        const double shift = eps / std::exp(x[i_ls]);
        const double dpr_mean = prior_at(i_mean, x[i_mean] + eps) - prior_at(i_mean, x[i_mean]);
        if (dpr_mean == -kInf) {
          if (adapt) ad.update(0.0);
          return;
        }
        double dz = 0.0;
        for (int u = 0; u < count; ++u) {
          const double z = x[off + u];
          dz += -0.5 * ((z - shift) * (z - shift) - z * z);
        }
        if (accept(dpr_mean + dz, ad, adapt)) {
          x[i_mean] += eps;
          for (int u = 0; u < count; ++u) x[off + u] -= shift;
        }
      };
      translate(target.i_ta(), target.i_lsa(), target.o_za(), J, trans[0]);
      translate(target.i_tt(), target.i_lst(), target.o_zt(), K, trans[1]);
      translate(target.i_tl(), target.i_lsl(), target.o_zl(), K, trans[2]);
      translate(target.i_rho(), target.i_lsr(), target.o_zr(), K, trans[3]);

      // rescale: sigma up, offsets down; likelihood fixed, Jacobian -count*eps
      auto rescale = [&](int i_ls, int off, int count, ScaleAdapter& ad) {
        // heavy-tailed mixture so deep low-sigma excursions end in a few jumps
        const bool wide = rng.uniform() < 0.25;
        const double eps = (wide ? 8.0 : 1.0) * ad.scale() * rng.normal();
        const double f = std::exp(-eps);
        const double dpr = prior_at(i_ls, x[i_ls] + eps) - prior_at(i_ls, x[i_ls]);
        double dz = 0.0;
        for (int u = 0; u < count; ++u) {
          const double z = x[off + u];
          dz += -0.5 * z * z * (f * f - 1.0);
        }
        if (accept(dpr + dz - count * eps, ad, adapt && !wide)) {
          x[i_ls] += eps;
          for (int u = 0; u < count; ++u) x[off + u] *= f;
        }
      };
      rescale(target.i_lsa(), target.o_za(), J, resc[0]);
      rescale(target.i_lst(), target.o_zt(), K, resc[1]);
      rescale(target.i_lsl(), target.o_zl(), K, resc[2]);
      rescale(target.i_lsr(), target.o_zr(), K, resc[3]);

      // prior swap: independence proposal of one scale from its own prior;
      // prior and proposal densities cancel so the likelihood alone decides,
      // letting the chain teleport across the deep small-sigma tail that
      // random-walk steps traverse slowly
      auto prior_swap = [&](int i_ls, const ComponentPrior& pr) {
        if (pr.family != ComponentPrior::Family::half_normal) return;
        const double old = x[i_ls];
        x[i_ls] = std::max(-60.0, std::log(std::fabs(pr.p1 * rng.normal())));
        const double new_ll = learn_subset_ll(target, x.data(), all_cells);
        const double delta = new_ll - cur_ll;
        if (std::isfinite(delta) && (delta >= 0.0 || rng.uniform() < std::exp(delta))) {
          cur_ll = new_ll;
        } else {
          x[i_ls] = old;
        }
      };
      prior_swap(target.i_lsa(), priors.sigma_alpha);
      prior_swap(target.i_lst(), priors.sigma_theta);
      prior_swap(target.i_lsl(), priors.sigma_lambda);
      prior_swap(target.i_lsr(), priors.sigma_rho);

      if ((it & 511) == 511) cur_ll = target.log_likelihood_at(x.data());

      if (adapt && it >= cov_start) {
        joint_all.accumulate(x);
        joint_means.accumulate(x);
      }

      if (it >= settings.warmup) {
        const int rec = it - settings.warmup;
        double* dst = out.fit.draws.data.data() +
                      (static_cast<std::size_t>(chain) * settings.iters + rec) * d;
        std::copy(x.begin(), x.end(), dst);
      }
    }
  };

  run_chains(settings.chains, settings.threads, run_one);
  out.fit.diagnostics = diagnose(out.fit.draws);
  out.fit.converged = out.fit.diagnostics.max_rhat < 1.01;
  out.converged = out.fit.converged;

  const int itt = target.i_tt(), itl = target.i_tl(), irho = target.i_rho();
  out.baseline = summarize_fn(out.fit.draws,
                              [&](const double* x) { return inv_logit(x[itt]); });
  out.toss_order = summarize_fn(out.fit.draws,
                                [&](const double* x) { return inv_logit(x[itl]); });
  out.initial = summarize_fn(out.fit.draws,
                             [&](const double* x) { return inv_logit(x[itt] + x[itl]); });
  out.rho = summarize_fn(out.fit.draws, [&](const double* x) { return x[irho]; });
  return out;
}

std::vector<Estimate> learning_curve(const LearnTarget& target, const LearningFit& fit,
                                     const std::vector<double>& ts) {
  std::vector<Estimate> out;
  out.reserve(ts.size());
  const int itt = target.i_tt(), itl = target.i_tl(), irho = target.i_rho();
  for (double t : ts) {
    if (!(t > 0.0)) throw std::domain_error("learning_curve: t must be positive");
    out.push_back(summarize_fn(fit.fit.draws, [&](const double* x) {
      return inv_logit(learning_mu_same(x[itt], x[itl], x[irho], t));
    }));
  }
  return out;
}

}  // namespace flips
