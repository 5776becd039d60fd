#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "flips/learning_model.hpp"
#include "flips/numerics.hpp"
#include "flips/simulator.hpp"

using namespace flips;

TEST_CASE("learning predictor pin") {
  // logit theta = 0, logit lambda at 0.6, rho = -1, t = 2: 0 + logit(0.6)/2
  CHECK(learning_mu_same(0.0, logit(0.6), -1.0, 2.0) ==
        doctest::Approx(0.2027325540540822).epsilon(1e-13));
  // t = 1 leaves the sum untouched regardless of rho
  CHECK(learning_mu_same(0.3, 0.4, -17.0, 1.0) == doctest::Approx(0.7).epsilon(1e-13));
  // rho = 0 keeps the full decaying component at any t
  CHECK(learning_mu_same(0.1, 0.5, 0.0, 0.37) == doctest::Approx(0.6).epsilon(1e-13));
}

TEST_CASE("batching splits runs into consecutive windows with mean-index times") {
  GenerativeConfig g;
  g.n_persons = 1;
  g.n_coins = 1;
  g.flips_per_person = 230;
  g.seed = 3;
  auto sim = simulate(g);
  auto data = make_batches(sim.data, 100);
  REQUIRE(data.persons.size() == 1);
  REQUIRE(data.coins.size() == 1);

  std::set<double> ts;
  double n_total = 0.0, heads_total = 0.0;
  for (const auto& c : data.cells) {
    ts.insert(c.t);
    n_total += c.n;
    heads_total += c.heads;
    CHECK(c.log_t == doctest::Approx(std::log(c.t)).epsilon(1e-14));
    CHECK((c.sign == 1 || c.sign == -1));
  }
  // batch mean flip indices: 49.5, 149.5, 214.5 (thousandths)
  REQUIRE(ts.size() == 3);
  auto it = ts.begin();
  CHECK(*it++ == doctest::Approx(0.0495).epsilon(1e-12));
  CHECK(*it++ == doctest::Approx(0.1495).epsilon(1e-12));
  CHECK(*it == doctest::Approx(0.2145).epsilon(1e-12));
  CHECK(n_total == doctest::Approx(230.0));
  CHECK(heads_total == doctest::Approx(static_cast<double>(count_heads(sim.data))));
  CHECK(data.total_flips() == doctest::Approx(230.0));

  CHECK_THROWS_AS(make_batches(sim.data, 0), std::domain_error);
}

TEST_CASE("target dimensions and non-centered likelihood invariance") {
  GenerativeConfig g;
  g.n_persons = 4;
  g.n_coins = 2;
  g.flips_per_person = 300;
  g.seed = 7;
  auto sim = simulate(g);
  auto data = make_batches(sim.data, 100);
  LearnPriors priors;
  LearnTarget target(data, priors);
  const int J = target.n_coins(), K = target.n_persons();
  CHECK(J == 2);
  CHECK(K == 4);
  CHECK(target.dim() == 8 + J + 3 * K);

  auto x = target.initial_point(0, 99);
  REQUIRE(static_cast<int>(x.size()) == target.dim());
  const double base = target.log_likelihood_at(x.data());
  REQUIRE(std::isfinite(base));

  // scaling sigma_theta by e^c while shrinking its unit offsets by e^-c keeps
  // every realized offset, hence the likelihood, exactly fixed
  auto y = x;
  const double c = 0.7;
  y[target.i_lst()] += c;
  for (int k = 0; k < K; ++k) y[target.o_zt() + k] *= std::exp(-c);
  CHECK(target.log_likelihood_at(y.data()) == doctest::Approx(base).epsilon(1e-12));

  // the posterior density itself is NOT invariant (prior and Jacobian shift)
  CHECK(target.log_density(x.data()) != doctest::Approx(target.log_density(y.data())));
}

TEST_CASE("learning fit recovers a simulated decaying effect") {
  GenerativeConfig g;
  g.n_persons = 8;
  g.n_coins = 4;
  g.flips_per_person = 1500;
  g.theta = 0.5;
  g.lambda = 0.58;
  g.rho = -1.0;
  g.seed = 13;
  auto sim = simulate(g);
  auto data = make_batches(sim.data, 100);
  LearnPriors priors;
  McmcSettings s;
  s.chains = 4;
  s.warmup = 2500;
  s.iters = 2500;
  s.seed = 17;
  auto fit = fit_learning(data, priors, s);
  CHECK(fit.converged);
  CHECK(fit.toss_order.mean > 0.52);
  CHECK(fit.toss_order.mean < 0.64);
  CHECK(fit.rho.mean > -2.5);
  CHECK(fit.rho.mean < -0.3);
  CHECK(fit.baseline.ci_low < 0.52);

  // population curve declines toward the baseline as t grows; the power law
  // saturates near 1 at small t (true value at t=0.05 is ~0.998)
  LearnTarget target(data, priors);
  auto curve = learning_curve(target, fit, {0.05, 0.2, 0.6, 1.0, 1.5});
  REQUIRE(curve.size() == 5);
  for (std::size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i - 1].mean > curve[i].mean);
  for (const auto& e : curve) {
    CHECK(e.ci_low <= e.mean);
    CHECK(e.ci_high >= e.mean);
  }
  CHECK(curve[0].mean > 0.90);           // true 0.998
  CHECK(curve[3].mean > 0.50);           // true 0.58 at t = 1
  CHECK(curve[3].mean < 0.70);
  CHECK(curve[4].mean > 0.48);           // true 0.554 at t = 1.5
  CHECK(curve[4].mean < 0.68);
  CHECK_THROWS_AS(learning_curve(target, fit, {0.0}), std::domain_error);
  CHECK_THROWS_AS(learning_curve(target, fit, {-1.0}), std::domain_error);
}

TEST_CASE("learning fit is deterministic") {
  GenerativeConfig g;
  g.n_persons = 3;
  g.n_coins = 2;
  g.flips_per_person = 200;
  g.seed = 19;
  auto sim = simulate(g);
  auto data = make_batches(sim.data, 100);
  LearnPriors priors;
  McmcSettings s;
  s.chains = 2;
  s.warmup = 100;
  s.iters = 100;
  s.seed = 23;
  auto a = fit_learning(data, priors, s);
  auto b = fit_learning(data, priors, s);
  CHECK(a.fit.draws.data == b.fit.draws.data);
  s.threads = 2;
  auto c = fit_learning(data, priors, s);
  CHECK(a.fit.draws.data == c.fit.draws.data);
}
