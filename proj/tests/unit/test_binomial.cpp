#include <cmath>

#include "doctest.h"
#include "flips/binomial_tests.hpp"

using namespace flips;

// Pooled counts of the assembled dataset and its outlier-excluded subset; the
// expected statistics were frozen from an independent high-precision implementation.

TEST_CASE("informed same-side test on the pooled counts") {
  auto r = bf_informed_binomial(178079, 350757);
  CHECK(r.log10_bf10 == doctest::Approx(17.24643712).epsilon(5e-9));
  CHECK(r.posterior_mean == doctest::Approx(0.5077628430355635).epsilon(1e-10));
  CHECK(r.ci_low == doctest::Approx(0.5061314134529274).epsilon(1e-9));
  CHECK(r.ci_high == doctest::Approx(0.5093941912881991).epsilon(1e-9));
  CHECK(r.log_bf10 == doctest::Approx(17.24643712 * std::log(10.0)).epsilon(1e-8));
}

TEST_CASE("informed same-side test on the outlier-excluded counts") {
  auto r = bf_informed_binomial(171517, 338985);
  CHECK(r.log10_bf10 == doctest::Approx(9.603806168).epsilon(5e-9));
  CHECK(r.posterior_mean == doctest::Approx(0.5060876538280881).epsilon(1e-8));
  CHECK(r.ci_low == doctest::Approx(0.5044288684672522).epsilon(1e-9));
  CHECK(r.ci_high == doctest::Approx(0.5077463738389771).epsilon(1e-9));
}

TEST_CASE("symmetric heads-tails test on the pooled counts") {
  auto full = bf_symmetric_binomial(175421, 350757);
  CHECK(full.log10_bf10 == doctest::Approx(std::log10(0.168163)).epsilon(2e-6));
  CHECK(full.posterior_mean == doctest::Approx(0.5001178078318647).epsilon(1e-10));
  CHECK(full.ci_low == doctest::Approx(0.49848622168433104).epsilon(1e-9));
  CHECK(full.ci_high == doctest::Approx(0.5017493927421992).epsilon(1e-9));

  auto excl = bf_symmetric_binomial(169635, 338985);
  CHECK(excl.log10_bf10 == doctest::Approx(std::log10(0.190163)).epsilon(2e-6));
  CHECK(excl.posterior_mean == doctest::Approx(0.5004083270054587).epsilon(1e-10));
  CHECK(excl.ci_low == doctest::Approx(0.4987494496972248).epsilon(1e-9));
  CHECK(excl.ci_high == doctest::Approx(0.5020671998808528).epsilon(1e-9));
}

TEST_CASE("small-count spot checks") {
  auto informed = bf_informed_binomial(5, 10);
  CHECK(informed.bf10 == doctest::Approx(0.99744942).epsilon(1e-7));
  auto sym_small = bf_symmetric_binomial(1, 2);
  CHECK(sym_small.bf10 == doctest::Approx(0.99990001).epsilon(1e-8));
  auto sym_mid = bf_symmetric_binomial(30, 60);
  CHECK(sym_mid.bf10 == doctest::Approx(0.9970132842).epsilon(1e-9));
}

TEST_CASE("informed prior responds to its truncation window") {
  // balanced data: an alternative confined to [0.5, 1] is penalized
  auto r = bf_informed_binomial(500, 1000);
  CHECK(r.log_bf10 < 0.0);
  // heavily positive data: evidence accumulates
  auto r2 = bf_informed_binomial(560, 1000);
  CHECK(r2.log_bf10 > 0.0);
  // posterior summaries respect the truncation
  CHECK(r.posterior_mean >= 0.5);
  CHECK(r.ci_low >= 0.5);
  CHECK(r2.ci_high <= 1.0);
}

TEST_CASE("uniform posterior intervals") {
  auto p = posterior_interval_uniform(8, 12);
  CHECK(p.mean == doctest::Approx(9.0 / 14.0).epsilon(1e-12));
  CHECK(p.ci_low == doctest::Approx(0.3857383382492956).epsilon(1e-8));
  CHECK(p.ci_high == doctest::Approx(0.8614206611098394).epsilon(1e-8));
}

TEST_CASE("exact two-sided binomial p-values, minimum-likelihood convention") {
  CHECK(exact_binomial_p(7, 10) == doctest::Approx(0.34375).epsilon(1e-12));
  CHECK(exact_binomial_p(5, 10) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact_binomial_p(175421, 350757) ==
        doctest::Approx(0.8872122468905311).epsilon(1e-9));
  CHECK(exact_binomial_p(169635, 338985) ==
        doctest::Approx(0.6257024738015021).epsilon(1e-9));
  // the same-side counts are overwhelming evidence on both datasets
  CHECK(exact_binomial_p(178079, 350757) < 1e-18);
  CHECK(exact_binomial_p(178079, 350757) > 0.0);
  CHECK(exact_binomial_p(171517, 338985) < 1e-10);
}

TEST_CASE("argument validation") {
  CHECK_THROWS(bf_informed_binomial(-1, 10));
  CHECK_THROWS(bf_informed_binomial(11, 10));
  CHECK_THROWS(bf_symmetric_binomial(5, 0));
  CHECK_THROWS(exact_binomial_p(3, 2));
}
