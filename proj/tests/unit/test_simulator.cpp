#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "flips/flip_data.hpp"
#include "flips/numerics.hpp"
#include "flips/simulator.hpp"

using namespace flips;

namespace {

double same_rate(const FlipDataset& d) {
  return static_cast<double>(count_same(d)) / static_cast<double>(d.records.size());
}

double heads_rate(const FlipDataset& d) {
  return static_cast<double>(count_heads(d)) / static_cast<double>(d.records.size());
}

}  // namespace

TEST_CASE("simulate is deterministic in the seed") {
  GenerativeConfig g;
  g.n_persons = 4;
  g.n_coins = 3;
  g.flips_per_person = 250;
  g.seed = 99;
  auto a = simulate(g);
  auto b = simulate(g);
  REQUIRE(a.data.records.size() == b.data.records.size());
  for (std::size_t i = 0; i < a.data.records.size(); ++i) {
    CHECK(a.data.records[i].person_id == b.data.records[i].person_id);
    CHECK(a.data.records[i].start == b.data.records[i].start);
    CHECK(a.data.records[i].landed == b.data.records[i].landed);
  }
  std::ostringstream ca, cb;
  write_csv(a.data, ca);
  write_csv(b.data, cb);
  CHECK(ca.str() == cb.str());

  g.seed = 100;
  auto c = simulate(g);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.data.records.size(); ++i)
    any_diff = any_diff || a.data.records[i].landed != c.data.records[i].landed;
  CHECK(any_diff);
}

TEST_CASE("every flip starts on the side the previous flip landed") {
  GenerativeConfig g;
  g.n_persons = 3;
  g.n_coins = 2;
  g.flips_per_person = 330;
  g.sequence_length = 100;
  g.theta = 0.55;
  g.seed = 5;
  auto sim = simulate(g);
  const auto& rs = sim.data.records;
  int boundaries = 0;
  for (std::size_t i = 1; i < rs.size(); ++i) {
    if (rs[i].person_id != rs[i - 1].person_id) continue;
    CHECK(rs[i].flip_index == rs[i - 1].flip_index + 1);
    if (rs[i].sequence_id == rs[i - 1].sequence_id) {
      REQUIRE(rs[i].start == rs[i - 1].landed);
    } else {
      ++boundaries;
      CHECK(rs[i].flip_index % g.sequence_length == 0);
    }
  }
  CHECK(boundaries == 3 * 3);  // 330 flips -> sequences of 100,100,100,30

  // round trip through strict ingestion: the protocol validator accepts it
  std::ostringstream csv;
  write_csv(sim.data, csv);
  std::istringstream in(csv.str());
  auto back = ingest_csv(in, true);
  CHECK(back.records.size() == rs.size());
  CHECK(back.violations.empty());
}

TEST_CASE("ids are padded and coins are assigned round-robin") {
  GenerativeConfig g;
  g.n_persons = 5;
  g.n_coins = 3;
  g.flips_per_person = 10;
  g.sequence_length = 5;
  auto sim = simulate(g);
  CHECK(sim.data.persons ==
        std::vector<std::string>{"P001", "P002", "P003", "P004", "P005"});
  CHECK(sim.data.coins == std::vector<std::string>{"C001", "C002", "C003"});
  // person k uses coin k mod n_coins
  CHECK(sim.data.records[0].coin_id == "C001");
  CHECK(sim.data.records[10].coin_id == "C002");
  CHECK(sim.data.records[20].coin_id == "C003");
  CHECK(sim.data.records[30].coin_id == "C001");
  CHECK(sim.data.records[40].coin_id == "C002");
  CHECK(sim.data.records[0].sequence_id == "P001-s1");
  CHECK(sim.data.records[5].sequence_id == "P001-s2");
  CHECK(sim.data.records[0].site == "sim");

  CHECK(sim.truth.logit_alpha.size() == 3);
  CHECK(sim.truth.logit_theta.size() == 5);
  CHECK(sim.truth.logit_lambda.size() == 5);
  CHECK(sim.truth.rho.size() == 5);
  // no heterogeneity: unit-level truths collapse onto the population values
  for (double v : sim.truth.logit_alpha) CHECK(v == doctest::Approx(0.0));
  for (double v : sim.truth.logit_theta) CHECK(v == doctest::Approx(0.0));
  for (double v : sim.truth.rho) CHECK(v == doctest::Approx(-1.0));
}

TEST_CASE("alternating starts follow the heads-tails-heads pattern") {
  GenerativeConfig g;
  g.n_persons = 2;
  g.n_coins = 1;
  g.flips_per_person = 50;
  g.sequence_length = 10;
  g.alternate_starts = true;
  auto sim = simulate(g);
  for (const auto& r : sim.data.records) {
    if (r.flip_index % g.sequence_length != 0) continue;
    const int seq = r.flip_index / g.sequence_length;
    CHECK(r.start == (seq % 2 == 0 ? Side::heads : Side::tails));
  }
}

TEST_CASE("a degenerate same-side probability locks sequences onto their start") {
  GenerativeConfig g;
  g.n_persons = 2;
  g.n_coins = 2;
  g.flips_per_person = 200;
  g.sequence_length = 50;
  g.theta = 1.0 - 1e-12;
  g.alternate_starts = true;
  auto sim = simulate(g);
  CHECK(count_same(sim.data) == static_cast<std::int64_t>(sim.data.records.size()));
  for (const auto& r : sim.data.records) {
    REQUIRE(r.landed == r.start);
    const int seq = r.flip_index / g.sequence_length;
    // within a sequence the start never changes: it stays the alternating seed
    CHECK(r.start == (seq % 2 == 0 ? Side::heads : Side::tails));
  }
}

TEST_CASE("a null configuration produces fair same-side and heads rates") {
  GenerativeConfig g;
  g.n_persons = 24;
  g.n_coins = 8;
  g.flips_per_person = 2000;
  g.seed = 11;
  auto sim = simulate(g);
  const double n = static_cast<double>(sim.data.records.size());
  REQUIRE(n == 48000.0);
  const double four_sigma = 4.0 * std::sqrt(0.25 / n);
  CHECK(std::abs(same_rate(sim.data) - 0.5) < four_sigma);
  CHECK(std::abs(heads_rate(sim.data) - 0.5) < four_sigma);
}

TEST_CASE("a constant same-side bias is reproduced in the pooled rate") {
  GenerativeConfig g;
  g.n_persons = 24;
  g.n_coins = 8;
  g.flips_per_person = 2000;
  g.theta = 0.53;
  g.lambda = 0.5;  // no toss-order component
  g.seed = 13;
  auto sim = simulate(g);
  const double four_sigma = 4.0 * std::sqrt(0.25 / 48000.0);
  CHECK(std::abs(same_rate(sim.data) - 0.53) < four_sigma);
  CHECK(std::abs(heads_rate(sim.data) - 0.5) < four_sigma);
}

TEST_CASE("a heads-tails bias leaves its chaining signature on the same-side rate") {
  GenerativeConfig g;
  g.n_persons = 24;
  g.n_coins = 8;
  g.flips_per_person = 2000;
  g.alpha = 0.6;
  g.seed = 17;
  auto sim = simulate(g);
  CHECK(std::abs(heads_rate(sim.data) - 0.6) < 0.01);
  // landings are iid Bernoulli(0.6), so consecutive-flip agreement is
  // 0.6^2 + 0.4^2 = 0.52 (diluted slightly by fresh sequence starts)
  CHECK(same_rate(sim.data) > 0.505);
  CHECK(same_rate(sim.data) < 0.535);
}

TEST_CASE("heterogeneity spreads the unit-level truths") {
  GenerativeConfig g;
  g.n_persons = 40;
  g.n_coins = 10;
  g.flips_per_person = 1;
  g.sigma_theta = 0.3;
  g.sigma_alpha = 0.1;
  g.seed = 19;
  auto sim = simulate(g);
  double lo = 1e30, hi = -1e30, sum = 0.0, ssq = 0.0;
  for (double v : sim.truth.logit_theta) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  const double mean = sum / 40.0;
  for (double v : sim.truth.logit_theta) ssq += (v - mean) * (v - mean);
  CHECK(hi - lo > 0.1);
  CHECK(std::sqrt(ssq / 39.0) == doctest::Approx(0.3).epsilon(0.5));
  // lambda and rho stay degenerate when their sds are zero
  for (double v : sim.truth.logit_lambda) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("a decaying toss-order effect yields the published-scale pooled rate") {
  GenerativeConfig g;
  g.n_persons = 48;
  g.n_coins = 44;
  g.flips_per_person = 20000;
  g.theta = 0.5014;
  g.lambda = 0.5250;
  g.rho = -1.6;
  g.seed = 23;
  auto sim = simulate(g);
  const double pooled = same_rate(sim.data);
  CHECK(pooled >= 0.50);
  CHECK(pooled <= 0.52);

  // batch curve decays: early flips are far more same-side biased than late
  std::int64_t early_same = 0, early_n = 0, late_same = 0, late_n = 0;
  for (const auto& r : sim.data.records) {
    if (r.flip_index < 1000) {
      ++early_n;
      early_same += r.same_side() ? 1 : 0;
    } else if (r.flip_index >= 19000) {
      ++late_n;
      late_same += r.same_side() ? 1 : 0;
    }
  }
  const double early = static_cast<double>(early_same) / static_cast<double>(early_n);
  const double late = static_cast<double>(late_same) / static_cast<double>(late_n);
  CHECK(early > 0.60);  // expected 0.656 in the first thousand tosses
  CHECK(late < 0.51);   // expected 0.5016 in the last thousand
  CHECK(early > late);
}

TEST_CASE("simulate rejects invalid configurations") {
  GenerativeConfig g;
  g.n_persons = 0;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.flips_per_person = 0;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.sequence_length = 0;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.theta = 0.0;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.lambda = 1.0;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.alpha = -0.2;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
  g = GenerativeConfig{};
  g.sigma_theta = -0.01;
  CHECK_THROWS_AS(simulate(g), std::domain_error);
}
