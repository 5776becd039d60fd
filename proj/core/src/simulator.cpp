#include "flips/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "flips/numerics.hpp"
#include "flips/rng.hpp"

namespace flips {

namespace {

std::string padded_id(const char* prefix, int i, int width) {
  std::string n = std::to_string(i + 1);
  std::string out(prefix);
  out.append(std::max(0, width - static_cast<int>(n.size())), '0');
  out += n;
  return out;
}

}  // namespace

Simulation simulate(const GenerativeConfig& cfg) {
  if (cfg.n_persons < 1 || cfg.n_coins < 1 || cfg.flips_per_person < 1 ||
      cfg.sequence_length < 1)
    throw std::domain_error("simulate: counts must be positive");
  for (double p : {cfg.alpha, cfg.theta, cfg.lambda})
    if (!(p > 0.0) || !(p < 1.0))
      throw std::domain_error("simulate: probabilities must lie in (0, 1)");
  for (double s : {cfg.sigma_alpha, cfg.sigma_theta, cfg.sigma_lambda, cfg.sigma_rho})
    if (s < 0.0) throw std::domain_error("simulate: heterogeneity sds must be >= 0");

  Simulation sim;
  Rng unit_rng(cfg.seed, 0);  // unit-level draws on their own stream
  sim.truth.logit_alpha.resize(cfg.n_coins);
  for (auto& v : sim.truth.logit_alpha)
    v = logit(cfg.alpha) + cfg.sigma_alpha * unit_rng.normal();
  sim.truth.logit_theta.resize(cfg.n_persons);
  sim.truth.logit_lambda.resize(cfg.n_persons);
  sim.truth.rho.resize(cfg.n_persons);
  for (int k = 0; k < cfg.n_persons; ++k) {
    sim.truth.logit_theta[k] = logit(cfg.theta) + cfg.sigma_theta * unit_rng.normal();
    sim.truth.logit_lambda[k] = logit(cfg.lambda) + cfg.sigma_lambda * unit_rng.normal();
    sim.truth.rho[k] = cfg.rho + cfg.sigma_rho * unit_rng.normal();
  }

  auto& records = sim.data.records;
  records.reserve(static_cast<std::size_t>(cfg.n_persons) * cfg.flips_per_person);
  for (int k = 0; k < cfg.n_persons; ++k) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(k) + 1);  // per-person stream
    const int j = k % cfg.n_coins;
    const std::string person = padded_id("P", k, 3);
    const std::string coin = padded_id("C", j, 3);
    Side start = Side::heads;
    int seq = -1;
    for (int i = 0; i < cfg.flips_per_person; ++i) {
      const int pos_in_seq = i % cfg.sequence_length;
      if (pos_in_seq == 0) {
        ++seq;
        if (cfg.alternate_starts)
          start = (seq % 2 == 0) ? Side::heads : Side::tails;
        else
          start = rng.bernoulli(0.5) ? Side::heads : Side::tails;
      }
      const double t = std::max(1e-6, static_cast<double>(i) / 1000.0);
      const double s = start == Side::heads ? 1.0 : -1.0;
      const double mu =
          sim.truth.logit_alpha[j] +
          s * (sim.truth.logit_theta[k] +
               sim.truth.logit_lambda[k] * std::exp(sim.truth.rho[k] * std::log(t)));
      const Side landed = rng.bernoulli(inv_logit(mu)) ? Side::heads : Side::tails;
      FlipRecord r;
      r.person_id = person;
      r.coin_id = coin;
      r.site = cfg.site;
      r.sequence_id = person + "-s" + std::to_string(seq + 1);
      r.flip_index = i;
      r.start = start;
      r.landed = landed;
      records.push_back(std::move(r));
      start = landed;  // the protocol: next flip starts on the landed side
    }
  }
  std::set<std::string> persons, coins;
  for (const auto& r : records) {
    persons.insert(r.person_id);
    coins.insert(r.coin_id);
  }
  sim.data.persons.assign(persons.begin(), persons.end());
  sim.data.coins.assign(coins.begin(), coins.end());
  return sim;
}

std::int64_t count_same(const FlipDataset& d) {
  std::int64_t n = 0;
  for (const auto& r : d.records) n += r.same_side() ? 1 : 0;
  return n;
}

std::int64_t count_heads(const FlipDataset& d) {
  std::int64_t n = 0;
  for (const auto& r : d.records) n += r.landed == Side::heads ? 1 : 0;
  return n;
}

}  // namespace flips
