#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flips/flip_data.hpp"

namespace flips {

// Protocol-faithful generator: within a sequence every flip starts on the side
// the previous flip landed; the first start of a sequence is either a fair
// draw or a deterministic alternation across sequences.
struct GenerativeConfig {
  int n_persons = 48;
  int n_coins = 44;           // assigned to persons round-robin
  int flips_per_person = 1000;
  int sequence_length = 100;  // flips per sequence
  double alpha = 0.5;         // heads probability component (per-coin mean)
  double theta = 0.5;         // asymptotic same-side probability (per-person mean)
  double lambda = 0.5;        // decaying same-side component (per-person mean)
  double rho = -1.0;          // decay exponent
  double sigma_alpha = 0.0;   // logit-scale heterogeneity sds
  double sigma_theta = 0.0;
  double sigma_lambda = 0.0;
  double sigma_rho = 0.0;
  bool alternate_starts = false;  // HTHT... first starts instead of fair draws
  std::string site = "sim";
  std::uint64_t seed = 1;
};

struct SimTruth {
  std::vector<double> logit_alpha;   // per coin
  std::vector<double> logit_theta;   // per person
  std::vector<double> logit_lambda;  // per person
  std::vector<double> rho;           // per person
};

struct Simulation {
  FlipDataset data;
  SimTruth truth;
};

Simulation simulate(const GenerativeConfig& cfg);

// pooled same-side count of a dataset (convenience for the generator checks)
std::int64_t count_same(const FlipDataset& d);
std::int64_t count_heads(const FlipDataset& d);

}  // namespace flips
