// flips: command-line interface to the coin-flip analysis library.
//
// Every subcommand emits a JSON report with a canonical configuration echo and
// an FNV-1a fingerprint of it, so identical configurations produce identical
// reports byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flips/binomial_tests.hpp"
#include "flips/flip_data.hpp"
#include "flips/hier_model.hpp"
#include "flips/learning_model.hpp"
#include "flips/mcmc.hpp"
#include "flips/model_averaging.hpp"
#include "flips/numerics.hpp"
#include "flips/report.hpp"
#include "flips/sensitivity.hpp"
#include "flips/simulator.hpp"

#ifndef FLIPS_VERSION
#define FLIPS_VERSION "0.0.0"
#endif

namespace {

using json = nlohmann::ordered_json;

struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// shared options

struct Common {
  std::string input;
  std::string out_dir;
  std::string priors_file;
  std::uint64_t seed = 1;
  int chains = 4;
  int warmup = 2000;
  int iters = 2000;
  int threads = 1;
  bool lenient = false;
  double outlier_threshold = 0.53;
  bool exclude_outliers = false;
};

void add_input(CLI::App* cmd, Common& c) {
  cmd->add_option("--input", c.input, "flip CSV file")->required();
  cmd->add_flag("--lenient", c.lenient,
                "collect protocol violations instead of aborting on them");
}

void add_out(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out_dir,
                  "output directory (report JSON and any CSV side files; "
                  "default: report to stdout)");
}

void add_exclude(CLI::App* cmd, Common& c) {
  auto* opt = cmd->add_flag("--exclude-outliers{0.53}", c.outlier_threshold,
                            "drop persons with same-side proportion above the "
                            "threshold (default 0.53, override with =value)");
  cmd->callback([&c, opt]() { c.exclude_outliers = opt->count() > 0; });
}

void add_mcmc(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--chains", c.chains, "MCMC chains")->capture_default_str();
  cmd->add_option("--warmup", c.warmup, "warmup sweeps per chain")->capture_default_str();
  cmd->add_option("--iters", c.iters, "retained sweeps per chain")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads (results are identical "
                  "for any thread count)")
      ->capture_default_str();
}

flips::McmcSettings mcmc_settings(const Common& c) {
  flips::McmcSettings s;
  s.chains = c.chains;
  s.warmup = c.warmup;
  s.iters = c.iters;
  s.seed = c.seed;
  s.threads = c.threads;
  return s;
}

struct LoadedData {
  flips::FlipDataset data;
  std::vector<std::string> excluded_persons;
};

LoadedData load_data(const Common& c) {
  LoadedData out;
  out.data = flips::ingest_csv_file(c.input, !c.lenient);
  if (c.exclude_outliers) {
    auto filtered = flips::exclude_outliers(out.data, c.outlier_threshold);
    out.data = std::move(filtered.data);
    out.excluded_persons = std::move(filtered.excluded_persons);
  }
  return out;
}

// --------------------------------------------------------------------------
// report plumbing

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(digits);
  os << v;
  return os.str();
}

json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json jestimate(const flips::Estimate& e) {
  return json{{"mean", jnum(e.mean)}, {"ci_low", jnum(e.ci_low)}, {"ci_high", jnum(e.ci_high)}};
}

flips::FlatConfig base_config(const std::string& sub, const Common& c, bool with_mcmc) {
  flips::FlatConfig cfg;
  cfg.set("subcommand", sub);
  if (!c.input.empty()) cfg.set("input", c.input);
  cfg.set("lenient", c.lenient ? "true" : "false");
  if (c.exclude_outliers) cfg.set("outlier_threshold", fmt(c.outlier_threshold, 17));
  if (with_mcmc) {
    cfg.set("seed", std::to_string(c.seed));
    cfg.set("chains", std::to_string(c.chains));
    cfg.set("warmup", std::to_string(c.warmup));
    cfg.set("iters", std::to_string(c.iters));
  }
  return cfg;
}

// canonical key order of the config echo: insertion order, each key once
json config_json(const flips::FlatConfig& cfg) {
  json out = json::object();
  std::istringstream canon(cfg.canonical());
  std::string line;
  while (std::getline(canon, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void emit_report(const Common& c, const std::string& sub, const flips::FlatConfig& cfg,
                 const json& results) {
  json report;
  report["tool"] = "flips";
  report["subcommand"] = sub;
  report["version"] = FLIPS_VERSION;
  report["seed"] = c.seed;
  report["config"] = config_json(cfg);
  report["config_hash"] = cfg.hash_hex();
  report["results"] = results;
  const std::string text = report.dump(2) + "\n";
  if (c.out_dir.empty()) {
    std::cout << text;
    return;
  }
  std::filesystem::create_directories(c.out_dir);
  const auto path = std::filesystem::path(c.out_dir) / (sub + ".json");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open report file: " + path.string());
  os << text;
  std::cout << "wrote " << path.string() << "\n";
}

std::ofstream open_side_file(const Common& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  const auto path = std::filesystem::path(c.out_dir) / name;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file: " + path.string());
  std::cout << "wrote " << path.string() << "\n";
  return os;
}

// --------------------------------------------------------------------------
// prior-file handling

flips::ComponentPrior parse_component(const flips::FlatConfig& cfg, const std::string& name,
                                      const flips::ComponentPrior& base) {
  flips::ComponentPrior p = base;
  using F = flips::ComponentPrior::Family;
  if (const auto* fam = cfg.find(name + ".family")) {
    if (*fam == "beta") p.family = F::beta;
    else if (*fam == "trunc_beta") p.family = F::trunc_beta;
    else if (*fam == "half_normal") p.family = F::half_normal;
    else if (*fam == "gamma") p.family = F::gamma;
    else if (*fam == "normal_moment") p.family = F::normal_moment;
    else throw std::invalid_argument("unknown prior family for " + name + ": " + *fam);
  }
  p.p1 = cfg.get_double(name + ".p1", p.p1);
  p.p2 = cfg.get_double(name + ".p2", p.p2);
  p.lo = cfg.get_double(name + ".lo", p.lo);
  p.hi = cfg.get_double(name + ".hi", p.hi);
  p.positive_only = cfg.get_bool(name + ".positive_only", p.positive_only);
  return p;
}

flips::PriorSet load_priors(const std::string& path, const flips::PriorSet& base,
                            flips::FlatConfig* echo) {
  if (path.empty()) return base;
  auto cfg = flips::FlatConfig::parse_file(path);
  flips::PriorSet out;
  out.beta_mu = parse_component(cfg, "beta_mu", base.beta_mu);
  out.alpha_mu = parse_component(cfg, "alpha_mu", base.alpha_mu);
  out.sigma_beta = parse_component(cfg, "sigma_beta", base.sigma_beta);
  out.sigma_alpha = parse_component(cfg, "sigma_alpha", base.sigma_alpha);
  if (echo) {
    for (const auto& [k, v] : cfg.items) echo->set("prior." + k, v);
  }
  return out;
}

json jdiagnostics(const flips::ChainDiagnostics& d) {
  return json{{"max_rhat", jnum(d.max_rhat)}, {"min_ess", jnum(d.min_ess)}};
}

// --------------------------------------------------------------------------
// subcommands

void run_ingest(const Common& c) {
  auto loaded = flips::ingest_csv_file(c.input, !c.lenient);
  auto cfg = base_config("ingest", c, false);
  json violations = json::array();
  std::size_t shown = 0;
  for (const auto& v : loaded.violations) {
    if (shown++ >= 50) break;
    violations.push_back(json{{"row", v.row}, {"message", v.message}});
  }
  json results{
      {"n_records", loaded.records.size()},
      {"n_persons", loaded.persons.size()},
      {"n_coins", loaded.coins.size()},
      {"n_violations", loaded.violations.size()},
      {"violations", violations},
      {"n_same", flips::count_same(loaded)},
      {"n_heads", flips::count_heads(loaded)},
  };
  emit_report(c, "ingest", cfg, results);
}

void run_describe(const Common& c) {
  auto loaded = load_data(c);
  const auto& d = loaded.data;
  const auto n = static_cast<std::int64_t>(d.records.size());
  const auto same = flips::count_same(d);
  const auto heads = flips::count_heads(d);
  const auto post_same = flips::posterior_interval_uniform(same, n);
  const auto post_heads = flips::posterior_interval_uniform(heads, n);

  if (!c.out_dir.empty()) {
    auto persons = flips::summarize_by(d, flips::SummaryUnit::person);
    auto os = open_side_file(c, "person_summary.csv");
    os << "person_id,k,n,coins,proportion,ci_low,ci_high,site\n";
    for (const auto& r : persons) {
      os << r.unit_id << ',' << r.k << ',' << r.n << ',' << r.degree << ','
         << fmt(r.proportion, 6) << ',' << fmt(r.ci_low, 6) << ',' << fmt(r.ci_high, 6) << ','
         << r.site << '\n';
    }
    auto coins = flips::summarize_by(d, flips::SummaryUnit::coin);
    auto os2 = open_side_file(c, "coin_summary.csv");
    os2 << "coin_id,k,n,people,proportion,ci_low,ci_high\n";
    for (const auto& r : coins) {
      os2 << r.unit_id << ',' << r.k << ',' << r.n << ',' << r.degree << ','
          << fmt(r.proportion, 6) << ',' << fmt(r.ci_low, 6) << ',' << fmt(r.ci_high, 6) << '\n';
    }
  }

  auto cfg = base_config("describe", c, false);
  const double p_same = n > 0 ? static_cast<double>(same) / n : 0.0;
  json results{
      {"n_records", n},
      {"n_persons", d.persons.size()},
      {"n_coins", d.coins.size()},
      {"excluded_persons", loaded.excluded_persons},
      {"same_side",
       json{{"k", same},
            {"proportion", jnum(p_same)},
            {"posterior_mean", jnum(post_same.mean)},
            {"ci_low", jnum(post_same.ci_low)},
            {"ci_high", jnum(post_same.ci_high)},
            {"betting_edge_per_1000", jnum(flips::betting_edge(p_same, 1000.0))}}},
      {"heads",
       json{{"k", heads},
            {"proportion", jnum(n > 0 ? static_cast<double>(heads) / n : 0.0)},
            {"posterior_mean", jnum(post_heads.mean)},
            {"ci_low", jnum(post_heads.ci_low)},
            {"ci_high", jnum(post_heads.ci_high)}}},
  };
  emit_report(c, "describe", cfg, results);
}

json jbinom(const flips::BinomialTestResult& r) {
  return json{{"k", r.k},
              {"n", r.n},
              {"log_bf10", jnum(r.log_bf10)},
              {"log10_bf10", jnum(r.log10_bf10)},
              {"bf10", jnum(r.bf10)},
              {"posterior_mean", jnum(r.posterior_mean)},
              {"ci_low", jnum(r.ci_low)},
              {"ci_high", jnum(r.ci_high)},
              {"prior", r.prior}};
}

void run_test_binomial(const Common& c) {
  auto loaded = load_data(c);
  const auto& d = loaded.data;
  const auto n = static_cast<std::int64_t>(d.records.size());
  const auto same = flips::count_same(d);
  const auto heads = flips::count_heads(d);

  flips::TruncatedBetaPrior informed;
  double heads_a = 5000.0, heads_b = 5000.0;
  auto cfg = base_config("test-binomial", c, false);
  if (!c.priors_file.empty()) {
    auto pf = flips::FlatConfig::parse_file(c.priors_file);
    informed.a = pf.get_double("same.a", informed.a);
    informed.b = pf.get_double("same.b", informed.b);
    informed.lower = pf.get_double("same.lo", informed.lower);
    informed.upper = pf.get_double("same.hi", informed.upper);
    heads_a = pf.get_double("heads.a", heads_a);
    heads_b = pf.get_double("heads.b", heads_b);
    for (const auto& [k, v] : pf.items) cfg.set("prior." + k, v);
  }
  auto r_same = flips::bf_informed_binomial(same, n, informed);
  auto r_heads = flips::bf_symmetric_binomial(heads, n, heads_a, heads_b);
  json results{{"excluded_persons", loaded.excluded_persons},
               {"same_side", jbinom(r_same)},
               {"heads", jbinom(r_heads)}};
  emit_report(c, "test-binomial", cfg, results);
}

void run_fit_hier(const Common& c) {
  auto loaded = load_data(c);
  auto cfg = base_config("fit-hier", c, true);
  auto priors = load_priors(c.priors_file, flips::PriorSet::estimation(), &cfg);
  auto cells = flips::CellTable::from(loaded.data);
  flips::HierTarget target(flips::ModelSpec{}, priors, cells);
  auto fit = flips::sample_posterior(target, mcmc_settings(c));
  auto est = flips::summarize_hier(target, fit, false);
  auto est_realized = flips::summarize_hier(target, fit, true);
  json results{
      {"excluded_persons", loaded.excluded_persons},
      {"pr_same", jestimate(est.pr_same)},
      {"pr_heads", jestimate(est.pr_heads)},
      {"sd_people", jestimate(est.sd_people)},
      {"sd_coins", jestimate(est.sd_coins)},
      {"sd_people_realized", jestimate(est_realized.sd_people)},
      {"sd_coins_realized", jestimate(est_realized.sd_coins)},
      {"diagnostics", jdiagnostics(fit.diagnostics)},
      {"converged", fit.converged},
  };
  emit_report(c, "fit-hier", cfg, results);
  if (!fit.converged) {
    throw ConvergenceFailure("chains did not converge (max split R-hat " +
                             fmt(fit.diagnostics.max_rhat, 4) + " >= 1.01)");
  }
}

void run_test_bma(const Common& c, std::uint64_t bridge_seed, int n_proposal) {
  auto loaded = load_data(c);
  auto cfg = base_config("test-bma", c, true);
  cfg.set("bridge_seed", std::to_string(bridge_seed));
  cfg.set("proposal_draws", std::to_string(n_proposal));
  auto priors = load_priors(c.priors_file, flips::PriorSet::testing(), &cfg);
  auto cells = flips::CellTable::from(loaded.data);
  flips::BmaSettings settings;
  settings.mcmc = mcmc_settings(c);
  settings.bridge_seed = bridge_seed;
  settings.n_proposal = n_proposal;
  flips::BmaResult bma;
  try {
    bma = flips::run_model_averaging(cells, priors, settings);
  } catch (const std::runtime_error& e) {
    throw ConvergenceFailure(e.what());
  }
  json models = json::array();
  bool all_converged = true;
  for (std::size_t m = 0; m < bma.models.size(); ++m) {
    const auto& ev = bma.models[m];
    all_converged = all_converged && ev.converged;
    models.push_back(json{{"model", "M" + std::to_string(m + 1)},
                          {"label", ev.spec.label()},
                          {"log_ml", jnum(ev.ml.log_ml)},
                          {"rel_mc_error", jnum(ev.ml.rel_mc_error)},
                          {"bridge_iterations", ev.ml.iterations},
                          {"max_rhat", jnum(ev.max_rhat)},
                          {"min_ess", jnum(ev.min_ess)},
                          {"posterior_prob", jnum(bma.posterior_prob[m])}});
  }
  json results{
      {"excluded_persons", loaded.excluded_persons},
      {"models", models},
      {"log10_bf_same_side", jnum(bma.log10_bf_same_side)},
      {"log10_bf_heads_tails", jnum(bma.log10_bf_heads_tails)},
      {"log10_bf_person_het", jnum(bma.log10_bf_person_het)},
      {"log10_bf_coin_het", jnum(bma.log10_bf_coin_het)},
      {"converged", all_converged},
  };
  emit_report(c, "test-bma", cfg, results);
  if (!all_converged) {
    throw ConvergenceFailure("one or more model fits did not converge");
  }
}

void run_fit_learning(const Common& c, int batch_size) {
  auto loaded = load_data(c);
  auto cfg = base_config("fit-learning", c, true);
  cfg.set("batch_size", std::to_string(batch_size));
  auto data = flips::make_batches(loaded.data, batch_size);
  flips::LearnPriors priors;
  auto fit = flips::fit_learning(data, priors, mcmc_settings(c));
  flips::LearnTarget target(data, priors);
  std::vector<double> ts;
  for (int i = 1; i <= 20; ++i) ts.push_back(0.05 * i);
  auto curve = flips::learning_curve(target, fit, ts);
  if (!c.out_dir.empty()) {
    auto os = open_side_file(c, "learning_curve.csv");
    os << "t,mean,ci_low,ci_high\n";
    for (std::size_t i = 0; i < ts.size(); ++i) {
      os << fmt(ts[i], 6) << ',' << fmt(curve[i].mean, 6) << ',' << fmt(curve[i].ci_low, 6)
         << ',' << fmt(curve[i].ci_high, 6) << '\n';
    }
  }
  json jcurve = json::array();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    jcurve.push_back(json{{"t", ts[i]},
                          {"mean", jnum(curve[i].mean)},
                          {"ci_low", jnum(curve[i].ci_low)},
                          {"ci_high", jnum(curve[i].ci_high)}});
  }
  json results{
      {"excluded_persons", loaded.excluded_persons},
      {"baseline", jestimate(fit.baseline)},
      {"toss_order", jestimate(fit.toss_order)},
      {"initial", jestimate(fit.initial)},
      {"rho", jestimate(fit.rho)},
      {"curve", jcurve},
      {"diagnostics", jdiagnostics(fit.fit.diagnostics)},
      {"converged", fit.converged},
  };
  emit_report(c, "fit-learning", cfg, results);
  if (!fit.converged) {
    throw ConvergenceFailure("learning-model chains did not converge");
  }
}

void run_bff(const Common& c, const std::string& component, bool positive_only, bool hier) {
  auto loaded = load_data(c);
  auto cfg = base_config("bff", c, hier);
  cfg.set("component", component);
  cfg.set("positive_only", positive_only ? "true" : "false");
  cfg.set("hierarchical", hier ? "true" : "false");
  auto grid = flips::default_bff_grid();
  flips::BffCurve curve;
  if (hier) {
    flips::BffComponent sweep;
    if (component == "same") sweep = flips::BffComponent::same_side;
    else if (component == "heads") sweep = flips::BffComponent::heads_tails;
    else if (component == "person-sd") sweep = flips::BffComponent::person_het;
    else if (component == "coin-sd") sweep = flips::BffComponent::coin_het;
    else throw std::invalid_argument("unknown component: " + component);
    flips::HierBffSettings hs;
    hs.bma.mcmc = mcmc_settings(c);
    auto cells = flips::CellTable::from(loaded.data);
    try {
      curve = flips::bff_hierarchical(cells, sweep, grid, hs);
    } catch (const std::runtime_error& e) {
      throw ConvergenceFailure(e.what());
    }
  } else {
    const auto n = static_cast<double>(loaded.data.records.size());
    double k = 0.0;
    if (component == "same") k = static_cast<double>(flips::count_same(loaded.data));
    else if (component == "heads") k = static_cast<double>(flips::count_heads(loaded.data));
    else throw std::invalid_argument("component must be same|heads without --hier");
    curve = flips::bff_binomial(k, n, grid, positive_only);
  }
  if (!c.out_dir.empty()) {
    auto os = open_side_file(c, "bff_curve.csv");
    os << "phi,mode_prob,log10_bf\n";
    for (const auto& p : curve.points) {
      os << fmt(p.phi, 6) << ',' << fmt(p.mode_prob, 8) << ',' << fmt(p.log10_bf, 8) << '\n';
    }
  }
  json pts = json::array();
  for (const auto& p : curve.points) {
    pts.push_back(json{{"phi", p.phi},
                       {"mode_prob", jnum(p.mode_prob)},
                       {"log10_bf", jnum(p.log10_bf)}});
  }
  json results{{"excluded_persons", loaded.excluded_persons},
               {"points", pts},
               {"max_log10_bf", jnum(curve.max_log10_bf)},
               {"phi_at_max", jnum(curve.phi_at_max)}};
  emit_report(c, "bff", cfg, results);
}

void run_sites(const Common& c, double prior_sd) {
  auto loaded = load_data(c);
  auto cfg = base_config("sites", c, true);
  cfg.set("site_prior_sd", fmt(prior_sd, 17));
  auto priors = load_priors(c.priors_file, flips::PriorSet::estimation(), &cfg);
  auto res = flips::fit_site_contrasts(loaded.data, priors, mcmc_settings(c), prior_sd);
  json sites = json::array();
  for (std::size_t s = 0; s < res.sites.size(); ++s) {
    sites.push_back(json{{"site", res.sites[s]},
                         {"delta_logit", jestimate(res.delta_logit[s])},
                         {"delta_prob", jestimate(res.delta_prob[s])}});
  }
  const bool converged = res.diagnostics.max_rhat < 1.01;
  json results{{"excluded_persons", loaded.excluded_persons},
               {"sites", sites},
               {"diagnostics", jdiagnostics(res.diagnostics)},
               {"converged", converged}};
  emit_report(c, "sites", cfg, results);
  if (!converged) throw ConvergenceFailure("site-contrast chains did not converge");
}

void run_freq(const Common& c, int quad_nodes) {
  auto loaded = load_data(c);
  auto cfg = base_config("freq", c, false);
  cfg.set("quad_nodes", std::to_string(quad_nodes));
  const auto& d = loaded.data;
  const auto n = static_cast<std::int64_t>(d.records.size());
  const auto same = flips::count_same(d);
  const auto heads = flips::count_heads(d);
  auto cells = flips::CellTable::from(d);
  auto glmm = flips::ml_fit_random_intercept(cells, quad_nodes);
  json results{
      {"excluded_persons", loaded.excluded_persons},
      {"exact_binomial",
       json{{"same_side", json{{"k", same}, {"n", n},
                               {"p_value", jnum(flips::exact_binomial_p(same, n))}}},
            {"heads", json{{"k", heads}, {"n", n},
                           {"p_value", jnum(flips::exact_binomial_p(heads, n))}}}}},
      {"glmm",
       json{{"b_mu", jnum(glmm.b_mu)},
            {"se_b_mu", jnum(glmm.se_b_mu)},
            {"z", jnum(glmm.z)},
            {"p", jnum(glmm.p)},
            {"b_start", jnum(glmm.b_start)},
            {"se_start", jnum(glmm.se_start)},
            {"p_start", jnum(glmm.p_start)},
            {"tau", jnum(glmm.tau)},
            {"lr_chi2", jnum(glmm.lr_chi2)},
            {"lr_p", jnum(glmm.lr_p)},
            {"loglik", jnum(glmm.loglik)},
            {"converged", glmm.converged}}},
  };
  emit_report(c, "freq", cfg, results);
  if (!glmm.converged) throw ConvergenceFailure("random-intercept ML fit did not converge");
}

flips::GenerativeConfig sim_config(const Common& c, const std::string& config_file,
                                   flips::FlatConfig* echo) {
  flips::GenerativeConfig g;
  flips::FlatConfig cfg;
  if (!config_file.empty()) cfg = flips::FlatConfig::parse_file(config_file);
  g.n_persons = static_cast<int>(cfg.get_int("n_persons", g.n_persons));
  g.n_coins = static_cast<int>(cfg.get_int("n_coins", g.n_coins));
  g.flips_per_person = static_cast<int>(cfg.get_int("flips_per_person", g.flips_per_person));
  g.sequence_length = static_cast<int>(cfg.get_int("sequence_length", g.sequence_length));
  g.alpha = cfg.get_double("alpha", g.alpha);
  g.theta = cfg.get_double("theta", g.theta);
  g.lambda = cfg.get_double("lambda", g.lambda);
  g.rho = cfg.get_double("rho", g.rho);
  g.sigma_alpha = cfg.get_double("sigma_alpha", g.sigma_alpha);
  g.sigma_theta = cfg.get_double("sigma_theta", g.sigma_theta);
  g.sigma_lambda = cfg.get_double("sigma_lambda", g.sigma_lambda);
  g.sigma_rho = cfg.get_double("sigma_rho", g.sigma_rho);
  g.alternate_starts = cfg.get_bool("alternate_starts", g.alternate_starts);
  g.site = cfg.get_string("site", g.site);
  g.seed = c.seed;
  if (echo) {
    echo->set("n_persons", std::to_string(g.n_persons));
    echo->set("n_coins", std::to_string(g.n_coins));
    echo->set("flips_per_person", std::to_string(g.flips_per_person));
    echo->set("sequence_length", std::to_string(g.sequence_length));
    echo->set("alpha", fmt(g.alpha, 17));
    echo->set("theta", fmt(g.theta, 17));
    echo->set("lambda", fmt(g.lambda, 17));
    echo->set("rho", fmt(g.rho, 17));
    echo->set("sigma_alpha", fmt(g.sigma_alpha, 17));
    echo->set("sigma_theta", fmt(g.sigma_theta, 17));
    echo->set("sigma_lambda", fmt(g.sigma_lambda, 17));
    echo->set("sigma_rho", fmt(g.sigma_rho, 17));
    echo->set("alternate_starts", g.alternate_starts ? "true" : "false");
    echo->set("site", g.site);
    echo->set("seed", std::to_string(g.seed));
  }
  return g;
}

void run_simulate(const Common& c, const std::string& config_file) {
  auto cfg = base_config("simulate", c, false);
  auto g = sim_config(c, config_file, &cfg);
  auto sim = flips::simulate(g);
  if (c.out_dir.empty()) {
    throw std::invalid_argument("simulate requires --out for the generated CSVs");
  }
  {
    auto os = open_side_file(c, "flips.csv");
    flips::write_csv(sim.data, os);
  }
  {
    auto os = open_side_file(c, "truth.csv");
    os << "unit,kind,value\n";
    for (std::size_t j = 0; j < sim.truth.logit_alpha.size(); ++j) {
      os << sim.data.coins[j] << ",logit_alpha," << fmt(sim.truth.logit_alpha[j], 12) << '\n';
    }
    for (std::size_t k = 0; k < sim.truth.logit_theta.size(); ++k) {
      os << sim.data.persons[k] << ",logit_theta," << fmt(sim.truth.logit_theta[k], 12) << '\n';
      os << sim.data.persons[k] << ",logit_lambda," << fmt(sim.truth.logit_lambda[k], 12)
         << '\n';
      os << sim.data.persons[k] << ",rho," << fmt(sim.truth.rho[k], 12) << '\n';
    }
  }
  const auto n = static_cast<std::int64_t>(sim.data.records.size());
  json results{
      {"n_records", n},
      {"n_persons", sim.data.persons.size()},
      {"n_coins", sim.data.coins.size()},
      {"n_same", flips::count_same(sim.data)},
      {"n_heads", flips::count_heads(sim.data)},
  };
  emit_report(c, "simulate", cfg, results);
}

void run_recover(const Common& c, const std::string& config_file, bool with_learning) {
  auto cfg = base_config("recover", c, true);
  auto g = sim_config(c, config_file, &cfg);
  cfg.set("learning", with_learning ? "true" : "false");
  auto sim = flips::simulate(g);
  auto cells = flips::CellTable::from(sim.data);
  flips::HierTarget target(flips::ModelSpec{}, flips::PriorSet::estimation(), cells);
  auto settings = mcmc_settings(c);
  settings.seed = c.seed + 101;  // decouple the sampler stream from the generator
  auto fit = flips::sample_posterior(target, settings);
  auto est = flips::summarize_hier(target, fit, false);

  // marginal same-side rate implied by the generator at its population means
  const double lt = flips::logit(g.theta);
  const double ll = flips::logit(g.lambda);
  double same_rate = g.theta;
  if (g.lambda != 0.5) {
    // averaged over a uniform toss index 1..flips_per_person
    double acc = 0.0;
    for (int i = 1; i <= g.flips_per_person; ++i) {
      const double t = std::max(1e-6, static_cast<double>(i) / 1000.0);
      acc += flips::inv_logit(flips::learning_mu_same(lt, ll, g.rho, t));
    }
    same_rate = acc / g.flips_per_person;
  }
  const auto contains = [](const flips::Estimate& e, double v) {
    return e.ci_low <= v && v <= e.ci_high;
  };
  json results{
      {"truth",
       json{{"theta", g.theta},
            {"alpha", g.alpha},
            {"lambda", g.lambda},
            {"rho", g.rho},
            {"implied_same_rate", jnum(same_rate)},
            {"sd_people_prob", jnum(g.sigma_theta * g.theta * (1.0 - g.theta))},
            {"sd_coins_prob", jnum(g.sigma_alpha * g.alpha * (1.0 - g.alpha))}}},
      {"pr_same", jestimate(est.pr_same)},
      {"pr_heads", jestimate(est.pr_heads)},
      {"sd_people", jestimate(est.sd_people)},
      {"sd_coins", jestimate(est.sd_coins)},
      {"covers",
       json{{"pr_same", contains(est.pr_same, same_rate)},
            {"pr_heads", contains(est.pr_heads, g.alpha)},
            {"sd_people", contains(est.sd_people, g.sigma_theta * g.theta * (1.0 - g.theta))},
            {"sd_coins", contains(est.sd_coins, g.sigma_alpha * g.alpha * (1.0 - g.alpha))}}},
      {"diagnostics", jdiagnostics(fit.diagnostics)},
      {"converged", fit.converged},
  };
  bool all_converged = fit.converged;
  if (with_learning) {
    auto data = flips::make_batches(sim.data, 100);
    flips::LearnPriors priors;
    auto lf = flips::fit_learning(data, priors, settings);
    results["learning"] = json{
        {"baseline", jestimate(lf.baseline)},
        {"toss_order", jestimate(lf.toss_order)},
        {"initial", jestimate(lf.initial)},
        {"rho", jestimate(lf.rho)},
        {"covers",
         json{{"baseline", contains(lf.baseline, g.theta)},
              {"toss_order", contains(lf.toss_order, g.lambda)},
              {"rho", contains(lf.rho, g.rho)}}},
        {"converged", lf.converged},
    };
    all_converged = all_converged && lf.converged;
  }
  emit_report(c, "recover", cfg, results);
  if (!all_converged) throw ConvergenceFailure("recovery fit did not converge");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coin-flip analysis toolkit"};
  app.set_version_flag("--version", FLIPS_VERSION);
  app.require_subcommand(1);

  Common c;
  std::string sim_config_file;
  std::string bff_component = "same";
  bool bff_positive = true;
  bool bff_hier = false;
  bool recover_learning = false;
  int batch_size = 100;
  int quad_nodes = 25;
  double site_prior_sd = 0.2;
  std::uint64_t bridge_seed = 7;
  int n_proposal = 0;

  auto* ingest = app.add_subcommand("ingest", "validate a flip CSV and report its shape");
  add_input(ingest, c);
  add_out(ingest, c);

  auto* describe = app.add_subcommand("describe", "pooled and per-unit descriptive summaries");
  add_input(describe, c);
  add_out(describe, c);
  add_exclude(describe, c);

  auto* tbin = app.add_subcommand("test-binomial",
                                  "informed Bayes-factor tests of the pooled counts");
  add_input(tbin, c);
  add_out(tbin, c);
  add_exclude(tbin, c);
  tbin->add_option("--priors", c.priors_file, "flat prior file (same.a, same.b, same.lo, "
                   "same.hi, heads.a, heads.b)");

  auto* fhier = app.add_subcommand("fit-hier", "hierarchical estimation-model fit");
  add_input(fhier, c);
  add_out(fhier, c);
  add_exclude(fhier, c);
  add_mcmc(fhier, c);
  fhier->add_option("--priors", c.priors_file, "flat prior file (component.family/p1/p2/...)");

  auto* tbma = app.add_subcommand("test-bma",
                                  "16-model comparison with bridge-sampled evidence");
  add_input(tbma, c);
  add_out(tbma, c);
  add_exclude(tbma, c);
  add_mcmc(tbma, c);
  tbma->add_option("--priors", c.priors_file, "flat prior file for the testing priors");
  tbma->add_option("--bridge-seed", bridge_seed, "proposal RNG seed")->capture_default_str();
  tbma->add_option("--proposal-draws", n_proposal,
                   "bridge proposal draws (0: match the retained posterior draws)")
      ->capture_default_str();

  auto* flearn = app.add_subcommand("fit-learning", "decaying same-side effect model");
  add_input(flearn, c);
  add_out(flearn, c);
  add_mcmc(flearn, c);
  flearn->add_option("--batch-size", batch_size, "flips per batch")->capture_default_str();

  auto* bff = app.add_subcommand("bff", "Bayes-factor sensitivity curve over prior modes");
  add_input(bff, c);
  add_out(bff, c);
  add_exclude(bff, c);
  add_mcmc(bff, c);
  bff->add_option("--component", bff_component,
                  "same|heads (plus person-sd|coin-sd with --hier)")
      ->capture_default_str();
  bff->add_flag("--two-sided", [&bff_positive](std::int64_t) { bff_positive = false; },
                "symmetric alternative instead of a positive-direction one");
  bff->add_flag("--hier", bff_hier, "sweep the model-averaged inclusion Bayes factor");

  auto* sites = app.add_subcommand("sites", "recruitment-site contrasts on the same-side term");
  add_input(sites, c);
  add_out(sites, c);
  add_mcmc(sites, c);
  sites->add_option("--site-prior-sd", site_prior_sd, "prior sd of each contrast coordinate")
      ->capture_default_str();
  sites->add_option("--priors", c.priors_file, "flat prior file for the estimation priors");

  auto* freq = app.add_subcommand("freq", "exact tests and the ML random-intercept fit");
  add_input(freq, c);
  add_out(freq, c);
  add_exclude(freq, c);
  freq->add_option("--quad-nodes", quad_nodes, "Gauss-Hermite nodes")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "protocol-faithful generative simulation");
  sim->add_option("--config", sim_config_file, "flat generator config file");
  sim->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  add_out(sim, c);

  auto* recover = app.add_subcommand("recover", "simulate, refit, and check interval coverage");
  recover->add_option("--config", sim_config_file, "flat generator config file");
  add_out(recover, c);
  add_mcmc(recover, c);
  recover->add_flag("--learning", recover_learning, "also refit the decaying-effect model");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 64;
    }
    if (ingest->parsed()) run_ingest(c);
    else if (describe->parsed()) run_describe(c);
    else if (tbin->parsed()) run_test_binomial(c);
    else if (fhier->parsed()) run_fit_hier(c);
    else if (tbma->parsed()) run_test_bma(c, bridge_seed, n_proposal);
    else if (flearn->parsed()) run_fit_learning(c, batch_size);
    else if (bff->parsed()) run_bff(c, bff_component, bff_positive, bff_hier);
    else if (sites->parsed()) run_sites(c, site_prior_sd);
    else if (freq->parsed()) run_freq(c, quad_nodes);
    else if (sim->parsed()) run_simulate(c, sim_config_file);
    else if (recover->parsed()) run_recover(c, sim_config_file, recover_learning);
  } catch (const ConvergenceFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const flips::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const flips::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
