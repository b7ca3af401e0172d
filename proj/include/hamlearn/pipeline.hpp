#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "hamlearn/channel_sim.hpp"
#include "hamlearn/fidelity.hpp"
#include "hamlearn/model.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"
#include "hamlearn/signs.hpp"
#include "hamlearn/sparse_decode.hpp"

namespace hamlearn {

/// Parameters of one learning run. Zero means "derive the default".
struct LearnConfig {
  int b = 5;
  int C = 3;
  int P1 = 0;
  int repetition = 1;
  double t0 = 0.0;
  int num_times = 5;
  int fit_order = 4;
  InterceptMode intercept = InterceptMode::kFitted;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  double nu = 0.0;
  double nu_floor = 1e-4;
  int max_rounds = 32;
  double eps0 = 0.01;
  int m = 0;
  double t1 = 0.0;
  int stage2_times = 5;
  int slope_degree = 1;
  int vote_blocks = 0;
  double gap_guard = 0.0;
  double solver_tol = 1e-10;
  int solver_max_iter = 50000;
  int max_sequence_length = 1024;
  int threads = 1;
  std::uint64_t seed = 0;
  bool keep_trace = false;
  bool keep_fit_diagnostics = false;
  bool keep_equations = false;

  int resolved_P1(int n) const { return P1 > 0 ? P1 : std::max(8, 2 * n); }

  BinDesign bin_design(int n) const { return {n, b, C, resolved_P1(n), repetition}; }

  double resolved_gap_guard() const { return gap_guard > 0 ? gap_guard : std::sqrt(eps0) / 2.0; }

  /// Unit time of the stage-1 grid: (sigma_f)^{1/4}/2 when noise is known, else 0.05.
  double resolved_t0(double sigma_f) const {
    if (t0 > 0) return t0;
    if (sigma_f > 0) return std::clamp(0.5 * std::pow(sigma_f, 0.25), 0.01, 0.5);
    return 0.05;
  }

  /// Unit time of the stage-2 grid: sqrt(sigma_reg * tau) with sigma_reg of the
  /// default 5-point linear fit, floored for noiseless runs.
  double resolved_t1(double tau) const {
    if (t1 > 0) return t1;
    return std::clamp(std::sqrt(0.6 * tau), 0.01, 0.2);
  }

  /// Dense supports (at least 1/16 of all labels) get 5 voting blocks.
  int resolved_vote_blocks(int n, std::size_t s) const {
    if (vote_blocks > 0) return vote_blocks;
    const double labels = std::ldexp(1.0, 2 * n);
    return static_cast<double>(s) * 16.0 >= labels ? 5 : 1;
  }

  void validate(int n) const {
    bin_design(n).validate();
    if (!(t0 >= 0) || !(t1 >= 0)) throw UsageError("t0 and t1 must be >= 0");
    if (fit_order != 2 && fit_order != 4 && fit_order != 6) throw UsageError("fit_order must be 2, 4 or 6");
    if (num_times < fit_order / 2 + (intercept == InterceptMode::kFitted ? 1 : 0))
      throw UsageError("num_times too small for fit_order");
    if (!(gamma1 > 0 && gamma1 < 1) || !(gamma2 > 0 && gamma2 < 1)) throw UsageError("gamma1, gamma2 must be in (0, 1)");
    if (!(nu >= 0) || !(nu_floor > 0)) throw UsageError("nu must be >= 0 and nu_floor > 0");
    if (max_rounds < 1) throw UsageError("max_rounds must be >= 1");
    if (!(eps0 >= 0)) throw UsageError("eps0 must be >= 0");
    if (m < 0) throw UsageError("m must be >= 0");
    if (stage2_times < 2) throw UsageError("stage2_times must be >= 2");
    if (slope_degree != 1 && slope_degree != 2) throw UsageError("slope_degree must be 1 or 2");
    if (vote_blocks < 0 || (vote_blocks > 0 && vote_blocks % 2 == 0)) throw UsageError("vote_blocks must be odd");
    if (!(gap_guard >= 0)) throw UsageError("gap_guard must be >= 0");
    if (solver_max_iter < 1 || !(solver_tol > 0)) throw UsageError("invalid solver settings");
    if (max_sequence_length < 1) throw UsageError("max_sequence_length must be >= 1");
    if (threads < 1) throw UsageError("threads must be >= 1");
  }
};

struct StageOneReport {
  double t0 = 0.0;
  int fit_order = 0;
  double nu = 0.0;
  double noise_gain = 0.0;
  double regression_constant = 0.0;
  std::vector<RecoveredRate> recovered;
  std::optional<double> identity_rate;
  /// identity rate + sum of kept rates; ideally 0.
  double normalization_residual = 0.0;
  int dropped = 0;
  int rounds = 0;
  int stuck_multitons = 0;
  int conflicts = 0;
  int duplicates = 0;
  int positive_flags = 0;
  std::uint64_t distinct_labels = 0;
};

struct StageTwoReport {
  int blocks = 0;
  int m = 0;
  double t1 = 0.0;
  double epsilon = 0.0;
  double epsilon_formula = 0.0;
  int solver_iterations = 0;
  bool solver_fallback = false;
  bool solver_unconverged = false;
  std::vector<PauliLabel> low_confidence;
  std::vector<double> x_star;
};

struct EstimationResult {
  SparseHamiltonian estimate;
  std::optional<SparseHamiltonian> true_reference;
  double e1 = std::numeric_limits<double>::quiet_NaN();
  double ea = std::numeric_limits<double>::quiet_NaN();
  bool support_exact = false;
  int sign_flips = 0;
  QueryCounts queries;
  StageOneReport stage1;
  StageTwoReport stage2;
  std::vector<std::string> diagnostics;
  bool flagged = false;
  LearnConfig config;
  std::vector<TraceEvent> trace;
  std::vector<FitDiagnostic> fit_rows;
  std::vector<ProcessEquationSystem> equations;
};

namespace detail {
inline std::map<PauliLabel, double> coefficient_map(const SparseHamiltonian& h) {
  std::map<PauliLabel, double> m;
  for (const auto& t : h.terms()) m[t.label] = t.coeff;
  return m;
}

inline double l1_distance(const SparseHamiltonian& s, const SparseHamiltonian& e) {
  if (s.num_qubits() != e.num_qubits()) throw UsageError("Hamiltonians have different qubit counts");
  auto a = coefficient_map(s);
  auto b = coefficient_map(e);
  double d = 0;
  for (const auto& [k, v] : a) d += std::abs(v - (b.count(k) ? b[k] : 0.0));
  for (const auto& [k, v] : b)
    if (!a.count(k)) d += std::abs(v);
  return d;
}
}  // namespace detail

/// ||s - s_hat||_1 / ||s||_1
inline double relative_error(const SparseHamiltonian& s, const SparseHamiltonian& est) {
  const double norm = s.l1_norm();
  if (norm == 0) throw UsageError("reference Hamiltonian is zero");
  return detail::l1_distance(s, est) / norm;
}

/// ||s - s_hat||_1 / ||s||_0
inline double average_error(const SparseHamiltonian& s, const SparseHamiltonian& est) {
  std::size_t nnz = 0;
  for (const auto& t : s.terms()) nnz += t.coeff != 0;
  if (nnz == 0) throw UsageError("reference Hamiltonian is zero");
  return detail::l1_distance(s, est) / static_cast<double>(nnz);
}

/// Per-bin noise scale from the fidelity noise, the fit's c2 gain and B.
inline double bin_noise_scale(double sigma_f, double noise_gain, int b, double floor) {
  return std::max(floor, sigma_f * noise_gain / std::sqrt(std::ldexp(1.0, b)));
}

/// Stage 1 then stage 2 against a simulated oracle.
inline EstimationResult learn(const EvolutionOracle& oracle, const LearnConfig& cfg,
                              std::optional<SparseHamiltonian> reference = std::nullopt) {
  const int n = oracle.num_qubits();
  cfg.validate(n);
  EstimationResult res;
  res.config = cfg;
  res.true_reference = std::move(reference);
  oracle.reset_meter();
  const auto& noise = oracle.noise();
  const bool circuit = noise.circuit_mode();

  // ---- stage 1 ----
  FitOptions fit;
  fit.order = cfg.fit_order;
  fit.num_times = cfg.num_times;
  fit.intercept = cfg.intercept;
  fit.t0 = cfg.resolved_t0(circuit ? 0.0 : noise.fidelity_noise_sigma);
  std::unique_ptr<SecondOrderSource> source;
  if (circuit) {
    source = std::make_unique<CircuitSecondOrderSource>(oracle, fit, derive_seed(cfg.seed, "stage1"),
                                                        cfg.max_sequence_length);
  } else {
    source = std::make_unique<AnalyticSecondOrderSource>(oracle, fit, derive_seed(cfg.seed, "stage1"));
  }
  source->keep_diagnostics(cfg.keep_fit_diagnostics);

  auto& s1 = res.stage1;
  s1.t0 = fit.t0;
  s1.fit_order = fit.order;
  s1.noise_gain = source->noise_gain();
  s1.regression_constant = source->regression_constant();
  if (cfg.nu > 0) {
    s1.nu = cfg.nu;
  } else if (circuit) {
    // spread of repeated estimates of one label stands in for the unknown noise
    std::vector<double> reps;
    const PauliLabel probe = PauliLabel::single(n, 0, 3);
    for (int r = 0; r < 5; ++r) {
      CircuitSecondOrderSource rep(oracle, fit, derive_seed(cfg.seed, "nu-probe", static_cast<std::uint64_t>(r)),
                                   cfg.max_sequence_length);
      reps.push_back(rep(probe));
    }
    double mean = 0, var = 0;
    for (double v : reps) mean += v;
    mean /= static_cast<double>(reps.size());
    for (double v : reps) var += (v - mean) * (v - mean);
    var /= static_cast<double>(reps.size() - 1);
    s1.nu = bin_noise_scale(std::sqrt(var), 1.0, cfg.b, cfg.nu_floor);
  } else {
    s1.nu = bin_noise_scale(noise.fidelity_noise_sigma, s1.noise_gain, cfg.b, cfg.nu_floor);
  }

  const BinDesign design = cfg.bin_design(n);
  SecondOrderSource* src = source.get();
  FidelityTable table(n, [src](const PauliLabel& x) { return (*src)(x); }, cfg.threads);
  auto groups = build_bins(design, derive_seed(cfg.seed, "bins"), table);
  s1.distinct_labels = table.size() > 0 ? table.size() - 1 : 0;
  auto peeled = peel(groups, {s1.nu, cfg.gamma1, cfg.gamma2}, cfg.max_rounds, cfg.keep_trace);
  s1.recovered = peeled.rates;
  s1.rounds = peeled.rounds;
  s1.stuck_multitons = peeled.stuck_multitons;
  s1.conflicts = peeled.conflicts;
  s1.duplicates = peeled.duplicates;
  s1.positive_flags = source->positive_flags();
  for (auto& d : peeled.diagnostics) res.diagnostics.push_back(d);
  if (peeled.conflicts > 0) res.flagged = true;
  if (source->degenerate_labels() > 0)
    res.diagnostics.push_back(std::to_string(source->degenerate_labels()) + " labels had a degenerate reference fidelity");
  if (cfg.keep_trace) res.trace = std::move(peeled.trace);
  if (cfg.keep_fit_diagnostics) res.fit_rows = source->diagnostics();

  const double keep_threshold = std::max(2.0 * s1.nu, cfg.eps0 / 2.0);
  std::vector<std::pair<PauliLabel, double>> kept;
  double rate_sum = 0;
  for (const auto& r : peeled.rates) {
    if (r.label.is_identity()) {
      s1.identity_rate = r.value;
      continue;
    }
    if (std::abs(r.value) < keep_threshold || r.value <= 0) {
      ++s1.dropped;
      continue;
    }
    kept.emplace_back(r.label, r.value);
    rate_sum += r.value;
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (s1.identity_rate) {
    s1.normalization_residual = *s1.identity_rate + rate_sum;
    const double allowed = 4.0 * s1.nu * std::sqrt(static_cast<double>(kept.size() + 1)) + cfg.eps0 / 2.0;
    if (std::abs(s1.normalization_residual) > allowed)
      res.diagnostics.push_back("normalization check failed: residual " + std::to_string(s1.normalization_residual));
  } else {
    res.diagnostics.push_back("identity rate was not recovered");
  }
  if (s1.stuck_multitons > 0)
    res.diagnostics.push_back(std::to_string(s1.stuck_multitons) + " bin sets still multi-ton after peeling");

  // ---- stage 2 ----
  std::vector<PauliLabel> support;
  std::vector<double> magnitude;
  for (const auto& [label, value] : kept) {
    support.push_back(label);
    magnitude.push_back(std::sqrt(std::max(value, 0.0)));
  }
  auto& s2 = res.stage2;
  std::vector<int> signs(support.size(), 1);
  if (support.empty()) {
    res.diagnostics.push_back("stage 1 recovered an empty support");
    res.flagged = true;
  } else {
    const int blocks = cfg.resolved_vote_blocks(n, support.size());
    const int m = cfg.m > 0 ? cfg.m : 8 * static_cast<int>(support.size());
    s2.blocks = blocks;
    s2.m = std::max(m, static_cast<int>(support.size()));
    s2.t1 = cfg.resolved_t1(noise.spam_tau);
    EquationOptions eo{s2.m, s2.t1, cfg.stage2_times, noise.spam_tau, 10000, cfg.slope_degree};
    const double guard = cfg.resolved_gap_guard();
    std::vector<std::vector<int>> block_signs;
    for (int blk = 0; blk < blocks; ++blk) {
      Rng rng = make_rng(cfg.seed, "stage2", static_cast<std::uint64_t>(blk));
      Rng noise_rng = make_rng(cfg.seed, "stage2-noise", static_cast<std::uint64_t>(blk));
      auto sys = build_equations(
          support, eo,
          [&](const PauliEigenstate& st, double t, const PauliLabel& mm) {
            return oracle.expectation_query(st, t, mm, noise_rng);
          },
          rng);
      auto sol = solve_bpdn(sys, cfg.solver_tol, cfg.solver_max_iter);
      s2.solver_iterations += sol.iterations;
      if (sol.used_fallback) s2.solver_fallback = true;
      if (!sol.converged) s2.solver_unconverged = true;
      auto est = extract_signs(sol.x, guard);
      Eigen::VectorXd ls = detail::least_squares(sys.phi, sys.observations);
      std::vector<int> bs;
      for (std::size_t i = 0; i < est.size(); ++i) {
        int sg = est[i].sign;
        if (est[i].low_confidence) {
          sg = ls(static_cast<Eigen::Index>(i)) < 0 ? -1 : 1;
          if (std::find(s2.low_confidence.begin(), s2.low_confidence.end(), support[i]) == s2.low_confidence.end())
            s2.low_confidence.push_back(support[i]);
        }
        bs.push_back(sg);
      }
      if (blk == 0) {
        s2.epsilon = sys.epsilon;
        s2.epsilon_formula = sys.epsilon_formula;
        s2.x_star.assign(sol.x.data(), sol.x.data() + sol.x.size());
      }
      block_signs.push_back(std::move(bs));
      if (cfg.keep_equations) res.equations.push_back(std::move(sys));
    }
    signs = majority_vote(block_signs);
    if (s2.solver_unconverged) {
      res.diagnostics.push_back("l1 solver did not converge" + std::string(s2.solver_fallback ? "; least squares used" : ""));
      res.flagged = true;
    }
    if (!s2.low_confidence.empty())
      res.diagnostics.push_back(std::to_string(s2.low_confidence.size()) +
                                " signs below the gap guard; least-squares sign used");
    const double window = s2.t1 * s2.t1 * cfg.eps0 / std::max(noise.spam_tau * noise.spam_tau, 1e-300);
    if (noise.spam_tau > 0 && s2.m > window)
      res.diagnostics.push_back("m exceeds the t1^2 eps0 / tau^2 window");
  }

  std::vector<PauliTerm> terms;
  for (std::size_t i = 0; i < support.size(); ++i) terms.push_back({support[i], signs[i] * magnitude[i]});
  res.estimate = SparseHamiltonian(n, std::move(terms));
  res.queries = oracle.meter_snapshot();

  if (res.true_reference) {
    const auto& ref = *res.true_reference;
    res.e1 = relative_error(ref, res.estimate);
    res.ea = average_error(ref, res.estimate);
    res.support_exact = ref.support() == res.estimate.support();
    for (const auto& t : res.estimate.terms()) {
      const double c = ref.coefficient(t.label);
      if (c != 0 && (c > 0) != (t.coeff > 0)) ++res.sign_flips;
    }
  }
  return res;
}

struct SweepRow {
  int b = 0;
  int trials = 0;
  double q25 = 0, q50 = 0, q75 = 0;
  double mean_queries = 0;
  std::uint64_t query_bound = 0;
  double stuck_fraction = 0;
  double exact_fraction = 0;
  std::vector<double> e1;
};

struct SweepTable {
  int n = 0;
  std::vector<SweepRow> rows;
  std::optional<int> threshold_b;
};

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

using HamiltonianFactory = std::function<SparseHamiltonian(std::uint64_t trial_seed)>;

/// Runs learn for every (b, trial); trial t uses the same Hamiltonian and
/// protocol seed at every b.
inline SweepTable threshold_sweep(const HamiltonianFactory& factory, const NoiseConfig& noise,
                                  const std::vector<int>& b_values, int trials, const LearnConfig& base) {
  if (trials < 1) throw UsageError("trials must be >= 1");
  if (b_values.empty()) throw UsageError("empty b range");
  SweepTable table;
  std::vector<SparseHamiltonian> hams;
  for (int t = 0; t < trials; ++t) hams.push_back(factory(derive_seed(base.seed, "sweep-model", static_cast<std::uint64_t>(t))));
  table.n = hams.front().num_qubits();
  for (int b : b_values)
    if (b < 1 || b >= 2 * table.n) throw UsageError("b range must lie in [1, 2n)");
  std::vector<std::unique_ptr<EvolutionOracle>> oracles;
  for (const auto& h : hams) oracles.push_back(std::make_unique<EvolutionOracle>(h, noise));

  for (int b : b_values) {
    SweepRow row;
    row.b = b;
    row.trials = trials;
    std::vector<EstimationResult> results(static_cast<std::size_t>(trials));
    auto run = [&](int t) {
      LearnConfig cfg = base;
      cfg.b = b;
      cfg.threads = 1;
      cfg.seed = derive_seed(base.seed, "sweep-trial", static_cast<std::uint64_t>(t));
      results[static_cast<std::size_t>(t)] = learn(*oracles[static_cast<std::size_t>(t)], cfg, hams[static_cast<std::size_t>(t)]);
    };
    const int workers = std::min(base.threads, trials);
    if (workers <= 1) {
      for (int t = 0; t < trials; ++t) run(t);
    } else {
      std::vector<std::thread> pool;
      std::exception_ptr err;
      std::mutex mu;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (int t = w; t < trials; t += workers) {
            try {
              run(t);
            } catch (...) {
              std::lock_guard lock(mu);
              if (!err) err = std::current_exception();
            }
          }
        });
      for (auto& th : pool) th.join();
      if (err) std::rethrow_exception(err);
    }
    double queries = 0;
    int stuck = 0, exact = 0;
    for (const auto& r : results) {
      row.e1.push_back(r.e1);
      queries += static_cast<double>(r.queries.distinct_fidelity_indices);
      stuck += r.stage1.stuck_multitons > 0;
      exact += r.support_exact && r.sign_flips == 0;
    }
    row.q25 = quantile(row.e1, 0.25);
    row.q50 = quantile(row.e1, 0.5);
    row.q75 = quantile(row.e1, 0.75);
    row.mean_queries = queries / trials;
    LearnConfig at_b = base;
    at_b.b = b;
    row.query_bound = at_b.bin_design(table.n).query_bound();
    row.stuck_fraction = static_cast<double>(stuck) / trials;
    row.exact_fraction = static_cast<double>(exact) / trials;
    table.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const auto& prev = table.rows[i - 1];
    const auto& cur = table.rows[i];
    if (cur.b == prev.b + 1 && cur.q50 * 10.0 <= prev.q50) {
      table.threshold_b = cur.b;
      break;
    }
  }
  return table;
}

}  // namespace hamlearn
