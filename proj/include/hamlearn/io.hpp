#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hamlearn/errors.hpp"
#include "hamlearn/model.hpp"
#include "hamlearn/pipeline.hpp"

namespace hamlearn::io {

using json = nlohmann::json;

// ---- experiment configuration ----

/// Everything a CLI command can be told, flattened into one document.
struct ExperimentConfig {
  std::string model = "tfim";
  std::optional<int> n;
  int sparsity = 0;
  double coeff_lo = 0.1;
  double coeff_hi = 1.0;
  std::optional<std::uint64_t> model_seed;
  std::string model_file;

  NoiseConfig noise;
  double lambda_uniform = 0.0;

  LearnConfig learn;

  int b_min = 2;
  int b_max = 7;
  int trials = 20;

  std::string out;
  std::string trace;
  std::string fit_csv;
  std::string equations_out;
  std::string input;

  ExperimentConfig() { learn.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

  std::uint64_t resolved_model_seed() const { return model_seed ? *model_seed : learn.seed; }
};

enum class KeyType { kInt, kUint, kReal, kBool, kString };

inline const char* to_string(KeyType t) {
  switch (t) {
    case KeyType::kInt: return "int";
    case KeyType::kUint: return "uint64";
    case KeyType::kReal: return "real";
    case KeyType::kBool: return "bool";
    default: return "string";
  }
}

struct KeySpec {
  std::string key;
  KeyType type;
  std::string default_text;
  std::string help;
  std::function<void(ExperimentConfig&, const json&)> set;
};

namespace detail {
inline std::int64_t as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) throw UsageError("config key '" + key + "' expects an integer");
  return v.get<std::int64_t>();
}
inline std::uint64_t as_uint(const std::string& key, const json& v) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw UsageError("config key '" + key + "' expects a nonnegative integer");
  return v.get<std::uint64_t>();
}
inline double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) throw UsageError("config key '" + key + "' expects a number");
  return v.get<double>();
}
inline bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) throw UsageError("config key '" + key + "' expects true or false");
  return v.get<bool>();
}
inline std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) throw UsageError("config key '" + key + "' expects a string");
  return v.get<std::string>();
}
inline std::string one_of(const std::string& key, const json& v, std::initializer_list<const char*> allowed) {
  auto s = as_string(key, v);
  for (const char* a : allowed)
    if (s == a) return s;
  std::string msg = "config key '" + key + "' must be one of:";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw UsageError(msg);
}
inline int narrow(const std::string& key, std::int64_t v) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw UsageError("config key '" + key + "' is out of range");
  return static_cast<int>(v);
}
}  // namespace detail

/// The single table behind config validation, flag parsing and help text.
inline const std::vector<KeySpec>& schema() {
  using detail::as_bool;
  using detail::as_int;
  using detail::as_real;
  using detail::as_string;
  using detail::as_uint;
  using detail::narrow;
  using C = ExperimentConfig;
  using J = json;
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    auto add = [&](std::string key, KeyType type, std::string def, std::string help,
                   std::function<void(C&, const J&, const std::string&)> f) {
      const std::string k = key;
      t.push_back({std::move(key), type, std::move(def), std::move(help),
                   [f, k](C& c, const J& v) { f(c, v, k); }});
    };
    // model
    add("model", KeyType::kString, "tfim", "Hamiltonian source: tfim | random | file",
        [](C& c, const J& v, const std::string& k) { c.model = detail::one_of(k, v, {"tfim", "random", "file"}); });
    add("n", KeyType::kInt, "(required for tfim/random)", "qubit count",
        [](C& c, const J& v, const std::string& k) { c.n = narrow(k, as_int(k, v)); });
    add("sparsity", KeyType::kInt, "2n", "number of terms for --model random",
        [](C& c, const J& v, const std::string& k) { c.sparsity = narrow(k, as_int(k, v)); });
    add("coeff_lo", KeyType::kReal, "0.1", "smallest coefficient magnitude of generated models",
        [](C& c, const J& v, const std::string& k) { c.coeff_lo = as_real(k, v); });
    add("coeff_hi", KeyType::kReal, "1.0", "largest coefficient magnitude of generated models",
        [](C& c, const J& v, const std::string& k) { c.coeff_hi = as_real(k, v); });
    add("model_seed", KeyType::kUint, "seed", "seed of the generated model",
        [](C& c, const J& v, const std::string& k) { c.model_seed = as_uint(k, v); });
    add("model_file", KeyType::kString, "", "Hamiltonian text file for --model file",
        [](C& c, const J& v, const std::string& k) { c.model_file = as_string(k, v); });
    // noise
    add("fidelity_noise_sigma", KeyType::kReal, "0", "Gaussian std added to each fidelity query",
        [](C& c, const J& v, const std::string& k) { c.noise.fidelity_noise_sigma = as_real(k, v); });
    add("spam_sigma", KeyType::kReal, "0", "Gaussian std on stage-2 expectation values",
        [](C& c, const J& v, const std::string& k) { c.noise.spam_sigma = as_real(k, v); });
    add("spam_tau", KeyType::kReal, "0", "bound on any SPAM deviation of an expectation value",
        [](C& c, const J& v, const std::string& k) { c.noise.spam_tau = as_real(k, v); });
    add("spam_mode", KeyType::kString, "additive", "additive | structural",
        [](C& c, const J& v, const std::string& k) {
          c.noise.spam_mode =
              detail::one_of(k, v, {"additive", "structural"}) == "additive" ? SpamMode::kAdditive : SpamMode::kStructural;
        });
    add("spam_flip_prob", KeyType::kReal, "0", "per-qubit flip probability of structural SPAM",
        [](C& c, const J& v, const std::string& k) { c.noise.spam_flip_prob = as_real(k, v); });
    add("spam_prefactor", KeyType::kReal, "1", "circuit mode: scale of the prepared state's non-identity part",
        [](C& c, const J& v, const std::string& k) { c.noise.spam_prefactor = as_real(k, v); });
    add("lambda_uniform", KeyType::kReal, "0 (off)", "circuit mode: uniform Pauli fidelity of the gate noise",
        [](C& c, const J& v, const std::string& k) { c.lambda_uniform = as_real(k, v); });
    add("shots", KeyType::kInt, "0 (off)", "circuit mode: sequences per length",
        [](C& c, const J& v, const std::string& k) {
          const int s = narrow(k, as_int(k, v));
          if (s > 0) c.noise.shots = s;
          else c.noise.shots.reset();
        });
    // stage 1
    add("b", KeyType::kInt, "5", "bin exponent, B = 2^b bin sets per group",
        [](C& c, const J& v, const std::string& k) { c.learn.b = narrow(k, as_int(k, v)); });
    add("C", KeyType::kInt, "3", "number of subsampling groups",
        [](C& c, const J& v, const std::string& k) { c.learn.C = narrow(k, as_int(k, v)); });
    add("P1", KeyType::kInt, "max(8, 2n)", "random offsets per group",
        [](C& c, const J& v, const std::string& k) { c.learn.P1 = narrow(k, as_int(k, v)); });
    add("repetition", KeyType::kInt, "1", "index-code repetition factor: 1, 3 or 5",
        [](C& c, const J& v, const std::string& k) { c.learn.repetition = narrow(k, as_int(k, v)); });
    add("t0", KeyType::kReal, "auto", "unit time of the stage-1 grid",
        [](C& c, const J& v, const std::string& k) { c.learn.t0 = as_real(k, v); });
    add("num_times", KeyType::kInt, "5", "stage-1 evolution times i*t0, i = 1..num_times",
        [](C& c, const J& v, const std::string& k) { c.learn.num_times = narrow(k, as_int(k, v)); });
    add("fit_order", KeyType::kInt, "4", "highest even power in the fidelity fit: 2, 4 or 6",
        [](C& c, const J& v, const std::string& k) { c.learn.fit_order = narrow(k, as_int(k, v)); });
    add("intercept", KeyType::kString, "fitted", "fitted | pinned (f(0) = 1)",
        [](C& c, const J& v, const std::string& k) {
          c.learn.intercept =
              detail::one_of(k, v, {"fitted", "pinned"}) == "fitted" ? InterceptMode::kFitted : InterceptMode::kPinned;
        });
    add("gamma1", KeyType::kReal, "0.5", "zero-ton threshold slack",
        [](C& c, const J& v, const std::string& k) { c.learn.gamma1 = as_real(k, v); });
    add("gamma2", KeyType::kReal, "0.5", "single-ton threshold slack",
        [](C& c, const J& v, const std::string& k) { c.learn.gamma2 = as_real(k, v); });
    add("nu", KeyType::kReal, "auto", "per-bin noise scale",
        [](C& c, const J& v, const std::string& k) { c.learn.nu = as_real(k, v); });
    add("nu_floor", KeyType::kReal, "1e-4", "lower bound of the automatic noise scale",
        [](C& c, const J& v, const std::string& k) { c.learn.nu_floor = as_real(k, v); });
    add("max_rounds", KeyType::kInt, "32", "peeling passes before giving up",
        [](C& c, const J& v, const std::string& k) { c.learn.max_rounds = narrow(k, as_int(k, v)); });
    add("eps0", KeyType::kReal, "0.01", "declared gap: every s_a^2 >= eps0",
        [](C& c, const J& v, const std::string& k) { c.learn.eps0 = as_real(k, v); });
    add("max_sequence_length", KeyType::kInt, "1024", "circuit mode: longest decay sequence",
        [](C& c, const J& v, const std::string& k) { c.learn.max_sequence_length = narrow(k, as_int(k, v)); });
    // stage 2
    add("m", KeyType::kInt, "8s", "process equations per voting block",
        [](C& c, const J& v, const std::string& k) { c.learn.m = narrow(k, as_int(k, v)); });
    add("t1", KeyType::kReal, "auto", "unit time of the stage-2 grid",
        [](C& c, const J& v, const std::string& k) { c.learn.t1 = as_real(k, v); });
    add("stage2_times", KeyType::kInt, "5", "stage-2 evolution times i*t1",
        [](C& c, const J& v, const std::string& k) { c.learn.stage2_times = narrow(k, as_int(k, v)); });
    add("slope_degree", KeyType::kInt, "1", "polynomial degree of the stage-2 slope fit: 1 or 2",
        [](C& c, const J& v, const std::string& k) { c.learn.slope_degree = narrow(k, as_int(k, v)); });
    add("vote_blocks", KeyType::kInt, "auto (5 dense, else 1)", "odd number of sign-voting blocks",
        [](C& c, const J& v, const std::string& k) { c.learn.vote_blocks = narrow(k, as_int(k, v)); });
    add("gap_guard", KeyType::kReal, "sqrt(eps0)/2", "l1 entries below this take the least-squares sign",
        [](C& c, const J& v, const std::string& k) { c.learn.gap_guard = as_real(k, v); });
    add("solver_tol", KeyType::kReal, "1e-10", "l1 solver tolerance",
        [](C& c, const J& v, const std::string& k) { c.learn.solver_tol = as_real(k, v); });
    add("solver_max_iter", KeyType::kInt, "50000", "l1 solver iteration cap",
        [](C& c, const J& v, const std::string& k) { c.learn.solver_max_iter = narrow(k, as_int(k, v)); });
    // run
    add("seed", KeyType::kUint, "0", "master seed",
        [](C& c, const J& v, const std::string& k) { c.learn.seed = as_uint(k, v); });
    add("threads", KeyType::kInt, "available cores", "worker threads",
        [](C& c, const J& v, const std::string& k) { c.learn.threads = narrow(k, as_int(k, v)); });
    add("keep_fit_diagnostics", KeyType::kBool, "false", "collect per-label fit rows (written by fit_csv)",
        [](C& c, const J& v, const std::string& k) { c.learn.keep_fit_diagnostics = as_bool(k, v); });
    // sweep
    add("b_min", KeyType::kInt, "2", "sweep-b: smallest b",
        [](C& c, const J& v, const std::string& k) { c.b_min = narrow(k, as_int(k, v)); });
    add("b_max", KeyType::kInt, "7", "sweep-b: largest b",
        [](C& c, const J& v, const std::string& k) { c.b_max = narrow(k, as_int(k, v)); });
    add("trials", KeyType::kInt, "20", "sweep-b: trials per b",
        [](C& c, const J& v, const std::string& k) { c.trials = narrow(k, as_int(k, v)); });
    // files
    add("out", KeyType::kString, "stdout", "main output file",
        [](C& c, const J& v, const std::string& k) { c.out = as_string(k, v); });
    add("trace", KeyType::kString, "", "decoder trace, JSON lines",
        [](C& c, const J& v, const std::string& k) { c.trace = as_string(k, v); });
    add("fit_csv", KeyType::kString, "", "per-label fit diagnostics CSV",
        [](C& c, const J& v, const std::string& k) { c.fit_csv = as_string(k, v); });
    add("equations_out", KeyType::kString, "", "dump of the first stage-2 equation system (JSON)",
        [](C& c, const J& v, const std::string& k) { c.equations_out = as_string(k, v); });
    add("input", KeyType::kString, "", "decode-only: f2 table; signs-only: equation dump",
        [](C& c, const J& v, const std::string& k) { c.input = as_string(k, v); });
    return t;
  }();
  return table;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

inline void apply(ExperimentConfig& c, const std::string& key, const json& value) {
  const auto* spec = find_key(key);
  if (!spec) throw UsageError("unknown config key '" + key + "'");
  spec->set(c, value);
}

/// Applies every key of a JSON object; unknown keys are rejected.
inline void apply(ExperimentConfig& c, const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) apply(c, key, value);
}

/// Converts flag text to the JSON value the schema expects.
inline json flag_value(const KeySpec& spec, const std::string& text) {
  auto fail = [&] { return UsageError("flag --" + spec.key + " expects " + to_string(spec.type) + ", got '" + text + "'"); };
  switch (spec.type) {
    case KeyType::kInt:
    case KeyType::kUint: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) {
        std::uint64_t u = 0;
        auto [p2, ec2] = std::from_chars(text.data(), text.data() + text.size(), u);
        if (ec2 != std::errc() || p2 != text.data() + text.size()) throw fail();
        return json(u);
      }
      return json(v);
    }
    case KeyType::kReal: {
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) throw fail();
      return json(v);
    }
    case KeyType::kBool:
      if (text == "true" || text == "1") return json(true);
      if (text == "false" || text == "0") return json(false);
      throw fail();
    default:
      return json(text);
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Key table for help output.
inline std::string schema_help() {
  std::ostringstream os;
  os << "Config keys (JSON object; each is also a --flag that overrides the file):\n";
  for (const auto& k : schema()) {
    std::string head = "  " + k.key + " <" + to_string(k.type) + ">";
    if (head.size() < 32) head.resize(32, ' ');
    os << head << k.help << " [default: " << k.default_text << "]\n";
  }
  return os.str();
}

/// Builds the Hamiltonian the config describes.
inline SparseHamiltonian make_model(const ExperimentConfig& c) {
  if (c.model == "file") {
    if (c.model_file.empty()) throw UsageError("--model file needs model_file");
    return read_hamiltonian(c.model_file);
  }
  if (!c.n) throw UsageError("--model " + c.model + " needs n");
  const Interval range{c.coeff_lo, c.coeff_hi};
  if (c.model == "tfim") return tfim_random(*c.n, range, c.resolved_model_seed());
  const int s = c.sparsity > 0 ? c.sparsity : 2 * *c.n;
  return random_sparse(*c.n, s, c.learn.eps0, range, c.resolved_model_seed());
}

/// Noise settings with the circuit-mode lambda expanded for n qubits.
inline NoiseConfig make_noise(const ExperimentConfig& c, int n) {
  NoiseConfig nc = c.noise;
  if (c.lambda_uniform > 0) nc.lambda_fidelities = NoiseConfig::uniform_lambda(n, c.lambda_uniform);
  nc.validate(n);
  return nc;
}

inline json config_json(const ExperimentConfig& c) {
  json j;
  j["model"] = c.model;
  if (c.n) j["n"] = *c.n;
  j["seed"] = c.learn.seed;
  j["model_seed"] = c.resolved_model_seed();
  const auto& l = c.learn;
  j["b"] = l.b;
  j["C"] = l.C;
  j["P1"] = l.P1;
  j["repetition"] = l.repetition;
  j["t0"] = l.t0;
  j["num_times"] = l.num_times;
  j["fit_order"] = l.fit_order;
  j["intercept"] = l.intercept == InterceptMode::kFitted ? "fitted" : "pinned";
  j["gamma1"] = l.gamma1;
  j["gamma2"] = l.gamma2;
  j["nu"] = l.nu;
  j["eps0"] = l.eps0;
  j["m"] = l.m;
  j["t1"] = l.t1;
  j["vote_blocks"] = l.vote_blocks;
  j["fidelity_noise_sigma"] = c.noise.fidelity_noise_sigma;
  j["spam_sigma"] = c.noise.spam_sigma;
  j["spam_tau"] = c.noise.spam_tau;
  return j;
}

// ---- serialization ----

inline json to_json(const SparseHamiltonian& h) {
  json terms = json::array();
  for (const auto& t : h.terms()) terms.push_back({{"pauli", t.label.to_string()}, {"coeff", t.coeff}});
  return {{"n", h.num_qubits()}, {"terms", terms}};
}

inline SparseHamiltonian hamiltonian_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<PauliTerm> terms;
    for (const auto& t : j.at("terms")) terms.push_back({PauliLabel::parse(t.at("pauli").get<std::string>()), t.at("coeff").get<double>()});
    return SparseHamiltonian(n, std::move(terms));
  } catch (const json::exception& e) {
    throw ParseError(std::string("Hamiltonian JSON: ") + e.what());
  }
}

inline json to_json(const TraceEvent& e) {
  json j{{"round", e.round}, {"group", e.group}, {"bin", e.bin}, {"kind", to_string(e.kind)}, {"T", e.T},
         {"accepted", e.accepted}};
  j["index"] = e.index ? json(e.index->to_string()) : json(nullptr);
  j["value"] = e.value ? json(*e.value) : json(nullptr);
  return j;
}

inline void write_trace(std::ostream& os, const std::vector<TraceEvent>& events) {
  for (const auto& e : events) os << to_json(e).dump() << '\n';
}

inline json to_json(const RecoveredRate& r) {
  return {{"pauli", r.label.to_string()}, {"value", r.value}, {"group", r.group}, {"bin", r.bin}, {"round", r.round}};
}

inline json to_json(const EstimationResult& r) {
  json j;
  j["estimate"] = to_json(r.estimate);
  if (r.true_reference) {
    j["reference"] = to_json(*r.true_reference);
    j["e1"] = r.e1;
    j["ea"] = r.ea;
    j["support_exact"] = r.support_exact;
    j["sign_flips"] = r.sign_flips;
  }
  j["queries"] = {{"fidelity_queries", r.queries.fidelity_queries},
                  {"expectation_queries", r.queries.expectation_queries},
                  {"distinct_fidelity_indices", r.queries.distinct_fidelity_indices}};
  const auto& s1 = r.stage1;
  json rec = json::array();
  for (const auto& x : s1.recovered) rec.push_back(to_json(x));
  j["stage1"] = {{"t0", s1.t0},
                 {"fit_order", s1.fit_order},
                 {"nu", s1.nu},
                 {"noise_gain", s1.noise_gain},
                 {"regression_constant", s1.regression_constant},
                 {"recovered", rec},
                 {"identity_rate", s1.identity_rate ? json(*s1.identity_rate) : json(nullptr)},
                 {"normalization_residual", s1.normalization_residual},
                 {"dropped", s1.dropped},
                 {"rounds", s1.rounds},
                 {"stuck_multitons", s1.stuck_multitons},
                 {"conflicts", s1.conflicts},
                 {"duplicates", s1.duplicates},
                 {"positive_flags", s1.positive_flags},
                 {"distinct_labels", s1.distinct_labels}};
  const auto& s2 = r.stage2;
  json low = json::array();
  for (const auto& x : s2.low_confidence) low.push_back(x.to_string());
  j["stage2"] = {{"blocks", s2.blocks},
                 {"m", s2.m},
                 {"t1", s2.t1},
                 {"epsilon", s2.epsilon},
                 {"epsilon_formula", s2.epsilon_formula},
                 {"solver_iterations", s2.solver_iterations},
                 {"solver_fallback", s2.solver_fallback},
                 {"solver_unconverged", s2.solver_unconverged},
                 {"low_confidence", low},
                 {"x_star", s2.x_star}};
  j["diagnostics"] = r.diagnostics;
  j["flagged"] = r.flagged;
  return j;
}

/// label, estimate, reference rows over the union of supports.
inline void write_result_csv(std::ostream& os, const EstimationResult& r) {
  os << "pauli,estimate,reference\n";
  std::vector<PauliLabel> labels = r.estimate.support();
  if (r.true_reference)
    for (const auto& a : r.true_reference->support())
      if (std::find(labels.begin(), labels.end(), a) == labels.end()) labels.push_back(a);
  std::sort(labels.begin(), labels.end());
  for (const auto& a : labels) {
    os << a.to_string() << ',' << format_double(r.estimate.coefficient(a)) << ',';
    if (r.true_reference) os << format_double(r.true_reference->coefficient(a));
    os << '\n';
  }
}

inline void write_fit_csv(std::ostream& os, const std::vector<FitDiagnostic>& rows) {
  os << "pauli,t,observed,fitted,residual\n";
  for (const auto& d : rows)
    for (std::size_t i = 0; i < d.times.size(); ++i)
      os << d.label.to_string() << ',' << format_double(d.times[i]) << ',' << format_double(d.observed[i]) << ','
         << format_double(d.fitted[i]) << ',' << format_double(d.observed[i] - d.fitted[i]) << '\n';
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  os << "n,b,trials,q25,q50,q75,mean_queries,query_bound,stuck_fraction,exact_fraction\n";
  for (const auto& r : t.rows)
    os << t.n << ',' << r.b << ',' << r.trials << ',' << format_double(r.q25) << ',' << format_double(r.q50) << ','
       << format_double(r.q75) << ',' << format_double(r.mean_queries) << ',' << r.query_bound << ','
       << format_double(r.stuck_fraction) << ',' << format_double(r.exact_fraction) << '\n';
}

inline PauliEigenstate parse_eigenstate(const std::string& s) {
  if (s.empty() || s.size() % 2) throw ParseError("eigenstate '" + s + "' must be sign-letter pairs like +X-Z");
  std::string axes;
  std::uint64_t neg = 0;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    if (s[i] != '+' && s[i] != '-') throw ParseError("eigenstate '" + s + "' has a bad sign");
    if (s[i] == '-') neg |= std::uint64_t{1} << (i / 2);
    axes.push_back(s[i + 1]);
  }
  return PauliEigenstate(PauliLabel::parse(axes), neg);
}

inline json to_json(const ProcessEquationSystem& sys) {
  json j;
  j["n"] = sys.n;
  json sup = json::array();
  for (const auto& a : sys.support) sup.push_back(a.to_string());
  j["support"] = sup;
  json phi = json::array();
  for (Eigen::Index r = 0; r < sys.phi.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < sys.phi.cols(); ++c) row.push_back(sys.phi(r, c));
    phi.push_back(row);
  }
  j["phi"] = phi;
  j["observations"] = std::vector<double>(sys.observations.data(), sys.observations.data() + sys.observations.size());
  j["epsilon"] = sys.epsilon;
  j["epsilon_formula"] = sys.epsilon_formula;
  j["ls_residual"] = sys.ls_residual;
  j["t1"] = sys.t1;
  j["K"] = sys.K;
  j["sigma_reg"] = sys.sigma_reg;
  j["tau"] = sys.tau;
  json settings = json::array();
  for (const auto& s : sys.settings)
    settings.push_back({{"state", s.state.to_string()}, {"measurement", s.measurement.to_string()}});
  j["settings"] = settings;
  return j;
}

inline ProcessEquationSystem equations_from_json(const json& j) {
  try {
    ProcessEquationSystem sys;
    sys.n = j.at("n").get<int>();
    for (const auto& a : j.at("support")) sys.support.push_back(PauliLabel::parse(a.get<std::string>()));
    const auto& phi = j.at("phi");
    const auto rows = static_cast<Eigen::Index>(phi.size());
    const auto cols = static_cast<Eigen::Index>(sys.support.size());
    sys.phi.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = phi.at(static_cast<std::size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("phi row length differs from support size");
      for (Eigen::Index c = 0; c < cols; ++c) sys.phi(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    auto obs = j.at("observations").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(obs.size()) != rows) throw ParseError("observation count differs from phi rows");
    sys.observations = Eigen::Map<Eigen::VectorXd>(obs.data(), rows);
    sys.epsilon = j.at("epsilon").get<double>();
    sys.epsilon_formula = j.value("epsilon_formula", 0.0);
    sys.ls_residual = j.value("ls_residual", 0.0);
    sys.t1 = j.value("t1", 0.0);
    sys.K = j.value("K", 0);
    sys.sigma_reg = j.value("sigma_reg", 0.0);
    sys.tau = j.value("tau", 0.0);
    if (j.contains("settings"))
      for (const auto& s : j.at("settings"))
        sys.settings.push_back({parse_eigenstate(s.at("state").get<std::string>()),
                                PauliLabel::parse(s.at("measurement").get<std::string>())});
    return sys;
  } catch (const json::exception& e) {
    throw ParseError(std::string("equation dump: ") + e.what());
  }
}

/// Dense second-order fidelity table, one `<Pauli> <f2>` per line.
inline std::unordered_map<std::uint64_t, double> parse_f2_table(std::istream& in, int& n) {
  std::unordered_map<std::uint64_t, double> out;
  std::string line;
  int lineno = 0;
  n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word, num, extra;
    if (!(ls >> word)) continue;
    if (!(ls >> num)) throw ParseError("missing value", lineno);
    if (ls >> extra) throw ParseError("unexpected token '" + extra + "'", lineno);
    PauliLabel label;
    try {
      label = PauliLabel::parse(word);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    double v = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || p != num.data() + num.size() || !std::isfinite(v))
      throw ParseError("invalid value '" + num + "'", lineno);
    if (n == 0) n = label.num_qubits();
    if (label.num_qubits() != n) throw ParseError("Pauli string length differs from earlier lines", lineno);
    if (!out.emplace(label.bits(), v).second) throw ParseError("duplicate label " + word, lineno);
  }
  if (out.empty()) throw ParseError("no entries found");
  return out;
}

}  // namespace hamlearn::io
