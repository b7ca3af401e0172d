// Command-line front end: learn, sweep-b, gen, decode-only, signs-only, bench.
// Exit codes: 0 success, 1 runtime failure, 2 bad usage or input.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "hamlearn/io.hpp"

namespace hl = hamlearn;
namespace io = hamlearn::io;

namespace {

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
};

void add_schema_flags(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "JSON config file; flags given on the command line override it");
  for (const auto& k : io::schema())
    cmd.app->add_option("--" + k.key, cmd.flags[k.key], k.help + " [" + io::to_string(k.type) + "]");
}

io::ExperimentConfig resolve(const Command& cmd) {
  io::ExperimentConfig cfg;
  if (!cmd.config_path.empty()) io::apply(cfg, io::read_json_file(cmd.config_path));
  for (const auto& k : io::schema())
    if (cmd.app->count("--" + k.key) > 0) io::apply(cfg, k.key, io::flag_value(k, cmd.flags.at(k.key)));
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream f(path);
  if (!f) throw hl::UsageError("cannot write " + path);
  return f;
}

// Writes text to the out path, or stdout when none is set.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  auto f = open_out(out);
  f << text;
}

std::string sibling(const std::string& path, const std::string& ext) {
  return std::filesystem::path(path).replace_extension(ext).string();
}

int run_learn(const io::ExperimentConfig& cfg_in) {
  io::ExperimentConfig cfg = cfg_in;
  auto h = io::make_model(cfg);
  auto noise = io::make_noise(cfg, h.num_qubits());
  cfg.learn.keep_trace = !cfg.trace.empty();
  cfg.learn.keep_fit_diagnostics = cfg.learn.keep_fit_diagnostics || !cfg.fit_csv.empty();
  cfg.learn.keep_equations = !cfg.equations_out.empty();
  hl::EvolutionOracle oracle(h, noise);
  auto res = hl::learn(oracle, cfg.learn, h);

  auto doc = io::to_json(res);
  doc["config"] = io::config_json(cfg);
  emit(cfg.out, doc.dump(2) + "\n");
  if (!cfg.out.empty()) {
    auto f = open_out(sibling(cfg.out, ".csv"));
    io::write_result_csv(f, res);
  }
  if (!cfg.trace.empty()) {
    auto f = open_out(cfg.trace);
    io::write_trace(f, res.trace);
  }
  if (!cfg.fit_csv.empty()) {
    auto f = open_out(cfg.fit_csv);
    io::write_fit_csv(f, res.fit_rows);
  }
  if (!cfg.equations_out.empty()) {
    if (res.equations.empty()) throw hl::UsageError("no equation system was built (empty support)");
    auto f = open_out(cfg.equations_out);
    f << io::to_json(res.equations.front()).dump(2) << '\n';
  }
  for (const auto& d : res.diagnostics) std::cerr << "note: " << d << '\n';
  return 0;
}

int run_sweep(const io::ExperimentConfig& cfg) {
  if (cfg.model == "file") throw hl::UsageError("sweep-b needs a generated model (tfim or random)");
  if (cfg.b_min > cfg.b_max) throw hl::UsageError("b_min exceeds b_max");
  const int n = io::make_model(cfg).num_qubits();
  auto noise = io::make_noise(cfg, n);
  std::vector<int> bs;
  for (int b = cfg.b_min; b <= cfg.b_max; ++b) bs.push_back(b);
  auto factory = [&cfg](std::uint64_t s) {
    io::ExperimentConfig c = cfg;
    c.model_seed = s;
    return io::make_model(c);
  };
  auto table = hl::threshold_sweep(factory, noise, bs, cfg.trials, cfg.learn);
  std::ostringstream os;
  io::write_sweep_csv(os, table);
  emit(cfg.out, os.str());
  if (table.threshold_b) std::cerr << "threshold b = " << *table.threshold_b << '\n';
  else std::cerr << "no b in range reached the success target\n";
  return 0;
}

int run_gen(const io::ExperimentConfig& cfg) {
  auto h = io::make_model(cfg);
  if (!cfg.out.empty() && std::filesystem::path(cfg.out).extension() == ".json")
    emit(cfg.out, io::to_json(h).dump(2) + "\n");
  else
    emit(cfg.out, hl::format_hamiltonian(h));
  return 0;
}

int run_decode(const io::ExperimentConfig& cfg) {
  if (cfg.input.empty()) throw hl::UsageError("decode-only needs --input <f2 table>");
  std::ifstream in(cfg.input);
  if (!in) throw hl::UsageError("cannot open " + cfg.input);
  int n = 0;
  const auto values = io::parse_f2_table(in, n);
  hl::FidelityTable table(n, [&values](const hl::PauliLabel& x) {
    auto it = values.find(x.bits());
    if (it == values.end()) throw hl::UsageError("f2 table has no entry for " + x.to_string());
    return it->second;
  });
  const double nu = cfg.learn.nu > 0 ? cfg.learn.nu : cfg.learn.nu_floor;
  auto groups = hl::build_bins(cfg.learn.bin_design(n), hl::derive_seed(cfg.learn.seed, "bins"), table);
  auto peeled = hl::peel(groups, {nu, cfg.learn.gamma1, cfg.learn.gamma2}, cfg.learn.max_rounds, !cfg.trace.empty());
  io::json rates = io::json::array();
  for (const auto& r : peeled.rates) {
    auto j = io::to_json(r);
    j["magnitude"] = r.label.bits() == 0 ? io::json(nullptr) : io::json(std::sqrt(std::max(0.0, -r.value)));
    rates.push_back(j);
  }
  io::json doc{{"n", n},
               {"nu", nu},
               {"rates", rates},
               {"rounds", peeled.rounds},
               {"stuck_multitons", peeled.stuck_multitons},
               {"conflicts", peeled.conflicts},
               {"duplicates", peeled.duplicates},
               {"diagnostics", peeled.diagnostics}};
  emit(cfg.out, doc.dump(2) + "\n");
  if (!cfg.trace.empty()) {
    auto f = open_out(cfg.trace);
    io::write_trace(f, peeled.trace);
  }
  return 0;
}

int run_signs(const io::ExperimentConfig& cfg) {
  if (cfg.input.empty()) throw hl::UsageError("signs-only needs --input <equation dump>");
  const auto sys = io::equations_from_json(io::read_json_file(cfg.input));
  const auto sol = hl::solve_bpdn(sys, cfg.learn.solver_tol, cfg.learn.solver_max_iter);
  const auto signs = hl::extract_signs(sol.x, cfg.learn.resolved_gap_guard());
  io::json rows = io::json::array();
  for (std::size_t i = 0; i < signs.size(); ++i)
    rows.push_back({{"pauli", sys.support[i].to_string()},
                    {"x", sol.x(static_cast<Eigen::Index>(i))},
                    {"sign", signs[i].sign},
                    {"low_confidence", signs[i].low_confidence}});
  io::json doc{{"signs", rows},
               {"epsilon", sys.epsilon},
               {"converged", sol.converged},
               {"used_fallback", sol.used_fallback},
               {"iterations", sol.iterations},
               {"constraint_violation", sol.constraint_violation}};
  emit(cfg.out, doc.dump(2) + "\n");
  return 0;
}

int run_bench(const io::ExperimentConfig& cfg) {
  auto h = io::make_model(cfg);
  hl::EvolutionOracle oracle(h, io::make_noise(cfg, h.num_qubits()));
  const auto start = std::chrono::steady_clock::now();
  auto res = hl::learn(oracle, cfg.learn, h);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  io::json doc{{"n", h.num_qubits()},
               {"b", cfg.learn.b},
               {"threads", cfg.learn.threads},
               {"seconds", secs},
               {"fidelity_queries", res.queries.fidelity_queries},
               {"expectation_queries", res.queries.expectation_queries},
               {"e1", res.e1},
               {"support_exact", res.support_exact}};
  emit(cfg.out, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage sparse Hamiltonian learning from simulated evolution data"};
  app.footer(io::schema_help());
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const io::ExperimentConfig&);
  };
  const Entry entries[] = {
      {"learn", "run both stages against a simulated Hamiltonian and report the estimate", run_learn},
      {"sweep-b", "success rate and error quantiles over a range of b", run_sweep},
      {"gen", "write a generated Hamiltonian (text, or JSON when out ends in .json)", run_gen},
      {"decode-only", "peel a table of second-order fidelities given by --input", run_decode},
      {"signs-only", "solve a dumped stage-2 equation system for the signs", run_signs},
      {"bench", "time one learn run", run_bench},
  };
  std::vector<Command> cmds(std::size(entries));
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    cmds[i].app = app.add_subcommand(entries[i].name, entries[i].help);
    cmds[i].app->footer(io::schema_help());
    add_schema_flags(cmds[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!cmds[i].app->parsed()) continue;
    try {
      return entries[i].run(resolve(cmds[i]));
    } catch (const hl::UsageError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    } catch (const hl::ParseError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    } catch (const hl::CapacityError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "failed: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
