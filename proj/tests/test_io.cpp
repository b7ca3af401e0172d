#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "hamlearn/io.hpp"

using namespace hamlearn;
namespace io = hamlearn::io;
using io::json;

TEST(Schema, KeysAreUniqueAndAllAppearInHelp) {
  std::set<std::string> seen;
  const auto help = io::schema_help();
  for (const auto& k : io::schema()) {
    EXPECT_TRUE(seen.insert(k.key).second) << k.key;
    EXPECT_NE(help.find("  " + k.key + " <"), std::string::npos) << k.key;
    EXPECT_FALSE(k.help.empty()) << k.key;
  }
  EXPECT_GE(seen.size(), 40u);
}

TEST(Schema, AppliesEveryKeyType) {
  io::ExperimentConfig c;
  io::apply(c, json::parse(R"({"model":"random","n":5,"sparsity":7,"b":6,"t0":0.02,"seed":99,
      "intercept":"pinned","spam_mode":"structural","keep_fit_diagnostics":true,"out":"x.json"})"));
  EXPECT_EQ(c.model, "random");
  EXPECT_EQ(*c.n, 5);
  EXPECT_EQ(c.sparsity, 7);
  EXPECT_EQ(c.learn.b, 6);
  EXPECT_DOUBLE_EQ(c.learn.t0, 0.02);
  EXPECT_EQ(c.learn.seed, 99u);
  EXPECT_EQ(c.learn.intercept, InterceptMode::kPinned);
  EXPECT_EQ(c.noise.spam_mode, SpamMode::kStructural);
  EXPECT_TRUE(c.learn.keep_fit_diagnostics);
  EXPECT_EQ(c.out, "x.json");
  EXPECT_EQ(c.resolved_model_seed(), 99u);
}

TEST(Schema, RejectsUnknownKeysAndWrongTypes) {
  io::ExperimentConfig c;
  EXPECT_THROW(io::apply(c, json::parse(R"({"bee":4})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse(R"({"b":"four"})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse(R"({"b":4.5})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse(R"({"seed":-1})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse(R"({"model":"ising"})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse(R"({"keep_fit_diagnostics":1})")), UsageError);
  EXPECT_THROW(io::apply(c, json::parse("[1,2]")), UsageError);
}

TEST(Schema, FlagTextConversion) {
  const auto* b = io::find_key("b");
  const auto* t0 = io::find_key("t0");
  const auto* seed = io::find_key("seed");
  ASSERT_TRUE(b && t0 && seed);
  EXPECT_EQ(io::flag_value(*b, "7"), json(7));
  EXPECT_EQ(io::flag_value(*t0, "0.25"), json(0.25));
  EXPECT_EQ(io::flag_value(*seed, "18446744073709551615"), json(18446744073709551615ull));
  EXPECT_THROW(io::flag_value(*b, "7x"), UsageError);
  EXPECT_THROW(io::flag_value(*t0, ""), UsageError);
}

TEST(Schema, ModelAndNoiseConstruction) {
  io::ExperimentConfig c;
  EXPECT_THROW(io::make_model(c), UsageError);
  c.n = 4;
  const auto h = io::make_model(c);
  EXPECT_EQ(h.num_qubits(), 4);
  EXPECT_EQ(h.size(), 7);
  c.model = "random";
  c.sparsity = 5;
  EXPECT_EQ(io::make_model(c).size(), 5);
  c.model = "file";
  EXPECT_THROW(io::make_model(c), UsageError);

  c.lambda_uniform = 0.99;
  c.noise.shots = 100;
  const auto nc = io::make_noise(c, 2);
  ASSERT_TRUE(nc.lambda_fidelities.has_value());
  EXPECT_EQ(nc.lambda_fidelities->size(), 16u);
  EXPECT_TRUE(nc.circuit_mode());
}

TEST(Serialize, HamiltonianRoundtrip) {
  SparseHamiltonian h(3, {{PauliLabel::parse("XIZ"), 0.125}, {PauliLabel::parse("IYY"), -0.7}});
  const auto back = io::hamiltonian_from_json(json::parse(io::to_json(h).dump()));
  EXPECT_EQ(back.num_qubits(), 3);
  EXPECT_DOUBLE_EQ(back.coefficient(PauliLabel::parse("XIZ")), 0.125);
  EXPECT_DOUBLE_EQ(back.coefficient(PauliLabel::parse("IYY")), -0.7);
  EXPECT_THROW(io::hamiltonian_from_json(json::parse(R"({"n":2})")), ParseError);
}

TEST(Serialize, EigenstateText) {
  const auto st = io::parse_eigenstate("+X-Z+Y");
  EXPECT_EQ(st.axes().to_string(), "XZY");
  EXPECT_EQ(st.sign(0), 1);
  EXPECT_EQ(st.sign(1), -1);
  EXPECT_EQ(st.to_string(), "+X-Z+Y");
  EXPECT_THROW(io::parse_eigenstate("X+"), ParseError);
  EXPECT_THROW(io::parse_eigenstate("+X-"), ParseError);
}

TEST(Serialize, EquationDumpRoundtrip) {
  const SparseHamiltonian h(3, {{PauliLabel::parse("ZZI"), 0.4}, {PauliLabel::parse("IXI"), -0.3}});
  EvolutionOracle oracle(h);
  EquationOptions opt;
  opt.m = 12;
  opt.t1 = 0.05;
  opt.K = 5;
  opt.tau = 1e-6;
  Rng rng(3);
  const auto sys = build_equations(
      h.support(), opt,
      [&](const PauliEigenstate& st, double t, const PauliLabel& m) { return oracle.expectation_query(st, t, m, rng); },
      rng);
  const auto back = io::equations_from_json(json::parse(io::to_json(sys).dump()));
  EXPECT_EQ(back.n, sys.n);
  EXPECT_EQ(back.support, sys.support);
  EXPECT_TRUE(back.phi.isApprox(sys.phi, 0));
  EXPECT_TRUE(back.observations.isApprox(sys.observations, 0));
  EXPECT_EQ(back.epsilon, sys.epsilon);
  ASSERT_EQ(back.settings.size(), sys.settings.size());
  for (std::size_t i = 0; i < sys.settings.size(); ++i) {
    EXPECT_EQ(back.settings[i].state.to_string(), sys.settings[i].state.to_string());
    EXPECT_EQ(back.settings[i].measurement, sys.settings[i].measurement);
  }
  const auto a = solve_bpdn(sys);
  const auto b = solve_bpdn(back);
  EXPECT_TRUE(a.x.isApprox(b.x, 1e-12));
}

TEST(Serialize, EquationDumpRejectsShapeMismatch) {
  auto j = json::parse(R"({"n":2,"support":["XI","IZ"],"phi":[[1,0],[0]],"observations":[1,2],"epsilon":0.1})");
  EXPECT_THROW(io::equations_from_json(j), ParseError);
  j = json::parse(R"({"n":2,"support":["XI"],"phi":[[1]],"observations":[1,2],"epsilon":0.1})");
  EXPECT_THROW(io::equations_from_json(j), ParseError);
}

TEST(Serialize, TraceLines) {
  TraceEvent e;
  e.round = 2;
  e.group = 1;
  e.bin = 5;
  e.kind = BinKind::kSingleTon;
  e.index = PauliLabel::parse("XZ");
  e.value = -0.25;
  e.accepted = true;
  std::ostringstream os;
  io::write_trace(os, {e, TraceEvent{}});
  std::istringstream is(os.str());
  std::string l1, l2, l3;
  std::getline(is, l1);
  std::getline(is, l2);
  EXPECT_FALSE(std::getline(is, l3));
  const auto j = json::parse(l1);
  EXPECT_EQ(j["index"], "XZ");
  EXPECT_EQ(j["value"], -0.25);
  EXPECT_EQ(j["round"], 2);
  EXPECT_TRUE(json::parse(l2)["index"].is_null());
}

TEST(F2Table, ParsesCommentsAndBlankLines) {
  std::istringstream in("# header\nXI -0.04\n\nIZ   -0.09  # trailing\nXZ 0\n");
  int n = 0;
  const auto t = io::parse_f2_table(in, n);
  EXPECT_EQ(n, 2);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_DOUBLE_EQ(t.at(PauliLabel::parse("IZ").bits()), -0.09);
}

TEST(F2Table, ErrorsNameTheLine) {
  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    int n = 0;
    try {
      io::parse_f2_table(in, n);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("XI 0.1\nXQ 0.2\n"), 2);
  EXPECT_EQ(line_of("XI 0.1\nXII 0.2\n"), 2);
  EXPECT_EQ(line_of("XI 0.1\nIZ\n"), 2);
  EXPECT_EQ(line_of("XI 0.1\nIZ 1 2\n"), 2);
  EXPECT_EQ(line_of("XI 0.1\n\nXI 0.3\n"), 3);
  EXPECT_EQ(line_of("XI nan\n"), 1);
}

TEST(ResultCsv, UnionOfSupports) {
  EstimationResult r;
  r.estimate = SparseHamiltonian(2, {{PauliLabel::parse("XI"), 0.5}});
  r.true_reference = SparseHamiltonian(2, {{PauliLabel::parse("XI"), 0.5}, {PauliLabel::parse("IZ"), 0.2}});
  std::ostringstream os;
  io::write_result_csv(os, r);
  EXPECT_EQ(os.str(), "pauli,estimate,reference\nIZ,0,0.2\nXI,0.5,0.5\n");
}
