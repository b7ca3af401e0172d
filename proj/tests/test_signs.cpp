#include <gtest/gtest.h>

#include <cmath>

#include "hamlearn/channel_sim.hpp"
#include "hamlearn/signs.hpp"
#include "oracles.hpp"

using namespace hamlearn;

namespace {
PauliEigenstate state(const std::string& axes, std::uint64_t neg = 0) {
  return PauliEigenstate(PauliLabel::parse(axes), neg);
}

/// Regression constant for t_i = i t1: sum |t_i - tbar| / sum (t_i - tbar)^2 * t1.
double oracle_sigma(int K, double t1) {
  double tbar = 0;
  for (int i = 1; i <= K; ++i) tbar += i * t1 / K;
  double a = 0, b = 0;
  for (int i = 1; i <= K; ++i) {
    a += std::abs(i * t1 - tbar);
    b += (i * t1 - tbar) * (i * t1 - tbar);
  }
  return a / b * t1;
}
}  // namespace

TEST(PhiEntry, Examples) {
  EXPECT_EQ(phi_entry(state("X"), PauliLabel::parse("Z"), PauliLabel::parse("Z")), 0.0);
  EXPECT_NEAR(phi_entry(state("X"), PauliLabel::parse("Z"), PauliLabel::parse("Y")), 2.0, 1e-15);
  EXPECT_NEAR(phi_entry(state("Z"), PauliLabel::parse("Z"), PauliLabel::parse("Y")), 0.0, 1e-15);
}

TEST(PhiEntry, MatchesDenseCommutator) {
  std::mt19937_64 rng(5);
  for (int n = 1; n <= 3; ++n) {
    auto labels = oracle::all_labels(n);
    for (int trial = 0; trial < 6; ++trial) {
      std::string axes;
      std::vector<int> signs;
      std::uint64_t neg = 0;
      for (int q = 0; q < n; ++q) {
        axes += "XYZ"[rng() % 3];
        const bool minus = rng() & 1;
        signs.push_back(minus ? -1 : 1);
        if (minus) neg |= std::uint64_t{1} << q;
      }
      Eigen::MatrixXcd rho = oracle::eigenstate(axes, signs);
      PauliEigenstate st(PauliLabel::parse(axes), neg);
      for (const auto& a : labels)
        for (const auto& m : labels) {
          Eigen::MatrixXcd A = oracle::pauli(a), M = oracle::pauli(m);
          const std::complex<double> want = std::complex<double>(0, 1) * (rho * (A * M - M * A)).trace();
          ASSERT_NEAR(want.imag(), 0.0, 1e-12);
          ASSERT_NEAR(phi_entry(st, PauliLabel::parse(a), PauliLabel::parse(m)), want.real(), 1e-12)
              << axes << " " << a << " " << m;
        }
    }
  }
}

TEST(Equations, NoiselessSingleZ) {
  const double s = 0.7;
  EvolutionOracle o(SparseHamiltonian(1, {{PauliLabel::parse("Z"), s}}));
  Rng rng(2), qrng(3);
  EquationOptions eo{8, 0.01, 5, 0.0};
  auto sys = build_equations({PauliLabel::parse("Z")}, eo,
                             [&](const PauliEigenstate& st, double t, const PauliLabel& m) {
                               return o.expectation_query(st, t, m, qrng);
                             },
                             rng);
  EXPECT_EQ(sys.phi.rows(), 8);
  EXPECT_EQ(sys.epsilon_formula, 0.0);
  // OLS slope of t^3 on t over t_i = 0.01 i, i = 1..5
  double kappa = 0;
  {
    double tb = 0.03, t3b = 0, sxx = 0, sxy = 0;
    for (int i = 1; i <= 5; ++i) t3b += std::pow(0.01 * i, 3) / 5;
    for (int i = 1; i <= 5; ++i) {
      sxy += (0.01 * i - tb) * (std::pow(0.01 * i, 3) - t3b);
      sxx += (0.01 * i - tb) * (0.01 * i - tb);
    }
    kappa = sxy / sxx;
  }
  for (Eigen::Index k = 0; k < 8; ++k) {
    EXPECT_NE(sys.phi(k, 0), 0.0);
    // the signal is (phi/2) sin(2st); its cubic term biases the fitted slope by a known factor
    EXPECT_NEAR(sys.observations(k), sys.phi(k, 0) * s * (1 - 2 * s * s / 3 * kappa), 1e-5);
  }
  EXPECT_NEAR(sys.sigma_reg, oracle_sigma(5, 0.01), 1e-12);
}

TEST(Equations, EpsilonFormula) {
  EvolutionOracle o(SparseHamiltonian(2, {{PauliLabel::parse("ZZ"), 0.3}, {PauliLabel::parse("XI"), 0.5}}));
  Rng rng(4);
  EquationOptions eo{16, 0.05, 5, 1e-3};
  auto sys = build_equations({PauliLabel::parse("XI"), PauliLabel::parse("ZZ")}, eo,
                             [&](const PauliEigenstate& st, double t, const PauliLabel& m) {
                               return o.ideal_expectation(st, t, m);
                             },
                             rng);
  EXPECT_NEAR(sys.epsilon_formula, std::sqrt(16.0) * oracle_sigma(5, 0.05) * 1e-3 / 0.05, 1e-12);
  EXPECT_GE(sys.epsilon, sys.epsilon_formula);
  EXPECT_GE(sys.epsilon, 1.1 * sys.ls_residual - 1e-15);
  for (Eigen::Index k = 0; k < sys.phi.rows(); ++k) {
    EXPECT_GT(sys.phi.row(k).cwiseAbs().sum(), 0.0);
    EXPECT_LE(sys.phi.row(k).cwiseAbs().maxCoeff(), 2.0);
  }
}

TEST(Equations, Preconditions) {
  auto oracle_fn = [](const PauliEigenstate&, double, const PauliLabel&) { return 0.0; };
  Rng rng(1);
  std::vector<PauliLabel> sup{PauliLabel::parse("XI"), PauliLabel::parse("ZZ")};
  EXPECT_THROW(build_equations(sup, {1, 0.01, 5, 0.0}, oracle_fn, rng), UsageError);
  EXPECT_THROW(build_equations(sup, {4, 0.01, 1, 0.0}, oracle_fn, rng), UsageError);
  EXPECT_THROW(build_equations({}, {4, 0.01, 5, 0.0}, oracle_fn, rng), UsageError);
}

TEST(Equations, FullRankAtEightfoldOversampling) {
  int full = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto h = random_sparse(4, 8, 0.01, {0.1, 1.0}, 200 + trial);
    Rng rng(static_cast<std::uint64_t>(trial));
    auto sys = build_equations(h.support(), {64, 0.01, 2, 0.0},
                               [](const PauliEigenstate&, double, const PauliLabel&) { return 0.0; }, rng);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.phi);
    full += lu.rank() == 8;
  }
  EXPECT_GE(full, 99);
}

TEST(Bpdn, HugeEpsilonGivesZero) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Random(6, 3);
  Eigen::VectorXd y = Eigen::VectorXd::Random(6);
  auto r = solve_bpdn(phi, y, y.norm() * 1.01);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(Bpdn, ExactSystemWithZeroEpsilon) {
  Eigen::MatrixXd phi(3, 3);
  phi << 2, 0, 1, 0, -2, 0, 1, 1, 2;
  Eigen::VectorXd s(3);
  s << 0.4, -0.3, 0.8;
  auto r = solve_bpdn(phi, phi * s, 0.0);
  EXPECT_LT((r.x - s).norm(), 1e-6);
}

TEST(Bpdn, SolvesSmallProgramToOptimality) {
  // min |x1| + |x2| s.t. |x1 + x2 - 1| <= 0.5 has optimum value 0.5
  Eigen::MatrixXd phi(1, 2);
  phi << 1, 1;
  Eigen::VectorXd y(1);
  y << 1;
  auto r = solve_bpdn(phi, y, 0.5);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x.lpNorm<1>(), 0.5, 1e-6);
  EXPECT_LE(std::abs(r.x.sum() - 1), 0.5 + 1e-6);
}

TEST(Bpdn, StableUnderBoundedNoise) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto h = random_sparse(4, 6, 0.01, {0.1, 1.0}, 700 + trial);
    Rng r(static_cast<std::uint64_t>(trial));
    auto sys = build_equations(h.support(), {48, 0.01, 2, 0.0},
                               [](const PauliEigenstate&, double, const PauliLabel&) { return 0.0; }, r);
    Eigen::VectorXd s(6);
    for (int i = 0; i < 6; ++i) s(i) = h.coefficient(sys.support[static_cast<std::size_t>(i)]);
    const double eps = 0.05;
    Eigen::VectorXd w(48);
    for (auto& v : w) v = g(rng);
    w *= eps / w.norm() * 0.9;
    auto sol = solve_bpdn(sys.phi, sys.phi * s + w, eps);
    worst = std::max(worst, (sol.x - s).norm() / eps);
  }
  EXPECT_LE(worst, 10.0);
}

TEST(Signs, ExtractAndGuard) {
  Eigen::VectorXd x(3);
  x << 0.3, -0.2, 1e-9;
  auto s = extract_signs(x, 1e-3);
  EXPECT_EQ(s[0].sign, 1);
  EXPECT_EQ(s[1].sign, -1);
  EXPECT_FALSE(s[0].low_confidence);
  EXPECT_TRUE(s[2].low_confidence);
}

TEST(Signs, MajorityVote) {
  EXPECT_EQ(majority_vote({{1, -1, 1}}), (std::vector<int>{1, -1, 1}));
  std::vector<std::vector<int>> blocks(5, {1, -1});
  blocks[0] = {-1, 1};
  blocks[3] = {-1, 1};
  EXPECT_EQ(majority_vote(blocks), (std::vector<int>{1, -1}));
  EXPECT_THROW(majority_vote({{1}, {1}}), UsageError);
  EXPECT_THROW(majority_vote({}), UsageError);
  EXPECT_THROW(majority_vote({{1}, {1, 1}, {1}}), UsageError);
}

TEST(Signs, FlipsOnlyInsideNoiseRadius) {
  int flips = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto h = random_sparse(4, 6, 0.01, {0.1, 1.0}, 1000 + trial);
    NoiseConfig nc;
    nc.spam_sigma = 1e-3;
    nc.spam_tau = 4e-3;
    EvolutionOracle o(h, nc);
    Rng rng(static_cast<std::uint64_t>(trial)), q(static_cast<std::uint64_t>(trial) + 1000);
    auto sys = build_equations(h.support(), {48, 0.05, 5, nc.spam_tau},
                               [&](const PauliEigenstate& st, double t, const PauliLabel& m) {
                                 return o.expectation_query(st, t, m, q);
                               },
                               rng);
    auto sol = solve_bpdn(sys);
    auto s = extract_signs(sol.x, 0.05);
    // entries shrunk below the guard take the least-squares sign, as the pipeline does
    const Eigen::VectorXd ls = sys.phi.colPivHouseholderQr().solve(sys.observations);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool positive = s[i].low_confidence ? ls(static_cast<Eigen::Index>(i)) > 0 : s[i].sign > 0;
      const double c = h.coefficient(sys.support[i]);
      if ((c > 0) != positive) {
        ++flips;
        // only coefficients inside the noise radius may flip
        EXPECT_LT(std::abs(c), sys.epsilon) << "trial " << trial;
      }
    }
  }
  EXPECT_LE(flips, 6);  // 1% of 600 signs
}
