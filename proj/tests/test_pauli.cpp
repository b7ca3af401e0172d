#include <gtest/gtest.h>

#include <random>

#include "hamlearn/errors.hpp"
#include "hamlearn/pauli.hpp"
#include "oracles.hpp"

using namespace hamlearn;

TEST(PauliLabel, ParseAndPrintRoundTrip) {
  auto p = PauliLabel::parse("XIZY");
  EXPECT_EQ(p.num_qubits(), 4);
  EXPECT_EQ(p.to_string(), "XIZY");
  EXPECT_EQ(p.letter(0), 'X');
  EXPECT_EQ(p.letter(3), 'Y');
  EXPECT_EQ(p.weight(), 3);
  EXPECT_FALSE(p.is_identity());
  EXPECT_TRUE(PauliLabel::parse("III").is_identity());
}

TEST(PauliLabel, BitValueReadsLeftToRight) {
  // I=00 X=01 Y=10 Z=11, first letter most significant
  EXPECT_EQ(PauliLabel::parse("XZ").bits(), 0b0111u);
  EXPECT_EQ(PauliLabel::parse("ZI").bits(), 0b1100u);
  EXPECT_EQ(PauliLabel::parse("Y").bit_string(), "10");
}

TEST(PauliLabel, RejectsBadInput) {
  EXPECT_THROW(PauliLabel::parse("XQ"), ParseError);
  EXPECT_THROW(PauliLabel::parse(""), ParseError);
  EXPECT_THROW(PauliLabel(2, 0x10), UsageError);
}

TEST(Symplectic, KnownPairs) {
  auto X = PauliLabel::parse("X"), Y = PauliLabel::parse("Y"), Z = PauliLabel::parse("Z");
  EXPECT_EQ(symplectic_product(X, Z), 1);
  EXPECT_EQ(symplectic_product(X, Y), 1);
  EXPECT_EQ(symplectic_product(X, X), 0);
  EXPECT_EQ(symplectic_product(PauliLabel::parse("XX"), PauliLabel::parse("ZZ")), 0);
  EXPECT_EQ(symplectic_product(PauliLabel::parse("XI"), PauliLabel::parse("ZZ")), 1);
}

TEST(Symplectic, MixedSizesThrow) {
  EXPECT_THROW(symplectic_product(PauliLabel::parse("X"), PauliLabel::parse("XX")), UsageError);
}

TEST(Symplectic, MatchesDenseCommutatorUpToThreeQubits) {
  for (int n = 1; n <= 3; ++n) {
    auto labels = oracle::all_labels(n);
    std::vector<Eigen::MatrixXcd> mats;
    for (const auto& s : labels) mats.push_back(oracle::pauli(s));
    for (std::size_t a = 0; a < labels.size(); ++a)
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const bool commute = (mats[a] * mats[b] - mats[b] * mats[a]).norm() < 1e-12;
        ASSERT_EQ(symplectic_product(PauliLabel::parse(labels[a]), PauliLabel::parse(labels[b])), commute ? 0 : 1)
            << labels[a] << " " << labels[b];
      }
  }
}

TEST(Multiply, PhaseMatchesDenseProduct) {
  for (int n = 1; n <= 2; ++n) {
    auto labels = oracle::all_labels(n);
    for (const auto& a : labels)
      for (const auto& b : labels) {
        auto prod = multiply(PauliLabel::parse(a), PauliLabel::parse(b));
        const std::complex<double> ph[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        Eigen::MatrixXcd expect = ph[prod.phase] * oracle::pauli(prod.label.to_string());
        ASSERT_LT((oracle::pauli(a) * oracle::pauli(b) - expect).norm(), 1e-12) << a << "*" << b;
      }
  }
}

TEST(LabelAdd, IsXor) {
  EXPECT_EQ((PauliLabel::parse("XY") + PauliLabel::parse("ZY")).to_string(), "YI");
  EXPECT_EQ(binary_product(PauliLabel::parse("XX"), PauliLabel::parse("XI")), 1);
}

TEST(Eigenstate, ExpectationMatchesTrace) {
  std::mt19937_64 rng(3);
  const int n = 3;
  auto labels = oracle::all_labels(n);
  for (int trial = 0; trial < 10; ++trial) {
    std::string axes;
    std::vector<int> signs;
    std::uint64_t neg = 0;
    for (int q = 0; q < n; ++q) {
      axes += "XYZ"[rng() % 3];
      const bool minus = rng() & 1;
      signs.push_back(minus ? -1 : 1);
      if (minus) neg |= std::uint64_t{1} << q;
    }
    PauliEigenstate st(PauliLabel::parse(axes), neg);
    Eigen::MatrixXcd rho = oracle::eigenstate(axes, signs);
    for (const auto& p : labels) {
      const double want = (rho * oracle::pauli(p)).trace().real();
      ASSERT_NEAR(st.expectation(PauliLabel::parse(p)), want, 1e-12) << axes << " " << p;
    }
  }
}

TEST(StabilizerGroup, SyndromeDecomposition) {
  StabilizerGroup g({PauliLabel::parse("ZI"), PauliLabel::parse("IZ")});
  EXPECT_TRUE(g.contains(PauliLabel::parse("ZZ")));
  EXPECT_FALSE(g.contains(PauliLabel::parse("XI")));
  auto k = g.decompose(PauliLabel::parse("ZZ"));
  ASSERT_TRUE(k.has_value());
  EXPECT_EQ(g.element(*k).to_string(), "ZZ");
  // XI anticommutes with ZI only
  auto syn = g.syndrome(PauliLabel::parse("XI"));
  EXPECT_EQ(std::popcount(syn), 1);
}

TEST(StabilizerGroup, RejectsBadGenerators) {
  EXPECT_THROW(StabilizerGroup({PauliLabel::parse("XI"), PauliLabel::parse("ZI")}), UsageError);
  EXPECT_THROW(StabilizerGroup({PauliLabel::parse("ZI"), PauliLabel::parse("ZI")}), UsageError);
  EXPECT_THROW(StabilizerGroup({PauliLabel::parse("ZI")}), UsageError);
}

TEST(StabilizerGroup, CoveringGroupContainsLabel) {
  for (const auto& s : oracle::all_labels(3)) {
    auto x = PauliLabel::parse(s);
    auto g = covering_group(x);
    EXPECT_TRUE(g.contains(x)) << s;
  }
}

TEST(Wht, MatchesBruteForceAndRoundTrips) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 1; n <= 3; ++n) {
    PauliVector p = PauliVector::zeros(n, VectorSemantics::kErrorRates);
    for (auto& v : p.values) v = u(rng);
    auto f = wht_forward(p);
    auto want = oracle::rates_to_fidelities(p.values, n);
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(f.values[i], want[i], 1e-12);
    auto back = wht_inverse(f);
    for (std::size_t i = 0; i < p.size(); ++i) ASSERT_NEAR(back.values[i], p.values[i], 1e-12);
  }
}

TEST(Wht, SemanticsAndCapacity) {
  auto p = PauliVector::zeros(1, VectorSemantics::kErrorRates);
  EXPECT_EQ(wht_forward(p).semantics, VectorSemantics::kFidelities);
  EXPECT_EQ(wht_inverse(wht_forward(p)).semantics, VectorSemantics::kErrorRates);
  EXPECT_THROW(PauliVector::zeros(kMaxDenseQubits + 1, VectorSemantics::kErrorRates), CapacityError);
}
