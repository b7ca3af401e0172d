#include <gtest/gtest.h>

#include <cmath>

#include "hamlearn/pipeline.hpp"

using namespace hamlearn;

namespace {
SparseHamiltonian make(int n, std::vector<std::pair<std::string, double>> t) {
  std::vector<PauliTerm> terms;
  for (auto& [s, c] : t) terms.push_back({PauliLabel::parse(s), c});
  return SparseHamiltonian(n, terms);
}
}  // namespace

TEST(Metrics, Examples) {
  auto s = make(2, {{"XI", 0.5}, {"ZZ", -0.5}, {"YY", 0.5}, {"IX", 0.5}});
  EXPECT_EQ(relative_error(s, s), 0.0);
  EXPECT_EQ(average_error(s, s), 0.0);
  SparseHamiltonian zero(2, {});
  EXPECT_DOUBLE_EQ(relative_error(s, zero), 1.0);
  EXPECT_DOUBLE_EQ(average_error(s, zero), 0.5);
  auto flipped = make(2, {{"XI", -0.5}, {"ZZ", -0.5}, {"YY", 0.5}, {"IX", 0.5}});
  EXPECT_DOUBLE_EQ(relative_error(s, flipped), 2 * 0.5 / 2.0);
  auto extra = make(2, {{"XI", 0.5}, {"ZZ", -0.5}, {"YY", 0.5}, {"IX", 0.5}, {"XX", 0.1}});
  EXPECT_DOUBLE_EQ(average_error(s, extra), 0.1 / 4);
  EXPECT_THROW(relative_error(zero, s), UsageError);
  EXPECT_THROW(relative_error(s, make(1, {{"X", 1}})), UsageError);
}

TEST(Config, DerivedDefaults) {
  LearnConfig c;
  EXPECT_EQ(c.resolved_P1(3), 8);
  EXPECT_EQ(c.resolved_P1(6), 12);
  EXPECT_NEAR(c.resolved_gap_guard(), 0.05, 1e-15);
  EXPECT_EQ(c.resolved_vote_blocks(6, 11), 1);
  EXPECT_EQ(c.resolved_vote_blocks(2, 4), 5);
  c.b = 12;
  EXPECT_THROW(c.validate(6), UsageError);
  c.b = 5;
  c.vote_blocks = 2;
  EXPECT_THROW(c.validate(6), UsageError);
}

TEST(Learn, NoiselessTfimFourQubits) {
  auto h = tfim_random(4, {0.1, 1.0}, 11);
  EvolutionOracle o(h);
  LearnConfig cfg;
  cfg.seed = 3;
  auto r = learn(o, cfg, h);
  EXPECT_TRUE(r.support_exact);
  EXPECT_EQ(r.sign_flips, 0);
  EXPECT_LT(r.e1, 5e-3);
  EXPECT_LE(r.queries.distinct_fidelity_indices, cfg.bin_design(4).query_bound());
  ASSERT_TRUE(r.stage1.identity_rate.has_value());
  EXPECT_NEAR(*r.stage1.identity_rate, -h.sum_squares(), 1e-2);
  // magnitudes are square roots of the kept rates
  for (const auto& rate : r.stage1.recovered) {
    const double c = r.estimate.coefficient(rate.label);
    if (c != 0) EXPECT_NEAR(c * c, rate.value, 1e-12);
  }
}

TEST(Learn, SingleTermAnyB) {
  auto h = make(1, {{"Y", -0.6}});
  EvolutionOracle o(h);
  LearnConfig cfg;
  cfg.b = 1;
  auto r = learn(o, cfg, h);
  EXPECT_TRUE(r.support_exact);
  EXPECT_EQ(r.sign_flips, 0);
  EXPECT_LT(r.e1, 1e-3);
}

TEST(Learn, DeterministicForFixedSeed) {
  auto h = tfim_random(3, {0.1, 1.0}, 2);
  NoiseConfig nc;
  nc.fidelity_noise_sigma = 1e-3;
  nc.spam_sigma = 1e-3;
  nc.spam_tau = 4e-3;
  EvolutionOracle o(h, nc);
  LearnConfig cfg;
  cfg.seed = 5;
  cfg.keep_trace = true;
  auto a = learn(o, cfg, h);
  cfg.threads = 4;
  auto b = learn(o, cfg, h);
  ASSERT_EQ(a.estimate.size(), b.estimate.size());
  for (std::size_t i = 0; i < a.estimate.size(); ++i) {
    EXPECT_EQ(a.estimate.terms()[i].label, b.estimate.terms()[i].label);
    EXPECT_EQ(a.estimate.terms()[i].coeff, b.estimate.terms()[i].coeff);
  }
  EXPECT_EQ(a.trace.size(), b.trace.size());
  EXPECT_EQ(a.queries.fidelity_queries, b.queries.fidelity_queries);
}

TEST(Learn, EmptySupportIsFlagged) {
  // rates below eps0/2 are dropped, leaving nothing to sign
  auto h = make(2, {{"XZ", 0.05}});
  EvolutionOracle o(h);
  LearnConfig cfg;
  cfg.b = 2;
  auto r = learn(o, cfg, h);
  EXPECT_TRUE(r.estimate.empty());
  EXPECT_TRUE(r.flagged);
}

TEST(Sweep, QuantilesAndThresholdFlag) {
  EXPECT_DOUBLE_EQ(quantile({3.0}, 0.25), 3.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
  auto factory = [](std::uint64_t seed) { return tfim_random(3, {0.1, 1.0}, seed); };
  LearnConfig base;
  auto t = threshold_sweep(factory, {}, {1, 4, 5}, 1, base);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].q25, t.rows[0].q75);
  EXPECT_LT(t.rows[0].mean_queries, t.rows[2].mean_queries);
  EXPECT_EQ(t.rows[2].exact_fraction, 1.0);
  EXPECT_THROW(threshold_sweep(factory, {}, {6}, 1, base), UsageError);
}
