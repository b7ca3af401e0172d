#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/errors.hpp"
#include "hamlearn/model.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

inline constexpr int kMaxCircuitQubits = 6;

enum class SpamMode { kAdditive, kStructural };

struct NoiseConfig {
  /// Gaussian std added to every analytic fidelity query.
  double fidelity_noise_sigma = 0.0;
  /// Pauli fidelities of the gate noise channel, indexed by label bits (circuit mode).
  std::optional<std::vector<double>> lambda_fidelities;
  /// Bound on the SPAM deviation of any expectation value.
  double spam_tau = 0.0;
  /// Gaussian std on expectation values in additive SPAM mode.
  double spam_sigma = 0.0;
  /// Sequences per length in circuit mode.
  std::optional<int> shots;
  SpamMode spam_mode = SpamMode::kAdditive;
  /// Per-qubit preparation and readout flip probability (structural mode, circuit readout).
  double spam_flip_prob = 0.0;
  /// Circuit mode: non-identity Pauli components of the prepared state are scaled by this.
  double spam_prefactor = 1.0;

  bool circuit_mode() const { return lambda_fidelities.has_value() && shots.has_value(); }

  static std::vector<double> uniform_lambda(int n, double f) {
    if (n < 1 || n > kMaxCircuitQubits) throw CapacityError("circuit mode limited to n <= 6");
    std::vector<double> v(std::size_t{1} << (2 * n), f);
    v[0] = 1.0;
    return v;
  }

  /// Largest deviation structural SPAM can cause on an expectation value.
  static double structural_deviation_bound(int n, double q) {
    return 1.0 - std::pow(1.0 - 2.0 * q, 2 * n);
  }

  void validate(int n) const {
    if (!(fidelity_noise_sigma >= 0)) throw UsageError("fidelity_noise_sigma must be >= 0");
    if (!(spam_tau >= 0)) throw UsageError("spam_tau must be >= 0");
    if (!(spam_sigma >= 0)) throw UsageError("spam_sigma must be >= 0");
    if (spam_mode == SpamMode::kAdditive && spam_sigma > 0 && spam_tau <= 0)
      throw UsageError("spam_sigma > 0 needs a positive spam_tau bound");
    if (!(spam_flip_prob >= 0 && spam_flip_prob < 0.5)) throw UsageError("spam_flip_prob must be in [0, 0.5)");
    if (spam_mode == SpamMode::kStructural &&
        structural_deviation_bound(n, spam_flip_prob) > spam_tau * (1 + 1e-12))
      throw UsageError("spam_tau is below the deviation structural SPAM can cause");
    if (!(spam_prefactor > 0 && spam_prefactor <= 1)) throw UsageError("spam_prefactor must be in (0, 1]");
    if (shots && *shots < 1) throw UsageError("shots must be >= 1");
    if (lambda_fidelities) {
      if (n > kMaxCircuitQubits) throw CapacityError("circuit mode limited to n <= 6");
      const auto& f = *lambda_fidelities;
      if (f.size() != (std::size_t{1} << (2 * n))) throw UsageError("lambda_fidelities must have 4^n entries");
      if (std::abs(f[0] - 1.0) > 1e-12) throw UsageError("lambda fidelity of the identity must be 1");
      for (double v : f)
        if (!(v > 0 && v <= 1)) throw UsageError("lambda fidelities must lie in (0, 1]");
      for (double v : f)
        if (1.0 - v > 1.0 / 3.0) throw UsageError("lambda channel is farther than 1/3 from identity");
      auto p = wht_inverse(PauliVector{n, f, VectorSemantics::kFidelities});
      for (double v : p.values)
        if (v < -1e-12) throw UsageError("lambda fidelities do not define a valid Pauli channel");
    }
  }
};

struct QueryCounts {
  std::uint64_t fidelity_queries = 0;
  std::uint64_t expectation_queries = 0;
  std::uint64_t distinct_fidelity_indices = 0;
};

/// Thread-safe oracle call counters.
class QueryMeter {
 public:
  void record_fidelity(const PauliLabel& x) {
    fidelity_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(mu_);
    distinct_.insert(x);
  }
  void record_fidelity_batch(std::uint64_t count) { fidelity_.fetch_add(count, std::memory_order_relaxed); }
  void record_expectation() { expectation_.fetch_add(1, std::memory_order_relaxed); }

  QueryCounts snapshot() const {
    QueryCounts c;
    c.fidelity_queries = fidelity_.load();
    c.expectation_queries = expectation_.load();
    std::lock_guard lock(mu_);
    c.distinct_fidelity_indices = distinct_.size();
    return c;
  }

  void reset() {
    fidelity_ = 0;
    expectation_ = 0;
    std::lock_guard lock(mu_);
    distinct_.clear();
  }

 private:
  std::atomic<std::uint64_t> fidelity_{0};
  std::atomic<std::uint64_t> expectation_{0};
  mutable std::mutex mu_;
  std::unordered_set<PauliLabel> distinct_;
};

/// Simulated access to the channel e^{-iHt}: exact fidelities, noisy queries,
/// SPAM-perturbed expectation values and the dense transfer matrix.
class EvolutionOracle {
 public:
  EvolutionOracle(SparseHamiltonian h, NoiseConfig noise = {})
      : h_(std::move(h)), noise_(std::move(noise)) {
    check_state_capacity(h_.num_qubits());
    noise_.validate(h_.num_qubits());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_dense(h_));
    if (es.info() != Eigen::Success) throw InternalError("Hamiltonian eigendecomposition failed");
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
  }

  const SparseHamiltonian& hamiltonian() const { return h_; }
  const NoiseConfig& noise() const { return noise_; }
  int num_qubits() const { return h_.num_qubits(); }
  QueryMeter& meter() const { return meter_; }
  QueryCounts meter_snapshot() const { return meter_.snapshot(); }
  void reset_meter() const { meter_.reset(); }

  /// U(t) = exp(-iHt), cached per t.
  std::shared_ptr<const Eigen::MatrixXcd> unitary(double t) const {
    std::lock_guard lock(cache_mu_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    Eigen::VectorXcd ph(evals_.size());
    for (Eigen::Index k = 0; k < evals_.size(); ++k) ph(k) = std::polar(1.0, -evals_(k) * t);
    auto u = std::make_shared<const Eigen::MatrixXcd>(evecs_ * ph.asDiagonal() * evecs_.adjoint());
    if (cache_.size() >= 64) cache_.clear();
    cache_.emplace(t, u);
    return u;
  }

  /// (1/2^n) Tr[P_x U P_x U^dagger].
  double exact_fidelity(double t, const PauliLabel& x) const {
    if (x.num_qubits() != num_qubits()) throw UsageError("label has wrong qubit count");
    if (x.is_identity()) return 1.0;
    auto u = unitary(t);
    const auto& U = *u;
    PauliAction act(x);
    const std::uint64_t dim = std::uint64_t{1} << num_qubits();
    // (P U P)_{ab} = conj(phase(a)) phase(b) U_{a^f, b^f}; the phase product is a sign
    std::complex<double> acc = 0;
    for (std::uint64_t b = 0; b < dim; ++b) {
      for (std::uint64_t a = 0; a < dim; ++a) {
        const double sgn = gf2::parity((a ^ b) & act.zmask) ? -1.0 : 1.0;
        acc += sgn * U(static_cast<Eigen::Index>(a ^ act.flip), static_cast<Eigen::Index>(b ^ act.flip)) *
               std::conj(U(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
      }
    }
    acc /= static_cast<double>(dim);
    if (std::abs(acc.imag()) > 1e-9) throw InternalError("fidelity has a non-negligible imaginary part");
    return acc.real();
  }

  /// Exact fidelity plus Gaussian noise; counted by the meter.
  double fidelity_query(double t, const PauliLabel& x, Rng& rng) const {
    if (x.is_identity()) return 1.0;
    meter_.record_fidelity(x);
    double f = exact_fidelity(t, x);
    if (noise_.fidelity_noise_sigma > 0)
      f += std::normal_distribution<double>(0.0, noise_.fidelity_noise_sigma)(rng);
    return f;
  }

  /// Noise-free Tr(M U rho U^dagger) for a product eigenstate.
  double ideal_expectation(const PauliEigenstate& st, double t, const PauliLabel& m) const {
    if (st.num_qubits() != num_qubits() || m.num_qubits() != num_qubits())
      throw UsageError("state or measurement has wrong qubit count");
    auto psi = evolve(product_state_vector(st), t);
    return pauli_expectation(psi, m);
  }

  /// Expectation value with SPAM perturbation; counted by the meter.
  double expectation_query(const PauliEigenstate& st, double t, const PauliLabel& m, Rng& rng) const {
    meter_.record_expectation();
    if (noise_.spam_mode == SpamMode::kStructural) return structural_expectation(st, t, m);
    double v = ideal_expectation(st, t, m);
    if (noise_.spam_sigma > 0) {
      double d = std::normal_distribution<double>(0.0, noise_.spam_sigma)(rng);
      v += std::clamp(d, -noise_.spam_tau, noise_.spam_tau);
    }
    return v;
  }

  /// R_{bc} = (1/2^n) Tr(P_b U P_c U^dagger) over all labels.
  Eigen::MatrixXd transfer_matrix(double t) const {
    const int n = num_qubits();
    if (n > kMaxCircuitQubits) throw CapacityError("transfer matrix limited to n <= 6");
    auto u = unitary(t);
    const auto& U = *u;
    const std::uint64_t labels = std::uint64_t{1} << (2 * n);
    const std::uint64_t dim = std::uint64_t{1} << n;
    Eigen::MatrixXd r(static_cast<Eigen::Index>(labels), static_cast<Eigen::Index>(labels));
    for (std::uint64_t c = 0; c < labels; ++c) {
      Eigen::MatrixXcd a = U * dense_pauli(PauliLabel(n, c)) * U.adjoint();
      for (std::uint64_t b = 0; b < labels; ++b) {
        PauliAction act(PauliLabel(n, b));
        // Tr(P_b A) = Tr(A P_b) = sum_k phase(k) A_{k, k^f}
        std::complex<double> tr = 0;
        for (std::uint64_t k = 0; k < dim; ++k)
          tr += act.phase(k) * a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k ^ act.flip));
        r(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) = tr.real() / static_cast<double>(dim);
      }
    }
    return r;
  }

  /// Spectral norm of (transfer matrix - identity).
  double transfer_distance(double t) const {
    Eigen::MatrixXd d = transfer_matrix(t);
    d -= Eigen::MatrixXd::Identity(d.rows(), d.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
    return svd.singularValues()(0);
  }

 private:
  Eigen::VectorXcd product_state_vector(const PauliEigenstate& st) const {
    const int n = num_qubits();
    Eigen::VectorXcd psi = Eigen::VectorXcd::Ones(1);
    const double h = 1.0 / std::sqrt(2.0);
    for (int q = 0; q < n; ++q) {
      Eigen::Vector2cd v;
      const int s = st.sign(q);
      switch (st.axes().code(q)) {
        case 1: v << h, s * h; break;
        case 2: v << h, std::complex<double>(0, s * h); break;
        default:
          if (s > 0) v << 1, 0;
          else v << 0, 1;
      }
      Eigen::VectorXcd next(psi.size() * 2);
      for (Eigen::Index i = 0; i < psi.size(); ++i) {
        next(2 * i) = psi(i) * v(0);
        next(2 * i + 1) = psi(i) * v(1);
      }
      psi = std::move(next);
    }
    return psi;
  }

  Eigen::VectorXcd evolve(const Eigen::VectorXcd& psi, double t) const {
    if (t == 0.0) return psi;
    Eigen::VectorXcd c = evecs_.adjoint() * psi;
    for (Eigen::Index k = 0; k < c.size(); ++k) c(k) *= std::polar(1.0, -evals_(k) * t);
    return evecs_ * c;
  }

  static double pauli_expectation(const Eigen::VectorXcd& psi, const PauliLabel& m) {
    PauliAction act(m);
    std::complex<double> acc = 0;
    for (Eigen::Index k = 0; k < psi.size(); ++k) {
      const auto uk = static_cast<std::uint64_t>(k);
      acc += std::conj(psi(static_cast<Eigen::Index>(uk ^ act.flip))) * act.phase(uk) * psi(k);
    }
    return acc.real();
  }

  // Mixed preparation with every Bloch vector shrunk by (1-2q), readout of a
  // weight-w Pauli damped by (1-2q)^w.
  double structural_expectation(const PauliEigenstate& st, double t, const PauliLabel& m) const {
    const int n = num_qubits();
    const double shrink = 1.0 - 2.0 * noise_.spam_flip_prob;
    auto u = unitary(t);
    Eigen::MatrixXcd o = u->adjoint() * dense_pauli(m) * (*u);
    double acc = 0;
    for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << n); ++sub) {
      PauliLabel p = PauliLabel::identity(n);
      double coef = 1.0;
      for (int q = 0; q < n; ++q)
        if ((sub >> q) & 1u) {
          p = p.with_code(q, st.axes().code(q));
          coef *= st.sign(q) * shrink;
        }
      PauliAction act(p);
      std::complex<double> tr = 0;
      for (Eigen::Index k = 0; k < o.rows(); ++k)
        tr += o(k, static_cast<Eigen::Index>(static_cast<std::uint64_t>(k) ^ act.flip)) *
              act.phase(static_cast<std::uint64_t>(k));
      acc += coef * tr.real();
    }
    acc /= static_cast<double>(std::uint64_t{1} << n);
    return acc * std::pow(shrink, m.weight());
  }

  SparseHamiltonian h_;
  NoiseConfig noise_;
  Eigen::VectorXd evals_;
  Eigen::MatrixXcd evecs_;
  mutable QueryMeter meter_;
  mutable std::mutex cache_mu_;
  mutable std::map<double, std::shared_ptr<const Eigen::MatrixXcd>> cache_;
};

struct RbOutcome {
  PauliLabel pauli_sum;
  std::uint64_t syndrome = 0;
};

/// Interleaved randomized-benchmarking sequences in the Pauli-coefficient picture.
class RbSampler {
 public:
  /// `interleaved` is the transfer matrix of H_t, or null for plain sequences.
  RbSampler(StabilizerGroup group, const NoiseConfig& noise, const Eigen::MatrixXd* interleaved = nullptr)
      : group_(std::move(group)), noise_(noise) {
    const int n = group_.num_qubits();
    if (n > kMaxCircuitQubits) throw CapacityError("circuit mode limited to n <= 6");
    const std::size_t labels = std::size_t{1} << (2 * n);
    if (noise.lambda_fidelities) {
      if (noise.lambda_fidelities->size() != labels) throw UsageError("lambda_fidelities must have 4^n entries");
      lambda_ = *noise.lambda_fidelities;
    } else {
      lambda_.assign(labels, 1.0);
    }
    if (interleaved) {
      if (interleaved->rows() != static_cast<Eigen::Index>(labels)) throw UsageError("transfer matrix has wrong size");
      // fold Lambda in: each step applies R * diag(lambda)
      step_ = *interleaved * Eigen::Map<const Eigen::VectorXd>(lambda_.data(), static_cast<Eigen::Index>(labels)).asDiagonal();
    }
    const std::uint64_t elems = std::uint64_t{1} << n;
    initial_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels));
    elem_label_.resize(elems);
    elem_sign_.resize(elems);
    for (std::uint64_t k = 0; k < elems; ++k) {
      elem_label_[k] = group_.element(k).bits();
      elem_sign_[k] = group_.element_sign(k);
      double v = elem_sign_[k];
      if (k != 0) v *= noise.spam_prefactor;
      initial_(static_cast<Eigen::Index>(elem_label_[k])) = v;
    }
  }

  const StabilizerGroup& group() const { return group_; }

  /// One sequence of m+1 random Pauli gates.
  RbOutcome sample(int m, Rng& rng) const {
    const int n = group_.num_qubits();
    const std::uint64_t labels = std::uint64_t{1} << (2 * n);
    Eigen::VectorXd r = initial_;
    std::uniform_int_distribution<std::uint64_t> gate(0, labels - 1);
    std::uint64_t sum = 0;
    for (int step = 0; step <= m; ++step) {
      const std::uint64_t a = gate(rng);
      sum ^= a;
      const std::uint64_t sa = bits::swap_pairs(a);
      for (std::uint64_t b = 0; b < labels; ++b)
        if (gf2::parity(sa & b)) r(static_cast<Eigen::Index>(b)) = -r(static_cast<Eigen::Index>(b));
      if (step_.size() > 0) {
        r = step_ * r;
      } else {
        for (std::uint64_t b = 0; b < labels; ++b) r(static_cast<Eigen::Index>(b)) *= lambda_[b];
      }
    }
    // syndrome distribution: Prob(s) = 2^{-n} sum_K (-1)^{s.K} sigma_K r_{g_K}
    const std::uint64_t elems = std::uint64_t{1} << n;
    std::vector<double> prob(elems);
    for (std::uint64_t k = 0; k < elems; ++k)
      prob[k] = elem_sign_[k] * r(static_cast<Eigen::Index>(elem_label_[k]));
    gf2::fwht(std::span<double>(prob));
    double total = 0;
    for (auto& p : prob) {
      p = std::max(p, 0.0);
      total += p;
    }
    std::uniform_real_distribution<double> unif(0.0, total);
    double u = unif(rng);
    std::uint64_t s = elems - 1;
    for (std::uint64_t k = 0; k < elems; ++k) {
      if (u < prob[k]) {
        s = k;
        break;
      }
      u -= prob[k];
    }
    if (noise_.spam_flip_prob > 0) {
      std::bernoulli_distribution flip(noise_.spam_flip_prob);
      for (int k = 0; k < n; ++k)
        if (flip(rng)) s ^= std::uint64_t{1} << k;
    }
    return {PauliLabel(n, sum), s};
  }

 private:
  StabilizerGroup group_;
  NoiseConfig noise_;
  std::vector<double> lambda_;
  Eigen::MatrixXd step_;
  Eigen::VectorXd initial_;
  std::vector<std::uint64_t> elem_label_;
  std::vector<int> elem_sign_;
};

}  // namespace hamlearn
