#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/errors.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

/// i Tr(rho [P_alpha, M]) for a product eigenstate rho.
inline double phi_entry(const PauliEigenstate& rho, const PauliLabel& alpha, const PauliLabel& m) {
  if (symplectic_product(alpha, m) == 0) return 0.0;
  // [P_a, M] = 2 P_a M = 2 i^k P_{a+M} with k odd, so i * 2 i^k is real
  const auto prod = multiply(alpha, m);
  const double sign = prod.phase == 3 ? 1.0 : -1.0;
  return 2.0 * sign * rho.expectation(prod.label);
}

struct MeasurementSetting {
  PauliEigenstate state;
  PauliLabel measurement;
};

/// Observations = Phi * s over the recovered support, up to noise.
struct ProcessEquationSystem {
  int n = 0;
  std::vector<PauliLabel> support;
  Eigen::MatrixXd phi;
  Eigen::VectorXd observations;
  double epsilon = 0.0;
  /// Relaxation from the slope-regression bound alone.
  double epsilon_formula = 0.0;
  /// Norm of the least-squares residual on the support.
  double ls_residual = 0.0;
  std::vector<MeasurementSetting> settings;
  double t1 = 0.0;
  int K = 0;
  double sigma_reg = 0.0;
  double tau = 0.0;
  /// Settings redrawn because their row of Phi vanished.
  int resampled = 0;
};

struct EquationOptions {
  int m = 0;
  double t1 = 0.01;
  int K = 5;
  double tau = 0.0;
  int max_retries = 10000;
  /// 1: slope from a + b t. 2: slope from a + b t + c t^2.
  int slope_degree = 1;
};

using ExpectationFn = std::function<double(const PauliEigenstate&, double, const PauliLabel&)>;

namespace detail {
inline PauliEigenstate random_eigenstate(int n, Rng& rng) {
  std::uniform_int_distribution<unsigned> axis(1, 3);
  PauliLabel axes = PauliLabel::identity(n);
  for (int q = 0; q < n; ++q) axes = axes.with_code(q, axis(rng));
  const std::uint64_t neg = n >= 64 ? rng() : (rng() & ((std::uint64_t{1} << n) - 1));
  return PauliEigenstate(axes, neg);
}

inline PauliLabel random_measurement(int n, Rng& rng) {
  std::uniform_int_distribution<std::uint64_t> pick(1, bits::full_mask(n));
  return PauliLabel(n, pick(rng));
}

/// Row vector w with slope = w . y for OLS on the given polynomial degree.
inline Eigen::VectorXd slope_weights(const std::vector<double>& t, int degree) {
  const auto k = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd a(k, degree + 1);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int p = 0; p <= degree; ++p) a(i, p) = std::pow(t[static_cast<std::size_t>(i)], p);
  Eigen::MatrixXd pinv = a.completeOrthogonalDecomposition().pseudoInverse();
  return pinv.row(1).transpose();
}

inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  return a.colPivHouseholderQr().solve(y);
}
}  // namespace detail

inline ProcessEquationSystem build_equations(const std::vector<PauliLabel>& support, const EquationOptions& opt,
                                             const ExpectationFn& oracle, Rng& rng) {
  if (support.empty()) throw UsageError("support is empty");
  const int n = support.front().num_qubits();
  const int s = static_cast<int>(support.size());
  if (opt.m < s) throw UsageError("need m >= s process equations");
  if (opt.K < 2) throw UsageError("need K >= 2 evolution times");
  if (!(opt.t1 > 0)) throw UsageError("t1 must be positive");
  if (opt.slope_degree != 1 && opt.slope_degree != 2) throw UsageError("slope degree must be 1 or 2");
  if (opt.slope_degree == 2 && opt.K < 3) throw UsageError("quadratic slope fit needs K >= 3");

  ProcessEquationSystem sys;
  sys.n = n;
  sys.support = support;
  sys.t1 = opt.t1;
  sys.K = opt.K;
  sys.tau = opt.tau;
  sys.phi.resize(opt.m, s);
  sys.observations.resize(opt.m);

  std::vector<double> times;
  for (int i = 1; i <= opt.K; ++i) times.push_back(i * opt.t1);
  const Eigen::VectorXd w = detail::slope_weights(times, opt.slope_degree);
  sys.sigma_reg = w.lpNorm<1>() * opt.t1;

  for (int k = 0; k < opt.m; ++k) {
    std::optional<MeasurementSetting> setting;
    Eigen::RowVectorXd row(s);
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
      auto st = detail::random_eigenstate(n, rng);
      auto m = detail::random_measurement(n, rng);
      bool nonzero = false;
      for (int a = 0; a < s; ++a) {
        row(a) = phi_entry(st, support[static_cast<std::size_t>(a)], m);
        nonzero |= row(a) != 0.0;
      }
      if (nonzero) {
        setting = MeasurementSetting{st, m};
        break;
      }
      ++sys.resampled;
    }
    if (!setting) throw InternalError("could not draw a setting with a nonzero equation row");
    double slope = 0;
    for (std::size_t i = 0; i < times.size(); ++i)
      slope += w(static_cast<Eigen::Index>(i)) * oracle(setting->state, times[i], setting->measurement);
    sys.phi.row(k) = row;
    sys.observations(k) = slope;
    sys.settings.push_back(*setting);
  }

  sys.epsilon_formula = std::sqrt(static_cast<double>(opt.m)) * sys.sigma_reg * opt.tau / opt.t1;
  Eigen::VectorXd xls = detail::least_squares(sys.phi, sys.observations);
  sys.ls_residual = (sys.phi * xls - sys.observations).norm();
  sys.epsilon = std::max(sys.epsilon_formula, 1.1 * sys.ls_residual);
  return sys;
}

struct BpdnResult {
  Eigen::VectorXd x;
  bool converged = false;
  bool used_fallback = false;
  int iterations = 0;
  /// max(0, ||Phi x - y|| - epsilon)
  double constraint_violation = 0.0;
};

/// min ||x||_1 subject to ||Phi x - y||_2 <= epsilon.
///
/// ADMM on x = w, Phi x = z with w in the l1 term and z in the ball. The
/// x-update matrix I + Phi^T Phi does not depend on the penalty, so the
/// penalty is rebalanced freely.
inline BpdnResult solve_bpdn(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double epsilon,
                             double tol = 1e-10, int max_iter = 50000) {
  const auto m = phi.rows();
  const auto s = phi.cols();
  if (y.size() != m) throw UsageError("observation length does not match Phi");
  if (!(epsilon >= 0)) throw UsageError("epsilon must be >= 0");
  BpdnResult out;
  out.x = Eigen::VectorXd::Zero(s);
  if (y.norm() <= epsilon) {
    out.converged = true;
    return out;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd::Identity(s, s) + phi.transpose() * phi);
  if (llt.info() != Eigen::Success) throw InternalError("x-update factorization failed");

  auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd d = v - y;
    const double nd = d.norm();
    if (nd <= epsilon) return v;
    return y + d * (epsilon / nd);
  };

  const double scale = std::max(1.0, y.norm());
  double rho = 1.0;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(s), w = x, u1 = x;
  Eigen::VectorXd z = project(Eigen::VectorXd::Zero(m)), u2 = Eigen::VectorXd::Zero(m);
  for (int it = 1; it <= max_iter; ++it) {
    x = llt.solve((w - u1) + phi.transpose() * (z - u2));
    const Eigen::VectorXd px = phi * x;
    const Eigen::VectorXd w_old = w, z_old = z;
    const Eigen::VectorXd v = x + u1;
    const double thr = 1.0 / rho;
    for (Eigen::Index i = 0; i < s; ++i) w(i) = std::copysign(std::max(std::abs(v(i)) - thr, 0.0), v(i));
    z = project(px + u2);
    u1 += x - w;
    u2 += px - z;
    const double primal = std::sqrt((x - w).squaredNorm() + (px - z).squaredNorm());
    const double dual = rho * ((w - w_old) + phi.transpose() * (z - z_old)).norm();
    out.iterations = it;
    if (primal <= tol * scale && dual <= tol * scale) {
      out.converged = true;
      break;
    }
    if (it % 10 == 0) {
      double factor = 1.0;
      if (primal > 10 * dual) factor = 2.0;
      else if (dual > 10 * primal) factor = 0.5;
      if (factor != 1.0) {
        rho *= factor;
        u1 /= factor;
        u2 /= factor;
      }
    }
  }
  out.x = w;
  const double viol = (phi * w - y).norm() - epsilon;
  out.constraint_violation = std::max(0.0, viol);
  if (!out.converged) {
    if (m >= s) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi);
      const auto& sv = svd.singularValues();
      if (sv(sv.size() - 1) > 1e-10 * sv(0)) {
        Eigen::VectorXd ls = detail::least_squares(phi, y);
        if ((phi * ls - y).norm() <= epsilon * (1 + 1e-9) + 1e-12) {
          out.x = ls;
          out.used_fallback = true;
          out.constraint_violation = 0.0;
        }
      }
    }
  }
  return out;
}

inline BpdnResult solve_bpdn(const ProcessEquationSystem& sys, double tol = 1e-10, int max_iter = 50000) {
  return solve_bpdn(sys.phi, sys.observations, sys.epsilon, tol, max_iter);
}

struct SignEstimate {
  int sign = 1;
  bool low_confidence = false;
};

inline std::vector<SignEstimate> extract_signs(const Eigen::VectorXd& x, double gap_guard) {
  std::vector<SignEstimate> out;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out.push_back({x(i) < 0 ? -1 : 1, std::abs(x(i)) < gap_guard});
  return out;
}

inline std::vector<int> majority_vote(const std::vector<std::vector<int>>& blocks) {
  if (blocks.empty() || blocks.size() % 2 == 0) throw UsageError("majority vote needs an odd number of blocks");
  const std::size_t len = blocks.front().size();
  std::vector<int> out(len, 0);
  for (const auto& b : blocks) {
    if (b.size() != len) throw UsageError("sign blocks have different lengths");
    for (std::size_t i = 0; i < len; ++i) out[i] += b[i] > 0 ? 1 : -1;
  }
  for (auto& v : out) v = v > 0 ? 1 : -1;
  return out;
}

}  // namespace hamlearn
