#pragma once

// Brute-force references for tests. Nothing here uses the library's bit
// arithmetic; labels are handled as strings and matrices as Kronecker products.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace oracle {

using cd = std::complex<double>;

inline Eigen::Matrix2cd single(char c) {
  Eigen::Matrix2cd m;
  switch (c) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, cd(0, -1), cd(0, 1), 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: m << 1, 0, 0, 1;
  }
  return m;
}

/// Leftmost letter acts on the most significant tensor factor.
inline Eigen::MatrixXcd pauli(const std::string& s) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(1, 1);
  for (char c : s) {
    Eigen::Matrix2cd p = single(c);
    Eigen::MatrixXcd k(m.rows() * 2, m.cols() * 2);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) k.block(2 * i, 2 * j, 2, 2) = m(i, j) * p;
    m = k;
  }
  return m;
}

/// All 4^n label strings, in lexicographic IXYZ order.
inline std::vector<std::string> all_labels(int n) {
  std::vector<std::string> out{""};
  for (int q = 0; q < n; ++q) {
    std::vector<std::string> next;
    for (const auto& s : out)
      for (char c : std::string("IXYZ")) next.push_back(s + c);
    out = next;
  }
  return out;
}

inline bool commute(const std::string& a, const std::string& b) {
  Eigen::MatrixXcd A = pauli(a), B = pauli(b);
  return (A * B - B * A).norm() < 1e-12;
}

inline Eigen::MatrixXcd hamiltonian(const std::vector<std::pair<std::string, double>>& terms, int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
  for (const auto& [s, c] : terms) h += c * pauli(s);
  return h;
}

inline Eigen::MatrixXcd propagator(const Eigen::MatrixXcd& h, double t) {
  Eigen::MatrixXcd a = cd(0, -t) * h;
  return a.exp();
}

/// 2^{-n} Tr[P U P U^dagger]
inline double fidelity(const Eigen::MatrixXcd& h, const std::string& x, double t) {
  Eigen::MatrixXcd u = propagator(h, t);
  Eigen::MatrixXcd p = pauli(x);
  return (p * u * p * u.adjoint()).trace().real() / static_cast<double>(p.rows());
}

/// f^(2)_x = sum_a s_a^2 [(-1)^{commutes ? 0 : 1} - 1], by matrix commutation.
inline double second_order(const std::vector<std::pair<std::string, double>>& terms, const std::string& x) {
  double v = 0;
  for (const auto& [s, c] : terms)
    if (!commute(s, x)) v -= 2 * c * c;
  return v;
}

/// Product eigenstate density matrix: axes string over {X,Y,Z}, signs +-1.
inline Eigen::MatrixXcd eigenstate(const std::string& axes, const std::vector<int>& signs) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(1, 1);
  for (std::size_t q = 0; q < axes.size(); ++q) {
    Eigen::Matrix2cd r = 0.5 * (Eigen::Matrix2cd::Identity() + double(signs[q]) * single(axes[q]));
    Eigen::MatrixXcd k(rho.rows() * 2, rho.cols() * 2);
    for (Eigen::Index i = 0; i < rho.rows(); ++i)
      for (Eigen::Index j = 0; j < rho.cols(); ++j) k.block(2 * i, 2 * j, 2, 2) = rho(i, j) * r;
    rho = k;
  }
  return rho;
}

/// Brute-force symplectic Fourier pair: f_x = sum_a (-1)^{[a,x] != 0} p_a.
inline std::vector<double> rates_to_fidelities(const std::vector<double>& p, int n) {
  auto labels = all_labels(n);
  std::vector<double> f(labels.size(), 0.0);
  for (std::size_t x = 0; x < labels.size(); ++x)
    for (std::size_t a = 0; a < labels.size(); ++a) f[x] += commute(labels[a], labels[x]) ? p[a] : -p[a];
  return f;
}

}  // namespace oracle

namespace oracle {

/// Letter-wise anticommutation count parity, no matrices.
inline bool anticommute(const std::string& a, const std::string& b) {
  int k = 0;
  for (std::size_t q = 0; q < a.size(); ++q)
    if (a[q] != 'I' && b[q] != 'I' && a[q] != b[q]) ++k;
  return k % 2 == 1;
}

/// Pauli string for a value whose base-4 digits (I,X,Y,Z = 0..3) read left to right.
inline std::string label_string(std::uint64_t v, int n) {
  std::string s(static_cast<std::size_t>(n), 'I');
  for (int q = n - 1; q >= 0; --q) {
    s[static_cast<std::size_t>(q)] = "IXYZ"[v & 3u];
    v >>= 2;
  }
  return s;
}

/// Second-order fidelity from Pauli strings alone.
inline double second_order_letters(const std::vector<std::pair<std::string, double>>& terms, const std::string& x) {
  double v = 0;
  for (const auto& [s, c] : terms)
    if (anticommute(s, x)) v -= 2 * c * c;
  return v;
}

}  // namespace oracle
