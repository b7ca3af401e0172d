#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/errors.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

inline constexpr int kMaxStateQubits = 10;

struct PauliTerm {
  PauliLabel label;
  double coeff = 0.0;

  friend bool operator==(const PauliTerm&, const PauliTerm&) = default;
};

struct Interval {
  double lo = 0.1;
  double hi = 1.0;
};

/// H = sum of coeff * P_label over non-identity labels.
class SparseHamiltonian {
 public:
  SparseHamiltonian() = default;

  SparseHamiltonian(int n, std::vector<PauliTerm> terms, std::optional<double> gap = std::nullopt)
      : n_(n), terms_(std::move(terms)), gap_(gap) {
    if (n < 1 || n > kMaxLabelQubits) throw UsageError("qubit count out of range");
    std::unordered_set<PauliLabel> seen;
    for (const auto& t : terms_) {
      if (t.label.num_qubits() != n) throw UsageError("term " + t.label.to_string() + " has wrong qubit count");
      if (t.label.is_identity()) throw UsageError("identity term is not allowed");
      if (!std::isfinite(t.coeff)) throw UsageError("non-finite coefficient for " + t.label.to_string());
      if (!seen.insert(t.label).second) throw UsageError("duplicate term " + t.label.to_string());
    }
    if (gap_) {
      if (*gap_ < 0) throw UsageError("declared gap must be nonnegative");
      const double floor = std::sqrt(*gap_) * (1.0 - 1e-12);
      for (const auto& t : terms_)
        if (std::abs(t.coeff) < floor)
          throw UsageError("coefficient of " + t.label.to_string() + " is below sqrt(gap)");
    }
  }

  int num_qubits() const { return n_; }
  const std::vector<PauliTerm>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  std::optional<double> gap() const { return gap_; }

  double coefficient(const PauliLabel& a) const {
    for (const auto& t : terms_)
      if (t.label == a) return t.coeff;
    return 0.0;
  }

  std::vector<PauliLabel> support() const {
    std::vector<PauliLabel> s;
    for (const auto& t : terms_) s.push_back(t.label);
    std::sort(s.begin(), s.end());
    return s;
  }

  double l1_norm() const {
    double v = 0;
    for (const auto& t : terms_) v += std::abs(t.coeff);
    return v;
  }

  double sum_squares() const {
    double v = 0;
    for (const auto& t : terms_) v += t.coeff * t.coeff;
    return v;
  }

  /// Terms sorted by label.
  SparseHamiltonian sorted() const {
    auto t = terms_;
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
    return SparseHamiltonian(n_, std::move(t), gap_);
  }

  friend bool operator==(const SparseHamiltonian& a, const SparseHamiltonian& b) {
    if (a.n_ != b.n_ || a.gap_ != b.gap_) return false;
    return a.sorted().terms_ == b.sorted().terms_;
  }

 private:
  int n_ = 0;
  std::vector<PauliTerm> terms_;
  std::optional<double> gap_;
};

namespace detail {
inline double uniform_magnitude(Rng& rng, const Interval& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}
inline double random_sign(Rng& rng) { return (rng() & 1u) ? -1.0 : 1.0; }
inline void check_interval(const Interval& r) {
  if (!(r.lo >= 0) || !(r.hi >= r.lo)) throw UsageError("magnitude range must satisfy 0 <= lo <= hi");
}
}  // namespace detail

/// s distinct non-identity labels drawn uniformly, coefficients +-U[range].
inline SparseHamiltonian random_sparse(int n, int s, double eps0, Interval range, std::uint64_t seed) {
  if (n < 1 || n > kMaxLabelQubits) throw UsageError("qubit count out of range");
  detail::check_interval(range);
  if (eps0 < 0) throw UsageError("gap must be nonnegative");
  if (range.lo < std::sqrt(eps0) * (1.0 - 1e-12)) throw UsageError("magnitude range lower end below sqrt(gap)");
  const long double labels = std::ldexp(1.0L, 2 * n) - 1;
  if (s < 1 || static_cast<long double>(s) > labels) throw UsageError("sparsity out of range");
  Rng rng = make_rng(seed, "random_sparse");
  const std::uint64_t mask = bits::full_mask(n);
  std::vector<std::uint64_t> chosen;
  if (n <= 6) {
    std::vector<std::uint64_t> pool(static_cast<std::size_t>(labels));
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
    for (int k = 0; k < s; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
      chosen.push_back(pool[static_cast<std::size_t>(k)]);
    }
  } else {
    std::set<std::uint64_t> seen;
    while (static_cast<int>(chosen.size()) < s) {
      std::uint64_t v = rng() & mask;
      if (v != 0 && seen.insert(v).second) chosen.push_back(v);
    }
  }
  std::vector<PauliTerm> terms;
  for (auto v : chosen)
    terms.push_back({PauliLabel(n, v), detail::random_sign(rng) * detail::uniform_magnitude(rng, range)});
  return SparseHamiltonian(n, std::move(terms), eps0);
}

/// Nearest-neighbour ZZ couplings plus transverse X fields with random coefficients.
inline SparseHamiltonian tfim_random(int n, Interval range, std::uint64_t seed) {
  if (n < 1 || n > kMaxLabelQubits) throw UsageError("qubit count out of range");
  detail::check_interval(range);
  Rng rng = make_rng(seed, "tfim_random");
  std::vector<PauliTerm> terms;
  for (int i = 0; i + 1 < n; ++i) {
    auto zz = PauliLabel::single(n, i, 3).with_code(i + 1, 3);
    terms.push_back({zz, detail::random_sign(rng) * detail::uniform_magnitude(rng, range)});
  }
  for (int j = 0; j < n; ++j)
    terms.push_back({PauliLabel::single(n, j, 1),
                     detail::random_sign(rng) * detail::uniform_magnitude(rng, range)});
  std::optional<double> gap;
  if (range.lo > 0) gap = range.lo * range.lo;
  return SparseHamiltonian(n, std::move(terms), gap);
}

// ---- text format ----

inline SparseHamiltonian parse_hamiltonian(std::istream& in) {
  std::string line;
  int lineno = 0;
  int n = 0;
  std::vector<PauliTerm> terms;
  std::unordered_set<PauliLabel> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word, num, extra;
    if (!(ls >> word)) continue;
    if (!(ls >> num)) throw ParseError("missing coefficient", lineno);
    if (ls >> extra) throw ParseError("unexpected token '" + extra + "'", lineno);
    PauliLabel label;
    try {
      label = PauliLabel::parse(word);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    double c = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), c);
    if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(c))
      throw ParseError("invalid coefficient '" + num + "'", lineno);
    if (n == 0) n = label.num_qubits();
    if (label.num_qubits() != n)
      throw ParseError("Pauli string length " + std::to_string(label.num_qubits()) +
                           " differs from earlier lines (" + std::to_string(n) + ")",
                       lineno);
    if (label.is_identity()) throw ParseError("identity term is not allowed", lineno);
    if (!seen.insert(label).second) throw ParseError("duplicate term " + word, lineno);
    terms.push_back({label, c});
  }
  if (terms.empty()) throw ParseError("no terms found");
  return SparseHamiltonian(n, std::move(terms));
}

inline SparseHamiltonian parse_hamiltonian(const std::string& text) {
  std::istringstream in(text);
  return parse_hamiltonian(in);
}

inline SparseHamiltonian read_hamiltonian(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return parse_hamiltonian(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string format_hamiltonian(const SparseHamiltonian& h) {
  std::string out;
  for (const auto& t : h.terms()) out += t.label.to_string() + " " + format_double(t.coeff) + "\n";
  return out;
}

inline void write_hamiltonian(const SparseHamiltonian& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_hamiltonian(h);
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---- dense forms ----

/// How P acts on computational basis states: P|k> = phase(k) |k ^ flip>.
/// Qubit 0 is the most significant basis bit.
struct PauliAction {
  std::uint64_t flip = 0;
  std::uint64_t zmask = 0;  // qubits carrying Y or Z
  int y_count = 0;

  explicit PauliAction(const PauliLabel& p) {
    const int n = p.num_qubits();
    for (int q = 0; q < n; ++q) {
      const std::uint64_t bit = std::uint64_t{1} << (n - 1 - q);
      const unsigned c = p.code(q);
      if (c == 1 || c == 2) flip |= bit;
      if (c == 2 || c == 3) zmask |= bit;
      if (c == 2) ++y_count;
    }
  }

  std::complex<double> phase(std::uint64_t k) const {
    static const std::complex<double> kI[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    int e = y_count + (gf2::parity(k & zmask) ? 2 : 0);
    return kI[e & 3];
  }
};

inline void check_state_capacity(int n) {
  if (n < 1 || n > kMaxStateQubits)
    throw CapacityError("dense simulation limited to n <= " + std::to_string(kMaxStateQubits));
}

inline Eigen::MatrixXcd dense_pauli(const PauliLabel& p) {
  check_state_capacity(p.num_qubits());
  const Eigen::Index dim = Eigen::Index{1} << p.num_qubits();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  PauliAction act(p);
  for (Eigen::Index k = 0; k < dim; ++k)
    m(static_cast<Eigen::Index>(static_cast<std::uint64_t>(k) ^ act.flip), k) = act.phase(static_cast<std::uint64_t>(k));
  return m;
}

inline Eigen::MatrixXcd to_dense(const SparseHamiltonian& h) {
  check_state_capacity(h.num_qubits());
  const Eigen::Index dim = Eigen::Index{1} << h.num_qubits();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const auto& t : h.terms()) {
    PauliAction act(t.label);
    for (Eigen::Index k = 0; k < dim; ++k)
      m(static_cast<Eigen::Index>(static_cast<std::uint64_t>(k) ^ act.flip), k) +=
          t.coeff * act.phase(static_cast<std::uint64_t>(k));
  }
  return m;
}

/// Density matrix of a product eigenstate.
inline Eigen::MatrixXcd dense_state(const PauliEigenstate& st) {
  const int n = st.num_qubits();
  check_state_capacity(n);
  const Eigen::Index dim = Eigen::Index{1} << n;
  // rho = prod_q (I + s_q A_q)/2 expanded over all subsets of qubits
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << n); ++sub) {
    PauliLabel p = PauliLabel::identity(n);
    double coef = 1.0;
    for (int q = 0; q < n; ++q)
      if ((sub >> q) & 1u) {
        p = p.with_code(q, st.axes().code(q));
        coef *= st.sign(q);
      }
    rho += coef * dense_pauli(p);
  }
  return rho / static_cast<double>(dim);
}

}  // namespace hamlearn
