#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hamlearn/errors.hpp"
#include "hamlearn/gf2.hpp"

namespace hamlearn {

inline constexpr int kMaxLabelQubits = 32;
inline constexpr int kMaxDenseQubits = 8;

namespace bits {

inline constexpr std::uint64_t kLowMask = 0x5555555555555555ULL;

inline constexpr std::uint64_t full_mask(int n) {
  return n >= 32 ? ~std::uint64_t{0} : (std::uint64_t{1} << (2 * n)) - 1;
}

/// J_n: exchanges the two bits of every qubit pair.
inline constexpr std::uint64_t swap_pairs(std::uint64_t v) {
  return ((v & kLowMask) << 1) | ((v >> 1) & kLowMask);
}

/// Symplectic product on raw label words.
inline int symplectic(std::uint64_t a, std::uint64_t b) { return gf2::parity(a & swap_pairs(b)); }

}  // namespace bits

/// Single-qubit code: I=0, X=1, Y=2, Z=3 (the two label bits read as a number).
inline constexpr std::array<char, 4> kPauliLetters{'I', 'X', 'Y', 'Z'};

/// An n-qubit Pauli operator modulo phase, stored as a 2n-bit word.
///
/// The word read as a binary number from the most significant of its 2n bits
/// is the label string, so qubit 0 (leftmost letter) occupies the top pair.
class PauliLabel {
 public:
  PauliLabel() = default;

  PauliLabel(int n, std::uint64_t bits) : n_(n), bits_(bits) {
    if (n < 0 || n > kMaxLabelQubits) throw UsageError("qubit count out of range");
    if ((bits & ~bits::full_mask(n)) != 0) throw UsageError("label has bits beyond 2n");
  }

  static PauliLabel identity(int n) { return PauliLabel(n, 0); }

  static PauliLabel parse(std::string_view text) {
    if (text.empty()) throw ParseError("empty Pauli string");
    if (text.size() > static_cast<std::size_t>(kMaxLabelQubits))
      throw ParseError("Pauli string longer than " + std::to_string(kMaxLabelQubits));
    std::uint64_t v = 0;
    for (char c : text) {
      unsigned code = 0;
      switch (c) {
        case 'I': code = 0; break;
        case 'X': code = 1; break;
        case 'Y': code = 2; break;
        case 'Z': code = 3; break;
        default:
          throw ParseError(std::string("invalid Pauli letter '") + c + "' in \"" +
                           std::string(text) + "\"");
      }
      v = (v << 2) | code;
    }
    return PauliLabel(static_cast<int>(text.size()), v);
  }

  /// Weight-1 label with `code` on qubit q.
  static PauliLabel single(int n, int q, unsigned code) {
    return identity(n).with_code(q, code);
  }

  int num_qubits() const { return n_; }
  std::uint64_t bits() const { return bits_; }
  bool is_identity() const { return bits_ == 0; }

  unsigned code(int q) const { return static_cast<unsigned>(bits_ >> shift(q)) & 3u; }
  char letter(int q) const { return kPauliLetters[code(q)]; }

  PauliLabel with_code(int q, unsigned c) const {
    std::uint64_t v = (bits_ & ~(std::uint64_t{3} << shift(q))) |
                      (std::uint64_t{c & 3u} << shift(q));
    return PauliLabel(n_, v);
  }

  int weight() const {
    int w = 0;
    for (int q = 0; q < n_; ++q) w += code(q) != 0;
    return w;
  }

  std::string to_string() const {
    std::string s(static_cast<std::size_t>(n_), 'I');
    for (int q = 0; q < n_; ++q) s[static_cast<std::size_t>(q)] = letter(q);
    return s;
  }

  /// The 2n label bits as '0'/'1', first character = first label bit.
  std::string bit_string() const {
    std::string s;
    for (int k = 2 * n_ - 1; k >= 0; --k) s.push_back(((bits_ >> k) & 1u) ? '1' : '0');
    return s;
  }

  friend auto operator<=>(const PauliLabel&, const PauliLabel&) = default;

 private:
  int shift(int q) const {
    if (q < 0 || q >= n_) throw UsageError("qubit index out of range");
    return 2 * (n_ - 1 - q);
  }

  int n_ = 0;
  std::uint64_t bits_ = 0;
};

namespace detail {
inline void require_same_n(const PauliLabel& a, const PauliLabel& b) {
  if (a.num_qubits() != b.num_qubits()) throw UsageError("Pauli labels have different qubit counts");
}
}  // namespace detail

/// Pauli inner product: 0 iff the operators commute.
inline int symplectic_product(const PauliLabel& a, const PauliLabel& b) {
  detail::require_same_n(a, b);
  return bits::symplectic(a.bits(), b.bits());
}

/// Standard binary inner product of the raw 2n-bit words.
inline int binary_product(const PauliLabel& a, const PauliLabel& b) {
  detail::require_same_n(a, b);
  return gf2::dot(a.bits(), b.bits());
}

inline PauliLabel label_add(const PauliLabel& a, const PauliLabel& b) {
  detail::require_same_n(a, b);
  return PauliLabel(a.num_qubits(), a.bits() ^ b.bits());
}

inline PauliLabel operator+(const PauliLabel& a, const PauliLabel& b) { return label_add(a, b); }

/// Phase-exact product: P_a P_b = i^phase P_{a+b}, phase in {0,1,2,3}.
struct PauliProduct {
  PauliLabel label;
  int phase = 0;
};

inline PauliProduct multiply(const PauliLabel& a, const PauliLabel& b) {
  detail::require_same_n(a, b);
  // phase exponent of single-qubit products, rows = left factor
  static constexpr int kTable[4][4] = {{0, 0, 0, 0}, {0, 0, 1, 3}, {0, 3, 0, 1}, {0, 1, 3, 0}};
  int phase = 0;
  for (int q = 0; q < a.num_qubits(); ++q) phase += kTable[a.code(q)][b.code(q)];
  return {label_add(a, b), phase & 3};
}

/// Product of single-qubit Pauli eigenstates: qubit q is the eigenstate of
/// axis code(q) in {X, Y, Z} with eigenvalue -1 when bit q of `negative` is set.
class PauliEigenstate {
 public:
  PauliEigenstate(PauliLabel axes, std::uint64_t negative) : axes_(axes), negative_(negative) {
    for (int q = 0; q < axes.num_qubits(); ++q)
      if (axes.code(q) == 0) throw UsageError("eigenstate axis must be X, Y or Z on every qubit");
  }

  const PauliLabel& axes() const { return axes_; }
  std::uint64_t negative_mask() const { return negative_; }
  int num_qubits() const { return axes_.num_qubits(); }
  int sign(int q) const { return ((negative_ >> q) & 1u) ? -1 : 1; }

  /// Tr(rho P) for the product state, evaluated qubit-wise.
  double expectation(const PauliLabel& p) const {
    detail::require_same_n(axes_, p);
    double v = 1.0;
    for (int q = 0; q < p.num_qubits(); ++q) {
      unsigned c = p.code(q);
      if (c == 0) continue;
      if (c != axes_.code(q)) return 0.0;
      v *= sign(q);
    }
    return v;
  }

  std::string to_string() const {
    std::string s;
    for (int q = 0; q < num_qubits(); ++q) {
      s.push_back(sign(q) < 0 ? '-' : '+');
      s.push_back(axes_.letter(q));
    }
    return s;
  }

 private:
  PauliLabel axes_;
  std::uint64_t negative_;
};

/// Abelian group generated by n commuting, independent Paulis.
class StabilizerGroup {
 public:
  explicit StabilizerGroup(std::vector<PauliLabel> generators) : gens_(std::move(generators)) {
    if (gens_.empty()) throw UsageError("stabilizer group needs generators");
    n_ = gens_.front().num_qubits();
    if (static_cast<int>(gens_.size()) != n_)
      throw UsageError("stabilizer group needs exactly n generators");
    for (std::size_t i = 0; i < gens_.size(); ++i) {
      detail::require_same_n(gens_[i], gens_.front());
      for (std::size_t j = 0; j < i; ++j)
        if (symplectic_product(gens_[i], gens_[j]) != 0)
          throw UsageError("stabilizer generators must commute");
      if (!basis_.insert(gens_[i].bits()))
        throw UsageError("stabilizer generators must be independent");
    }
  }

  int num_qubits() const { return n_; }
  const std::vector<PauliLabel>& generators() const { return gens_; }

  /// Bit k is the symplectic product of c with generator k.
  std::uint64_t syndrome(const PauliLabel& c) const {
    detail::require_same_n(c, gens_.front());
    return syndrome_bits(c.bits());
  }

  std::uint64_t syndrome_bits(std::uint64_t c) const {
    std::uint64_t s = 0;
    for (int k = 0; k < n_; ++k) s |= std::uint64_t(bits::symplectic(c, gens_[k].bits())) << k;
    return s;
  }

  /// Mask K with sum over k in K of generator k equal to x, if x is in the group.
  std::optional<std::uint64_t> decompose(const PauliLabel& x) const {
    detail::require_same_n(x, gens_.front());
    return basis_.decompose(x.bits());
  }

  bool contains(const PauliLabel& x) const { return decompose(x).has_value(); }

  PauliLabel element(std::uint64_t K) const {
    std::uint64_t v = 0;
    for (int k = 0; k < n_; ++k)
      if ((K >> k) & 1u) v ^= gens_[k].bits();
    return PauliLabel(n_, v);
  }

  /// Sign sigma with (product of generators in K, ascending) = sigma * P_{element(K)}.
  int element_sign(std::uint64_t K) const {
    PauliLabel acc = PauliLabel::identity(n_);
    int phase = 0;
    for (int k = 0; k < n_; ++k) {
      if (!((K >> k) & 1u)) continue;
      auto p = multiply(acc, gens_[k]);
      acc = p.label;
      phase += p.phase;
    }
    phase &= 3;
    if (phase & 1) throw InternalError("commuting Pauli product with imaginary phase");
    return phase == 0 ? 1 : -1;
  }

 private:
  std::vector<PauliLabel> gens_;
  gf2::Basis basis_;
  int n_ = 0;
};

/// Group generated by the weight-1 pieces of x, with X standing in for I.
inline StabilizerGroup covering_group(const PauliLabel& x) {
  const int n = x.num_qubits();
  if (n == 0) throw UsageError("covering group of a 0-qubit label");
  std::vector<PauliLabel> gens;
  gens.reserve(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) {
    unsigned c = x.code(q);
    gens.push_back(PauliLabel::single(n, q, c == 0 ? 1u : c));
  }
  return StabilizerGroup(std::move(gens));
}

enum class VectorSemantics { kErrorRates, kFidelities };

/// Dense vector over all 4^n labels, indexed by label bits. Test oracle only.
struct PauliVector {
  int n = 0;
  std::vector<double> values;
  VectorSemantics semantics = VectorSemantics::kErrorRates;

  static PauliVector zeros(int n, VectorSemantics sem) {
    if (n < 0 || n > kMaxDenseQubits)
      throw CapacityError("dense Pauli vector limited to n <= " + std::to_string(kMaxDenseQubits));
    return {n, std::vector<double>(std::size_t{1} << (2 * n), 0.0), sem};
  }

  double& operator[](const PauliLabel& a) { return values.at(a.bits()); }
  double operator[](const PauliLabel& a) const { return values.at(a.bits()); }
  std::size_t size() const { return values.size(); }
};

namespace detail {
inline void check_dense(const PauliVector& v) {
  if (v.n < 0 || v.n > kMaxDenseQubits)
    throw CapacityError("dense Pauli transform limited to n <= " + std::to_string(kMaxDenseQubits));
  if (v.values.size() != (std::size_t{1} << (2 * v.n)))
    throw UsageError("Pauli vector size is not 4^n");
}

// sum_a (-1)^{<x,a>_p} v_a = sum_b (-1)^{x.b} v_{J b}
inline std::vector<double> pauli_transform(const std::vector<double>& v) {
  std::vector<double> q(v.size());
  for (std::size_t b = 0; b < v.size(); ++b) q[b] = v[bits::swap_pairs(b)];
  gf2::fwht(std::span<double>(q));
  return q;
}
}  // namespace detail

/// f_x = sum_a (-1)^{<x,a>_p} p_a.
inline PauliVector wht_forward(const PauliVector& p) {
  detail::check_dense(p);
  return {p.n, detail::pauli_transform(p.values), VectorSemantics::kFidelities};
}

/// p_a = 4^{-n} sum_x (-1)^{<x,a>_p} f_x.
inline PauliVector wht_inverse(const PauliVector& f) {
  detail::check_dense(f);
  auto v = detail::pauli_transform(f.values);
  const double scale = 1.0 / static_cast<double>(v.size());
  for (auto& e : v) e *= scale;
  return {f.n, std::move(v), VectorSemantics::kErrorRates};
}

}  // namespace hamlearn

template <>
struct std::hash<hamlearn::PauliLabel> {
  std::size_t operator()(const hamlearn::PauliLabel& a) const noexcept {
    return std::hash<std::uint64_t>{}(a.bits() * 0x9e3779b97f4a7c15ULL ^
                                      static_cast<std::uint64_t>(a.num_qubits()));
  }
};
