#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hamlearn::gf2 {

inline int parity(std::uint64_t v) { return std::popcount(v) & 1; }

/// Standard binary inner product of two bit vectors.
inline int dot(std::uint64_t a, std::uint64_t b) { return parity(a & b); }

/// Incremental row echelon form over GF(2). Each stored row remembers which
/// inserted vectors were XORed to produce it, so membership queries also
/// return the combination.
class Basis {
 public:
  /// Inserts v; returns false if v is already in the span.
  bool insert(std::uint64_t v) {
    std::uint64_t combo = std::uint64_t{1} << count_;
    reduce(v, combo);
    ++count_;
    if (v == 0) return false;
    rows_.push_back({v, combo, static_cast<int>(std::bit_width(v)) - 1});
    return true;
  }

  /// Combination mask K (bit k = use k-th inserted vector) with XOR_K = v.
  std::optional<std::uint64_t> decompose(std::uint64_t v) const {
    std::uint64_t combo = 0;
    reduce(v, combo);
    if (v != 0) return std::nullopt;
    return combo;
  }

  bool contains(std::uint64_t v) const { return decompose(v).has_value(); }
  int rank() const { return static_cast<int>(rows_.size()); }
  int inserted() const { return count_; }

 private:
  struct Row {
    std::uint64_t vec;
    std::uint64_t combo;
    int pivot;
  };

  void reduce(std::uint64_t& v, std::uint64_t& combo) const {
    for (const auto& r : rows_) {
      if ((v >> r.pivot) & 1u) {
        v ^= r.vec;
        combo ^= r.combo;
      }
    }
  }

  // Row k never has bits at the pivots of rows before it.
  std::vector<Row> rows_;
  int count_ = 0;
};

inline int rank(std::span<const std::uint64_t> vectors) {
  Basis b;
  for (auto v : vectors) b.insert(v);
  return b.rank();
}

/// In-place unnormalized Walsh-Hadamard transform on 2^k points:
/// out[j] = sum_l (-1)^{popcount(l & j)} in[l].
template <typename T>
void fwht(std::span<T> a) {
  const std::size_t n = a.size();
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        T x = a[j];
        T y = a[j + h];
        a[j] = x + y;
        a[j + h] = x - y;
      }
    }
  }
}

}  // namespace hamlearn::gf2
