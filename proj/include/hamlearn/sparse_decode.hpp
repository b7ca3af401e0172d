#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "hamlearn/errors.hpp"
#include "hamlearn/gf2.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

/// Shape of the subsampling: 2^b bin sets per group, C groups, P1 random
/// offsets plus 2n*r index-code offsets per group.
struct BinDesign {
  int n = 1;
  int b = 1;
  int C = 3;
  int P1 = 8;
  int repetition = 1;

  int P2() const { return 2 * n * repetition; }
  int P() const { return P1 + P2(); }
  std::uint64_t B() const { return std::uint64_t{1} << b; }
  /// Upper bound on distinct labels touched by build_bins.
  std::uint64_t query_bound() const { return B() * static_cast<std::uint64_t>(P()) * static_cast<std::uint64_t>(C); }

  void validate() const {
    if (n < 1 || n > kMaxLabelQubits) throw UsageError("qubit count out of range");
    if (b < 1 || b >= 2 * n) throw UsageError("b must satisfy 1 <= b < 2n");
    if (b > 24) throw CapacityError("b larger than 24 is not supported");
    if (C < 1) throw UsageError("C must be >= 1");
    if (P1 < 1) throw UsageError("P1 must be >= 1");
    if (repetition != 1 && repetition != 3 && repetition != 5) throw UsageError("repetition must be 1, 3 or 5");
    if (repetition > P1 + 1) throw UsageError("repetition needs at least repetition-1 random offsets");
  }
};

/// Index-code offset for label bit k (k = 0 is the first, most significant label bit).
inline std::uint64_t code_offset(int n, int k) {
  return bits::swap_pairs(std::uint64_t{1} << (2 * n - 1 - k));
}

/// One random hash of labels into 2^b bin sets, with its bins and noise multipliers.
class SubsamplingGroup {
 public:
  SubsamplingGroup(const BinDesign& d, std::vector<std::uint64_t> columns, std::vector<std::uint64_t> offsets)
      : design_(d), M_(std::move(columns)), offsets_(std::move(offsets)) {
    if (static_cast<int>(M_.size()) != d.b) throw UsageError("subsampling matrix needs b columns");
    if (static_cast<int>(offsets_.size()) != d.P()) throw UsageError("offset count must be P");
    if (gf2::rank(M_) != d.b) throw UsageError("subsampling matrix must have full column rank");
    for (auto c : M_) Mprime_.push_back(bits::swap_pairs(c));
    U_.assign(d.B() * static_cast<std::size_t>(d.P()), 0.0);
    T_.assign(d.B(), 1.0);
  }

  const BinDesign& design() const { return design_; }
  const std::vector<std::uint64_t>& columns() const { return M_; }
  const std::vector<std::uint64_t>& offsets() const { return offsets_; }

  /// Bin set j = M^T alpha (bit i from column i).
  std::uint32_t hash(std::uint64_t alpha) const {
    std::uint32_t j = 0;
    for (std::size_t i = 0; i < M_.size(); ++i) j |= static_cast<std::uint32_t>(gf2::dot(M_[i], alpha)) << i;
    return j;
  }

  /// Label M' l + d_t whose fidelity feeds bin entry (l, t).
  std::uint64_t query_label(std::uint64_t ell, int t) const {
    std::uint64_t v = offsets_[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < Mprime_.size(); ++i)
      if ((ell >> i) & 1u) v ^= Mprime_[i];
    return v;
  }

  std::span<double> bin(std::uint32_t j) {
    return {U_.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(design_.P()),
            static_cast<std::size_t>(design_.P())};
  }
  std::span<const double> bin(std::uint32_t j) const {
    return {U_.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(design_.P()),
            static_cast<std::size_t>(design_.P())};
  }

  double& T(std::uint32_t j) { return T_.at(j); }
  double T(std::uint32_t j) const { return T_.at(j); }

  /// Removes value * (-1)^{<d_t, alpha>_p} from every entry of bin set hash(alpha).
  void subtract(std::uint64_t alpha, double value) {
    auto u = bin(hash(alpha));
    for (std::size_t t = 0; t < u.size(); ++t)
      u[t] -= bits::symplectic(offsets_[t], alpha) ? -value : value;
  }

 private:
  BinDesign design_;
  std::vector<std::uint64_t> M_;
  std::vector<std::uint64_t> Mprime_;
  std::vector<std::uint64_t> offsets_;
  std::vector<double> U_;
  std::vector<double> T_;
};

/// P1 random offsets followed by the index code. Copy r >= 1 of the code is
/// shifted by random offset r-1, so its bits are read relative to that bin.
inline std::vector<std::uint64_t> make_offsets(const BinDesign& d, Rng& rng) {
  std::vector<std::uint64_t> off;
  const std::uint64_t mask = bits::full_mask(d.n);
  for (int t = 0; t < d.P1; ++t) off.push_back(rng() & mask);
  for (int rep = 0; rep < d.repetition; ++rep) {
    const std::uint64_t shift = rep == 0 ? 0 : off[static_cast<std::size_t>(rep - 1)];
    for (int k = 0; k < 2 * d.n; ++k) off.push_back(code_offset(d.n, k) ^ shift);
  }
  return off;
}

inline std::vector<std::uint64_t> random_full_rank(int n, int b, Rng& rng, int max_attempts = 1000) {
  const std::uint64_t mask = bits::full_mask(n);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::uint64_t> cols;
    for (int i = 0; i < b; ++i) cols.push_back(rng() & mask);
    if (gf2::rank(cols) == b) return cols;
  }
  throw InternalError("could not draw a full-rank subsampling matrix");
}

/// Run-wide memo of second-order fidelities, filled in parallel.
class FidelityTable {
 public:
  using Source = std::function<double(const PauliLabel&)>;

  FidelityTable(int n, Source source, int threads = 1) : n_(n), source_(std::move(source)), threads_(std::max(1, threads)) {}

  /// Evaluates every label not seen before. Order of evaluation does not
  /// affect results because each label's value depends only on the label.
  void fill(const std::vector<std::uint64_t>& labels) {
    std::vector<std::uint64_t> todo;
    for (auto v : labels)
      if (!values_.count(v) && v != 0) todo.push_back(v);
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
    std::vector<double> out(todo.size());
    auto work = [&](std::size_t begin, std::size_t step) {
      for (std::size_t i = begin; i < todo.size(); i += step) out[i] = source_(PauliLabel(n_, todo[i]));
    };
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(threads_), todo.size()));
    if (workers <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      std::exception_ptr err;
      std::mutex err_mu;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            work(w, workers);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!err) err = std::current_exception();
          }
        });
      for (auto& th : pool) th.join();
      if (err) std::rethrow_exception(err);
    }
    for (std::size_t i = 0; i < todo.size(); ++i) values_[todo[i]] = out[i];
    values_[0] = 0.0;
  }

  double at(std::uint64_t label) const {
    if (label == 0) return 0.0;
    return values_.at(label);
  }

  std::size_t size() const { return values_.size(); }

 private:
  int n_;
  Source source_;
  int threads_;
  std::unordered_map<std::uint64_t, double> values_;
};

/// Draws C groups, queries every label M'l + d once, and forms the bins by a
/// B-point transform over l.
inline std::vector<SubsamplingGroup> build_bins(const BinDesign& d, std::uint64_t seed, FidelityTable& table) {
  d.validate();
  std::vector<SubsamplingGroup> groups;
  for (int c = 0; c < d.C; ++c) {
    Rng mrng = make_rng(seed, "subsampling", static_cast<std::uint64_t>(c));
    auto cols = random_full_rank(d.n, d.b, mrng);
    Rng orng = make_rng(seed, "offsets", static_cast<std::uint64_t>(c));
    groups.emplace_back(d, std::move(cols), make_offsets(d, orng));
  }
  std::vector<std::uint64_t> labels;
  labels.reserve(static_cast<std::size_t>(d.query_bound()));
  for (const auto& g : groups)
    for (int t = 0; t < d.P(); ++t)
      for (std::uint64_t ell = 0; ell < d.B(); ++ell) labels.push_back(g.query_label(ell, t));
  table.fill(labels);

  const double inv_b = 1.0 / static_cast<double>(d.B());
  std::vector<double> f(d.B());
  for (auto& g : groups) {
    for (int t = 0; t < d.P(); ++t) {
      for (std::uint64_t ell = 0; ell < d.B(); ++ell) f[ell] = table.at(g.query_label(ell, t));
      gf2::fwht(std::span<double>(f));
      for (std::uint32_t j = 0; j < d.B(); ++j) g.bin(j)[static_cast<std::size_t>(t)] = f[j] * inv_b;
    }
  }
  return groups;
}

enum class BinKind { kZeroTon, kSingleTon, kMultiTon };

inline const char* to_string(BinKind k) {
  switch (k) {
    case BinKind::kZeroTon: return "zero-ton";
    case BinKind::kSingleTon: return "single-ton";
    default: return "multi-ton";
  }
}

struct BinDetection {
  BinKind kind = BinKind::kZeroTon;
  std::optional<PauliLabel> index;
  std::optional<double> value;
  double energy = 0.0;
  double residual = 0.0;
  /// A decoded index failed the M^T alpha = j check.
  bool vetoed = false;
};

struct DetectorParams {
  double nu = 1e-9;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
};

/// Majority decode of the index code. signs[r*2n + k] is the sign bit read for
/// label bit k in copy r, already referenced to that copy's shift.
inline PauliLabel decode_index(std::span<const std::uint8_t> signs, int n, int repetition = 1) {
  if (static_cast<int>(signs.size()) != 2 * n * repetition) throw UsageError("need 2n*r sign bits");
  std::uint64_t v = 0;
  for (int k = 0; k < 2 * n; ++k) {
    int ones = 0;
    for (int r = 0; r < repetition; ++r) ones += signs[static_cast<std::size_t>(r * 2 * n + k)] != 0;
    if (2 * ones > repetition) v |= std::uint64_t{1} << (2 * n - 1 - k);
  }
  return PauliLabel(n, v);
}

/// Zero/single/multi-ton classification of one bin set. Both polarities of
/// the index code are tried because a negative rate flips every sign; the
/// candidate that hashes back to this bin set with the smaller residual wins.
inline BinDetection detect_bin(std::span<const double> u, const SubsamplingGroup& g, std::uint32_t j, double T,
                               const DetectorParams& p) {
  const auto& d = g.design();
  const auto& off = g.offsets();
  if (!(p.nu > 0)) throw UsageError("nu must be positive");
  BinDetection out;
  const auto p1 = static_cast<std::size_t>(d.P1);
  double energy = 0;
  for (std::size_t t = 0; t < p1; ++t) energy += u[t] * u[t];
  energy /= static_cast<double>(p1);
  out.energy = energy;
  if (energy <= T * (1 + p.gamma1) * p.nu * p.nu) return out;

  const int n2 = 2 * d.n;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(d.P2()));
  for (int r = 0; r < d.repetition; ++r) {
    const std::uint8_t ref = r == 0 ? 0 : static_cast<std::uint8_t>(u[static_cast<std::size_t>(r - 1)] < 0);
    for (int k = 0; k < n2; ++k) {
      const auto idx = static_cast<std::size_t>(r * n2 + k);
      raw[idx] = static_cast<std::uint8_t>((u[p1 + idx] < 0) ^ ref);
    }
  }

  struct Candidate {
    PauliLabel label;
    double value;
    double residual;
  };
  std::optional<Candidate> best;
  bool vetoed = false;
  for (int polarity = 0; polarity < 2; ++polarity) {
    std::vector<std::uint8_t> s = raw;
    if (polarity == 1)
      for (int k = 0; k < n2; ++k) s[static_cast<std::size_t>(k)] ^= 1u;
    PauliLabel alpha = decode_index(s, d.n, d.repetition);
    if (g.hash(alpha.bits()) != j) {
      vetoed = true;
      continue;
    }
    double value = 0;
    for (std::size_t t = 0; t < p1; ++t) value += bits::symplectic(off[t], alpha.bits()) ? -u[t] : u[t];
    value /= static_cast<double>(p1);
    double res = 0;
    for (std::size_t t = 0; t < p1; ++t) {
      const double e = u[t] - (bits::symplectic(off[t], alpha.bits()) ? -value : value);
      res += e * e;
    }
    res /= static_cast<double>(p1);
    // The code bins must carry the same term. Without this a collision whose
    // label difference is orthogonal to every random offset passes as a single-ton.
    const double tol = 4.0 * p.nu * std::sqrt(T * (1 + p.gamma2));
    bool code_ok = true;
    for (std::size_t t = p1; t < u.size() && code_ok; ++t) {
      const double expect = bits::symplectic(off[t], alpha.bits()) ? -value : value;
      code_ok = std::abs(u[t] - expect) <= tol;
    }
    if (!code_ok) {
      vetoed = true;
      continue;
    }
    if (!best || res < best->residual) best = Candidate{alpha, value, res};
  }
  if (!best) {
    out.kind = BinKind::kMultiTon;
    out.vetoed = vetoed;
    return out;
  }
  out.residual = best->residual;
  if (best->residual <= T * (1 + p.gamma2) * p.nu * p.nu) {
    out.kind = BinKind::kSingleTon;
    out.index = best->label;
    out.value = best->value;
  } else {
    out.kind = BinKind::kMultiTon;
  }
  return out;
}

struct RecoveredRate {
  PauliLabel label;
  double value = 0.0;
  int group = 0;
  std::uint32_t bin = 0;
  int round = 0;
};

struct TraceEvent {
  int round = 0;
  int group = 0;
  std::uint32_t bin = 0;
  BinKind kind = BinKind::kZeroTon;
  double T = 1.0;
  std::optional<PauliLabel> index;
  std::optional<double> value;
  /// First recovery of this index (peeled into the other groups).
  bool accepted = false;
};

struct PeelResult {
  std::vector<RecoveredRate> rates;
  std::vector<TraceEvent> trace;
  std::vector<std::string> diagnostics;
  int rounds = 0;
  int stuck_multitons = 0;
  int conflicts = 0;
  int duplicates = 0;
  bool hit_max_rounds = false;
};

/// Peeling over all groups, group-major then bin order. Each index is peeled
/// once (first wins); the loop ends when a full pass finds no new index.
inline PeelResult peel(std::vector<SubsamplingGroup>& groups, const DetectorParams& p, int max_rounds = 32,
                       bool keep_trace = false) {
  PeelResult out;
  if (groups.empty()) return out;
  const auto& d = groups.front().design();
  const double N = std::ldexp(1.0, 2 * d.n);
  const double B = static_cast<double>(d.B());
  const double P1 = static_cast<double>(d.P1);
  std::unordered_map<std::uint64_t, std::size_t> found;  // label -> index in rates

  for (int round = 1; round <= max_rounds; ++round) {
    out.rounds = round;
    bool any_new = false;
    int multitons = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      auto& g = groups[c];
      for (std::uint32_t j = 0; j < d.B(); ++j) {
        const double Tj = g.T(j);
        auto det = detect_bin(g.bin(j), g, j, Tj, p);
        TraceEvent ev{round, static_cast<int>(c), j, det.kind, Tj, det.index, det.value, false};
        if (det.kind == BinKind::kMultiTon) ++multitons;
        if (det.kind == BinKind::kSingleTon) {
          const std::uint64_t a = det.index->bits();
          auto it = found.find(a);
          if (it == found.end()) {
            found.emplace(a, out.rates.size());
            out.rates.push_back({*det.index, *det.value, static_cast<int>(c), j, round});
            ev.accepted = true;
            any_new = true;
            for (std::size_t c2 = 0; c2 < groups.size(); ++c2) {
              if (c2 == c) continue;
              auto& g2 = groups[c2];
              const auto j2 = g2.hash(a);
              g2.T(j2) += Tj / P1 + (P1 - 1) * B / (P1 * N);
              g2.subtract(a, *det.value);
            }
          } else {
            const auto& prev = out.rates[it->second];
            if (prev.group != static_cast<int>(c) || prev.bin != j) {
              ++out.duplicates;
              if (std::abs(prev.value - *det.value) > 4 * p.nu) {
                ++out.conflicts;
                out.diagnostics.push_back("decode conflict for " + det.index->to_string() + ": " +
                                          std::to_string(prev.value) + " vs " + std::to_string(*det.value));
              }
            }
          }
        }
        if (keep_trace) out.trace.push_back(std::move(ev));
      }
    }
    out.stuck_multitons = multitons;
    if (!any_new) return out;
  }
  out.hit_max_rounds = true;
  out.diagnostics.push_back("peeling stopped at max_rounds");
  return out;
}

}  // namespace hamlearn
