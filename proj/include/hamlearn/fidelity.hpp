#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/channel_sim.hpp"
#include "hamlearn/errors.hpp"
#include "hamlearn/pauli.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

enum class InterceptMode { kFitted, kPinned };

/// Time grid and polynomial model shared by every second-order fit.
struct FitOptions {
  double t0 = 0.05;
  int num_times = 5;
  int order = 2;
  InterceptMode intercept = InterceptMode::kFitted;

  std::vector<double> times() const {
    std::vector<double> t;
    for (int i = 1; i <= num_times; ++i) t.push_back(i * t0);
    return t;
  }
};

struct RegressionFit {
  double c2 = 0.0;
  /// Polynomial coefficients in increasing power (intercept first when fitted).
  std::vector<double> coefficients;
  std::vector<double> fitted;
  double residual_rms = 0.0;
  double std_error = 0.0;
};

/// Least squares on 1, t^2, t^4, ... (optionally odd powers too). The pseudo
/// inverse is computed once so fitting many labels on one grid is a dot product.
class EvenPolyDesign {
 public:
  EvenPolyDesign(std::vector<double> times, int order, InterceptMode intercept, bool include_odd = false,
                 double anchor = 1.0)
      : times_(std::move(times)), order_(order), intercept_(intercept), anchor_(anchor) {
    if (order != 2 && order != 4 && order != 6) throw UsageError("fit order must be 2, 4 or 6");
    auto sorted = times_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw UsageError("duplicated fit times");
    for (double t : times_)
      if (!(t > 0) || !std::isfinite(t)) throw UsageError("fit times must be positive");
    scale_ = sorted.empty() ? 1.0 : sorted.back();
    if (intercept_ == InterceptMode::kFitted) powers_.push_back(0);
    for (int p = 1; p <= order; ++p)
      if (include_odd || p % 2 == 0) powers_.push_back(p);
    const auto k = static_cast<Eigen::Index>(times_.size());
    const auto cols = static_cast<Eigen::Index>(powers_.size());
    if (k < cols) throw UsageError("need at least " + std::to_string(cols) + " distinct times for this fit");
    design_.resize(k, cols);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        design_(i, j) = std::pow(times_[static_cast<std::size_t>(i)] / scale_, powers_[static_cast<std::size_t>(j)]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0)) throw UsageError("ill-conditioned fit design");
    pinv_ = svd.solve(Eigen::MatrixXd::Identity(k, k));
    c2_row_ = static_cast<Eigen::Index>(std::find(powers_.begin(), powers_.end(), 2) - powers_.begin());
    c2_weights_ = pinv_.row(c2_row_).transpose() / (scale_ * scale_);
  }

  const std::vector<double>& times() const { return times_; }
  int order() const { return order_; }
  InterceptMode intercept() const { return intercept_; }

  /// c2 = w . (f - anchor) when pinned, w . f when fitted.
  const Eigen::VectorXd& c2_weights() const { return c2_weights_; }

  /// Std of c2 per unit of fidelity noise.
  double noise_gain() const { return c2_weights_.norm(); }

  /// Bound on |c2 error| per unit of bounded fidelity error, times t0^2.
  double regression_constant(double t0) const { return c2_weights_.lpNorm<1>() * t0 * t0; }

  double c2(std::span<const double> f) const {
    double v = 0;
    for (std::size_t i = 0; i < f.size(); ++i) v += c2_weights_(static_cast<Eigen::Index>(i)) * shifted(f[i]);
    return v;
  }

  RegressionFit fit(std::span<const double> f, double sigma_f = 0.0) const {
    if (f.size() != times_.size()) throw UsageError("sample count does not match the time grid");
    Eigen::VectorXd y(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) y(static_cast<Eigen::Index>(i)) = shifted(f[i]);
    Eigen::VectorXd beta = pinv_ * y;
    Eigen::VectorXd yhat = design_ * beta;
    RegressionFit r;
    for (std::size_t j = 0; j < powers_.size(); ++j)
      r.coefficients.push_back(beta(static_cast<Eigen::Index>(j)) / std::pow(scale_, powers_[j]));
    r.c2 = r.coefficients[static_cast<std::size_t>(c2_row_)];
    double rss = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double base = intercept_ == InterceptMode::kPinned ? anchor_ : 0.0;
      r.fitted.push_back(yhat(i) + base);
      rss += (y(i) - yhat(i)) * (y(i) - yhat(i));
    }
    r.residual_rms = std::sqrt(rss / static_cast<double>(y.size()));
    const auto dof = static_cast<double>(y.size()) - static_cast<double>(powers_.size());
    if (sigma_f > 0) {
      r.std_error = sigma_f * noise_gain();
    } else if (dof > 0) {
      r.std_error = std::sqrt(rss / dof) * noise_gain();
    }
    return r;
  }

 private:
  double shifted(double f) const { return intercept_ == InterceptMode::kPinned ? f - anchor_ : f; }

  std::vector<double> times_;
  int order_;
  InterceptMode intercept_;
  double anchor_;
  double scale_ = 1.0;
  std::vector<int> powers_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd pinv_;
  Eigen::Index c2_row_ = 0;
  Eigen::VectorXd c2_weights_;
};

struct FitDiagnostic {
  PauliLabel label;
  std::vector<double> times;
  std::vector<double> observed;
  std::vector<double> fitted;
  double c2 = 0.0;
  double std_error = 0.0;
  bool clipped = false;
  bool positive_flag = false;
};

/// Coefficients of t^2 in the fidelity expansion, keyed by label.
struct SecondOrderFidelity {
  std::unordered_map<PauliLabel, double> values;
  int fit_order = 2;
  double t0 = 0.0;
  double regression_constant = 0.0;
  double noise_gain = 0.0;
  std::vector<FitDiagnostic> residuals;
  std::vector<std::string> diagnostics;

  double at(const PauliLabel& x) const {
    if (x.is_identity()) return 0.0;
    auto it = values.find(x);
    if (it == values.end()) throw UsageError("no second-order fidelity for " + x.to_string());
    return it->second;
  }
};

/// Clips a fitted c2 at 0. Returns true if the value was significantly positive.
inline bool clip_second_order(double& c2, double std_error) {
  if (c2 <= 0) return false;
  const bool flag = std_error > 0 ? c2 > 3.0 * std_error : c2 > 1e-9;
  c2 = 0.0;
  return flag;
}

using TimeSeries = std::vector<std::pair<double, double>>;

inline SecondOrderFidelity regress_second_order(const std::map<PauliLabel, TimeSeries>& samples, double t0,
                                                int fit_order, InterceptMode intercept = InterceptMode::kFitted,
                                                double sigma_f = 0.0) {
  SecondOrderFidelity out;
  out.fit_order = fit_order;
  out.t0 = t0;
  for (const auto& [label, series] : samples) {
    std::vector<double> t, f;
    for (const auto& [ti, fi] : series) {
      t.push_back(ti);
      f.push_back(fi);
    }
    EvenPolyDesign design(t, fit_order, intercept);
    out.regression_constant = std::max(out.regression_constant, design.regression_constant(t0));
    out.noise_gain = std::max(out.noise_gain, design.noise_gain());
    if (label.is_identity()) {
      out.values[label] = 0.0;
      continue;
    }
    auto fit = design.fit(f, sigma_f);
    FitDiagnostic d{label, t, f, fit.fitted, fit.c2, fit.std_error, false, false};
    double c2 = fit.c2;
    d.clipped = c2 > 0;
    d.positive_flag = clip_second_order(c2, fit.std_error);
    if (d.positive_flag)
      out.diagnostics.push_back("positive second-order fidelity for " + label.to_string() + " beyond 3 std errors");
    out.values[label] = c2;
    out.residuals.push_back(std::move(d));
  }
  return out;
}

inline double ratio_estimate(double composite, double reference) {
  if (!(reference > 0)) throw DegenerateReferenceError("reference fidelity is not positive");
  return composite / reference;
}

// ---- randomized benchmarking estimators ----

struct DecaySamples {
  double reference = 0.0;
  std::vector<std::pair<int, double>> by_length;
  int sequences = 0;
};

struct DecayEstimate {
  std::map<PauliLabel, double> residual;
  std::map<PauliLabel, DecaySamples> samples;
  bool hit_length_cap = false;

  double fidelity(const PauliLabel& x) const { return 1.0 - residual.at(x); }
};

struct EstimatorOptions {
  int sequences = 1000;
  int max_length = 1024;
};

/// Shared-sequence decay estimation over all labels of X (which must lie in the
/// sampler's group): reference at one gate, then doubling lengths until the
/// statistic falls to a third of the reference.
inline DecayEstimate estimate_decay(const RbSampler& sampler, const std::vector<PauliLabel>& X,
                                    const EstimatorOptions& opt, Rng& rng) {
  if (opt.sequences < 1) throw UsageError("sequence count must be >= 1");
  if (opt.max_length < 1) throw UsageError("max sequence length must be >= 1");
  const auto& G = sampler.group();
  DecayEstimate out;
  std::vector<PauliLabel> active;
  std::vector<std::uint64_t> masks;
  for (const auto& x : X) {
    auto K = G.decompose(x);
    if (!K) throw UsageError(x.to_string() + " is not in the stabilizer group");
    if (x.is_identity()) {
      out.residual[x] = 0.0;
      continue;
    }
    if (std::find(active.begin(), active.end(), x) != active.end()) continue;
    active.push_back(x);
    masks.push_back(*K);
  }
  if (active.empty()) return out;

  auto run = [&](int m) {
    std::vector<double> acc(active.size(), 0.0);
    for (int s = 0; s < opt.sequences; ++s) {
      auto o = sampler.sample(m, rng);
      const std::uint64_t v = G.syndrome(o.pauli_sum) ^ o.syndrome;
      for (std::size_t i = 0; i < active.size(); ++i) acc[i] += gf2::parity(masks[i] & v) ? -1.0 : 1.0;
    }
    for (auto& a : acc) a /= opt.sequences;
    return acc;
  };

  auto ref = run(0);
  std::vector<bool> done(active.size(), false);
  for (std::size_t i = 0; i < active.size(); ++i) {
    out.samples[active[i]].reference = ref[i];
    out.samples[active[i]].sequences = opt.sequences;
  }
  std::vector<double> last(active.size(), 0.0);
  int last_m = 1;
  for (int m = 1; m <= opt.max_length; m *= 2) {
    auto w = run(m);
    bool any = false;
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (done[i]) continue;
      out.samples[active[i]].by_length.emplace_back(m, w[i]);
      last[i] = w[i];
      const double v = ref[i];
      if (w[i] <= 0 || v <= 0) {
        out.residual[active[i]] = 1.0;
        done[i] = true;
      } else if (w[i] <= v / 3.0) {
        out.residual[active[i]] = 1.0 - std::pow(w[i] / v, 1.0 / m);
        done[i] = true;
      } else {
        any = true;
      }
    }
    last_m = m;
    if (!any) break;
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (done[i]) continue;
    out.hit_length_cap = true;
    out.residual[active[i]] = 1.0 - std::pow(last[i] / ref[i], 1.0 / last_m);
  }
  return out;
}

/// Residuals of the noise channel alone.
inline DecayEstimate festimator(const StabilizerGroup& G, const std::vector<PauliLabel>& X, int l,
                                const NoiseConfig& noise, Rng& rng, int max_length = 1024) {
  RbSampler sampler(G, noise);
  return estimate_decay(sampler, X, {l, max_length}, rng);
}

/// Residuals of the evolution channel composed with the noise channel.
inline DecayEstimate hfestimator(const StabilizerGroup& G, const std::vector<PauliLabel>& X, int l, double t,
                                 const EvolutionOracle& oracle, Rng& rng, int max_length = 1024) {
  Eigen::MatrixXd r = oracle.transfer_matrix(t);
  RbSampler sampler(G, oracle.noise(), &r);
  return estimate_decay(sampler, X, {l, max_length}, rng);
}

// ---- second-order fidelity sources used by the decoder ----

/// Fits c2 for one label at a time and keeps per-label diagnostics.
class SecondOrderSource {
 public:
  virtual ~SecondOrderSource() = default;
  virtual double operator()(const PauliLabel& x) = 0;
  virtual double noise_gain() const = 0;
  virtual double regression_constant() const = 0;

  std::vector<FitDiagnostic> diagnostics() const {
    std::lock_guard lock(mu_);
    return rows_;
  }
  int positive_flags() const { return positive_flags_.load(); }
  int degenerate_labels() const { return degenerate_.load(); }
  void keep_diagnostics(bool on) { keep_ = on; }

 protected:
  double finish(const PauliLabel& x, const EvenPolyDesign& design, const std::vector<double>& f, double sigma_f) {
    auto fit = design.fit(f, sigma_f);
    double c2 = fit.c2;
    const bool clipped = c2 > 0;
    const bool flag = clip_second_order(c2, fit.std_error);
    if (flag) ++positive_flags_;
    if (keep_) {
      std::lock_guard lock(mu_);
      rows_.push_back({x, design.times(), f, fit.fitted, fit.c2, fit.std_error, clipped, flag});
    }
    return c2;
  }

  mutable std::mutex mu_;
  std::vector<FitDiagnostic> rows_;
  std::atomic<int> positive_flags_{0};
  std::atomic<int> degenerate_{0};
  bool keep_ = false;
};

/// Analytic oracle: noisy fidelity queries at i*t0 fed straight into the fit.
class AnalyticSecondOrderSource : public SecondOrderSource {
 public:
  AnalyticSecondOrderSource(const EvolutionOracle& oracle, FitOptions fit, std::uint64_t seed)
      : oracle_(oracle), fit_(fit), design_(fit.times(), fit.order, fit.intercept), seed_(seed) {}

  double operator()(const PauliLabel& x) override {
    if (x.is_identity()) return 0.0;
    Rng rng = make_rng(seed_, "fidelity", x.bits());
    std::vector<double> f;
    for (double t : design_.times()) f.push_back(oracle_.fidelity_query(t, x, rng));
    return finish(x, design_, f, oracle_.noise().fidelity_noise_sigma);
  }

  double noise_gain() const override { return design_.noise_gain(); }
  double regression_constant() const override { return design_.regression_constant(fit_.t0); }
  const EvenPolyDesign& design() const { return design_; }

 private:
  const EvolutionOracle& oracle_;
  FitOptions fit_;
  EvenPolyDesign design_;
  std::uint64_t seed_;
};

/// Circuit oracle: plain and interleaved decay estimates per time, ratio, fit.
class CircuitSecondOrderSource : public SecondOrderSource {
 public:
  CircuitSecondOrderSource(const EvolutionOracle& oracle, FitOptions fit, std::uint64_t seed, int max_length = 1024)
      : oracle_(oracle), fit_(fit), design_(fit.times(), fit.order, fit.intercept), seed_(seed),
        max_length_(max_length) {
    if (!oracle.noise().circuit_mode()) throw UsageError("circuit source needs lambda_fidelities and shots");
    for (double t : design_.times()) transfer_.push_back(oracle.transfer_matrix(t));
  }

  double operator()(const PauliLabel& x) override {
    if (x.is_identity()) return 0.0;
    const int l = *oracle_.noise().shots;
    auto G = covering_group(x);
    Rng rng = make_rng(seed_, "circuit", x.bits());
    RbSampler plain(G, oracle_.noise());
    const double f_lambda = estimate_decay(plain, {x}, {l, max_length_}, rng).fidelity(x);
    oracle_.meter().record_fidelity(x);
    std::vector<double> f;
    for (std::size_t i = 0; i < transfer_.size(); ++i) {
      RbSampler inter(G, oracle_.noise(), &transfer_[i]);
      const double f_comp = estimate_decay(inter, {x}, {l, max_length_}, rng).fidelity(x);
      try {
        f.push_back(ratio_estimate(f_comp, f_lambda));
      } catch (const DegenerateReferenceError&) {
        ++degenerate_;
        return 0.0;
      }
    }
    return finish(x, design_, f, 0.0);
  }

  double noise_gain() const override { return design_.noise_gain(); }
  double regression_constant() const override { return design_.regression_constant(fit_.t0); }

 private:
  const EvolutionOracle& oracle_;
  FitOptions fit_;
  EvenPolyDesign design_;
  std::uint64_t seed_;
  int max_length_;
  std::vector<Eigen::MatrixXd> transfer_;
};

/// Exact second-order fidelity sum_a s_a^2 [(-1)^{<a,x>_p} - 1] straight from H.
inline double exact_second_order(const SparseHamiltonian& h, const PauliLabel& x) {
  double v = 0;
  for (const auto& t : h.terms())
    if (symplectic_product(t.label, x)) v -= 2.0 * t.coeff * t.coeff;
  return v;
}

}  // namespace hamlearn
