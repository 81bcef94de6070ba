#ifndef MALAKIT_REGULARITY_HPP
#define MALAKIT_REGULARITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "malakit/errors.hpp"
#include "malakit/hamiltonian.hpp"
#include "malakit/rng.hpp"
#include "malakit/target.hpp"

namespace malakit {

// inc(𝒳₁..𝒳_r) = max_i Σ_j |𝒳_iᵀ𝒳_j|, diagonal included.
inline double incoherence(const Matrix& columns) {
  if (columns.cols() < 1) throw std::invalid_argument("incoherence: need at least one column");
  const Matrix gram = columns.transpose() * columns;
  return gram.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double incoherence(const Dataset& data) { return incoherence(data.features); }

struct Theorem3Bounds {
  double c3;
  double c4;
};

// C₃ = √(rΦ), C₄ = r for empirical ridge sums with |φ'''|, |φ⁗| ≤ 1.
inline Theorem3Bounds theorem3_bounds(Eigen::Index r, double phi) {
  if (r < 1) throw std::invalid_argument("theorem3_bounds: r >= 1");
  if (!(phi >= 1.0)) throw std::invalid_argument("theorem3_bounds: phi >= 1");
  return {std::sqrt(static_cast<double>(r) * phi), static_cast<double>(r)};
}

// Probe design for the C₃/C₄ estimators. Points are drawn from
// N(center, spread²·I); directions are standard Gaussian. Probe (p, j) uses
// its own RNG substream, so adding probes never changes existing ones and the
// estimates are running maxima.
struct ProbeOptions {
  std::size_t points = 64;
  std::size_t directions = 16;
  std::uint64_t seed = 0;
  std::optional<Vector> center;
  double spread = 1.0;
  bool finite_differences = false;  // ignore closed-form derivatives
};

namespace detail {
inline Rng probe_rng(std::uint64_t seed, std::size_t point, std::size_t dir) {
  if (point >= (1u << 24) || dir >= (1u << 24) - 1)
    throw std::invalid_argument("probe counts must stay below 2^24");
  return Rng(seed, streams::kProbe + (static_cast<std::uint64_t>(point) << 24) + dir);
}

inline Vector probe_point(const TargetModel& target, const ProbeOptions& opt, std::size_t p) {
  Rng rng = probe_rng(opt.seed, p, 0);
  Vector x = opt.spread * rng.normal_vector(target.dimension);
  if (opt.center) x += *opt.center;
  return x;
}

inline const Matrix& require_directions(const TargetModel& target, const char* who) {
  if (!target.bad_directions)
    throw std::invalid_argument(std::string(who) + ": target has no bad-direction matrix");
  return *target.bad_directions;
}

inline double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
}  // namespace detail

inline constexpr double kDegenerateDenominator = 1e-12;

// Largest observed |∇³U(x)[u,v,w]| / (‖𝖷ᵀu‖∞ ‖𝖷ᵀv‖∞ ‖w‖₂). A lower bound on C₃.
// The ratio is scale-free, so directions are rescaled to unit denominators
// first; otherwise differencing noise is amplified by small ‖𝖷ᵀu‖∞. Without a
// closed form, ∇³U(x)[u,v,w] comes from a mixed central difference of the
// gradient with h = 1e-3·(1+‖x‖).
inline double estimate_c3(const TargetModel& target, const ProbeOptions& opt) {
  const Matrix& bad = detail::require_directions(target, "estimate_c3");
  if (opt.points < 1 || opt.directions < 1)
    throw std::invalid_argument("estimate_c3: probe counts must be >= 1");
  const bool exact = target.third_derivative && !opt.finite_differences;
  double best = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < opt.points; ++p) {
    const Vector x = detail::probe_point(target, opt, p);
    const double h = 1e-3 * (1.0 + x.norm());
    for (std::size_t j = 0; j < opt.directions; ++j) {
      Rng rng = detail::probe_rng(opt.seed, p, j + 1);
      Vector u = rng.normal_vector(target.dimension);
      Vector v = rng.normal_vector(target.dimension);
      Vector w = rng.normal_vector(target.dimension);
      const double nu = detail::inf_norm(bad.transpose() * u);
      const double nv = detail::inf_norm(bad.transpose() * v);
      const double nw = w.norm();
      if (nu * nv * nw < kDegenerateDenominator) continue;
      u /= nu;
      v /= nv;
      w /= nw;
      double d3;
      if (exact) {
        d3 = target.third_derivative(x, u, v, w);
      } else {
        const Vector diff = target.gradient(x + h * u + h * v) - target.gradient(x + h * u - h * v) -
                            target.gradient(x - h * u + h * v) + target.gradient(x - h * u - h * v);
        d3 = diff.dot(w) / (4.0 * h * h);
      }
      best = std::max(best, std::abs(d3));
      ++used;
    }
  }
  if (used == 0) throw EstimationFailed("estimate_c3: every probe had a degenerate denominator");
  return best;
}

// Largest observed |∇⁴U(x)[u,u,u,u]| / ‖𝖷ᵀu‖∞⁴, with u rescaled to a unit
// denominator, using the five-point fourth difference of U with
// h = 3e-3·(1+‖x‖) when no closed form is available.
inline double estimate_c4(const TargetModel& target, const ProbeOptions& opt) {
  const Matrix& bad = detail::require_directions(target, "estimate_c4");
  if (opt.points < 1 || opt.directions < 1)
    throw std::invalid_argument("estimate_c4: probe counts must be >= 1");
  const bool exact = target.fourth_derivative && !opt.finite_differences;
  double best = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < opt.points; ++p) {
    const Vector x = detail::probe_point(target, opt, p);
    const double h = 3e-3 * (1.0 + x.norm());
    for (std::size_t j = 0; j < opt.directions; ++j) {
      Rng rng = detail::probe_rng(opt.seed, p, j + 1);
      Vector u = rng.normal_vector(target.dimension);
      const double n = detail::inf_norm(bad.transpose() * u);
      if (n * n * n * n < kDegenerateDenominator) continue;
      u /= n;
      double d4;
      if (exact) {
        d4 = target.fourth_derivative(x, u);
      } else {
        const auto& U = target.potential;
        d4 = (U(x + 2.0 * h * u) - 4.0 * U(x + h * u) + 6.0 * U(x) - 4.0 * U(x - h * u) +
              U(x - 2.0 * h * u)) /
             (h * h * h * h);
      }
      best = std::max(best, std::abs(d4));
      ++used;
    }
  }
  if (used == 0) throw EstimationFailed("estimate_c4: every probe had a degenerate denominator");
  return best;
}

struct GradientBoundEstimate {
  double max_gradient_norm = 0.0;  // M in the gradient-bound sense
  double smoothness = 0.0;         // M in the Lipschitz-gradient sense
};

inline GradientBoundEstimate estimate_gradient_bound(const TargetModel& target,
                                                     const std::vector<Vector>& samples) {
  if (samples.empty()) throw std::invalid_argument("estimate_gradient_bound: no samples");
  std::vector<Vector> grads;
  grads.reserve(samples.size());
  GradientBoundEstimate out;
  for (const auto& x : samples) {
    grads.push_back(target.gradient(x));
    out.max_gradient_norm = std::max(out.max_gradient_norm, grads.back().norm());
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double dx = (samples[i] - samples[j]).norm();
      if (dx > 0.0) out.smoothness = std::max(out.smoothness, (grads[i] - grads[j]).norm() / dx);
    }
  return out;
}

struct TailDecayRow {
  double s;
  double empirical;
  double bound;
  bool holds;
};

struct TailDecayReport {
  std::vector<TailDecayRow> rows;
  bool passed = true;
  std::size_t samples = 0;
};

// Compares the empirical survival P(‖X − x*‖ > s) at the deciles of the
// observed distances against e^{−a s/√d}. A decile holds when
// empirical <= bound·(1 + 3·se), se the binomial standard error of the
// empirical value.
inline TailDecayReport tail_decay_check(const std::vector<Vector>& samples, const Vector& x_star,
                                        double a, Eigen::Index d) {
  if (samples.empty()) throw std::invalid_argument("tail_decay_check: no samples");
  if (!(a > 0.0)) throw std::invalid_argument("tail_decay_check: a must be positive");
  std::vector<double> dist;
  dist.reserve(samples.size());
  for (const auto& x : samples) dist.push_back((x - x_star).norm());
  std::sort(dist.begin(), dist.end());
  const auto n = dist.size();
  TailDecayReport rep;
  rep.samples = n;
  for (int k = 1; k <= 9; ++k) {
    const auto idx = static_cast<std::size_t>(std::ceil(k * static_cast<double>(n) / 10.0)) - 1;
    const double s = dist[std::min(idx, n - 1)];
    const auto above = static_cast<double>(dist.end() - std::upper_bound(dist.begin(), dist.end(), s));
    const double emp = above / static_cast<double>(n);
    const double se = std::sqrt(emp * (1.0 - emp) / static_cast<double>(n));
    const double bound = std::exp(-a * s / std::sqrt(static_cast<double>(d)));
    const bool holds = emp <= bound * (1.0 + 3.0 * se);
    rep.rows.push_back({s, emp, bound, holds});
    rep.passed = rep.passed && holds;
  }
  return rep;
}

// Largest a for which every decile of the sample satisfies the tail bound
// (ignoring Monte Carlo slack).
inline double estimate_tail_rate(const std::vector<Vector>& samples, const Vector& x_star,
                                 Eigen::Index d) {
  const auto rep = tail_decay_check(samples, x_star, 1.0, d);
  double a = std::numeric_limits<double>::infinity();
  for (const auto& row : rep.rows)
    if (row.s > 0.0 && row.empirical > 0.0)
      a = std::min(a, -std::sqrt(static_cast<double>(d)) * std::log(row.empirical) / row.s);
  return a;
}

struct GoodSetParams {
  double alpha = 4.0;
  double radius = 1.0;      // R
  double grad_bound = 1.0;  // M
  double horizon = 0.1;     // T; one proposal's worth of trajectory by default
  std::size_t substeps = 32;
  std::optional<Vector> x_star;

  void validate() const {
    if (!(alpha > std::sqrt(2.0))) throw std::invalid_argument("good set: alpha must exceed sqrt(2)");
    if (!(radius > 0.0)) throw std::invalid_argument("good set: R must be positive");
    if (!(grad_bound > 0.0)) throw std::invalid_argument("good set: M must be positive");
    if (!(horizon >= 0.0)) throw std::invalid_argument("good set: T must be nonnegative");
    if (substeps < 1) throw std::invalid_argument("good set: substeps >= 1");
  }
};

// (x, v) ∈ G iff ‖v‖ <= R and, along the trajectory on [0, T] (approximated
// by `substeps` leapfrog micro-steps), ‖𝖷ᵀp_t‖∞ <= α and
// ‖q_t − x*‖ <= 3R/(√2·√M).
inline bool good_set_check(const TargetModel& target, const PhaseState& state,
                           const GoodSetParams& params) {
  params.validate();
  const Matrix& bad = detail::require_directions(target, "good_set_check");
  if (state.velocity.norm() > params.radius) return false;
  const Vector x_star = params.x_star ? *params.x_star : Vector::Zero(target.dimension);
  const double pos_limit = 3.0 * params.radius / (std::sqrt(2.0) * std::sqrt(params.grad_bound));
  auto ok = [&](const PhaseState& s) {
    return detail::inf_norm(bad.transpose() * s.velocity) <= params.alpha &&
           (s.position - x_star).norm() <= pos_limit;
  };
  PhaseState s = state;
  if (!ok(s)) return false;
  if (params.horizon == 0.0) return true;
  const double dt = params.horizon / static_cast<double>(params.substeps);
  for (std::size_t k = 0; k < params.substeps; ++k) {
    s = leapfrog_step(target, s, dt).proposal;
    if (!ok(s)) return false;
  }
  return true;
}

// 1 − N r e^{−(16α²−1)/8} − e^{−(R²−d)/8} − N e^{−a R/(√d √M)}, with
// N = 50⌈(R+1)√M η⌉. The last term is dropped when no tail rate is given.
inline double good_set_probability_bound(double alpha, double radius, double m, double eta,
                                         Eigen::Index d, Eigen::Index r,
                                         std::optional<double> tail_rate = std::nullopt) {
  const double n = 50.0 * std::ceil((radius + 1.0) * std::sqrt(m) * eta);
  const double dd = static_cast<double>(d);
  double b = 1.0 - n * static_cast<double>(r) * std::exp(-(16.0 * alpha * alpha - 1.0) / 8.0) -
             std::exp(-(radius * radius - dd) / 8.0);
  if (tail_rate) b -= n * std::exp(-*tail_rate / std::sqrt(dd) * radius / std::sqrt(m));
  return b;
}

// Alternative step size from the good-set construction:
// safety · min(C₃^{-1/3} R^{-1/3}, R^{-2/3}, C₄^{-1/4}) · min(M^{-1/2}, 1) / α.
inline double good_set_step_size(double c3, double c4, double radius, double m, double alpha,
                                 double safety = 1.0) {
  double term = std::pow(radius, -2.0 / 3.0);
  if (c3 > 0.0) term = std::min(term, std::pow(c3, -1.0 / 3.0) * std::pow(radius, -1.0 / 3.0));
  if (c4 > 0.0) term = std::min(term, std::pow(c4, -0.25));
  return safety * term * std::min(1.0, 1.0 / std::sqrt(m)) / alpha;
}

struct ExitEstimate {
  double probability = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
};

// Monte Carlo estimate of P(z + ηv − ½η²∇U(z) ∈ 𝖲), v ~ N(0, I).
inline ExitEstimate constraint_exit_estimate(const TargetModel& target, const ConstraintSet& set,
                                             double eta, const Vector& z, std::size_t n,
                                             std::uint64_t seed) {
  if (!set(z)) throw std::invalid_argument("constraint_exit_estimate: z is outside the set");
  if (n < 1) throw std::invalid_argument("constraint_exit_estimate: n >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("constraint_exit_estimate: eta > 0");
  Rng rng(seed, streams::kMisc);
  const Vector drift = z - 0.5 * eta * eta * target.gradient(z);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (set(drift + eta * rng.normal_vector(target.dimension))) ++inside;
  ExitEstimate e;
  e.draws = n;
  e.probability = static_cast<double>(inside) / static_cast<double>(n);
  e.std_error = std::sqrt(e.probability * (1.0 - e.probability) / static_cast<double>(n));
  return e;
}

// Estimates are empirical lower bounds (sup over probes); bounds are the
// closed-form values for ridge-sum targets.
struct RegularityReport {
  std::optional<double> incoherence;
  std::optional<double> c3_bound;
  std::optional<double> c4_bound;
  double c3_estimate = 0.0;
  double c4_estimate = 0.0;
  double gradient_bound_estimate = 0.0;
  double smoothness_estimate = 0.0;
  std::optional<double> tail_rate_estimate;
  std::size_t probe_count = 0;
  std::uint64_t seed = 0;

  bool c3_consistent(double tol = 5e-2) const {
    return !c3_bound || c3_estimate <= *c3_bound * (1.0 + tol);
  }
  bool c4_consistent(double tol = 5e-2) const {
    return !c4_bound || c4_estimate <= *c4_bound * (1.0 + tol);
  }

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    return {{"incoherence", opt(incoherence)},
            {"c3_bound", opt(c3_bound)},
            {"c4_bound", opt(c4_bound)},
            {"c3_estimate", c3_estimate},
            {"c4_estimate", c4_estimate},
            {"c3_estimate_kind", "lower bound"},
            {"c4_estimate_kind", "lower bound"},
            {"gradient_bound_estimate", gradient_bound_estimate},
            {"smoothness_estimate", smoothness_estimate},
            {"tail_rate_estimate", opt(tail_rate_estimate)},
            {"probe_count", probe_count},
            {"seed", seed}};
  }
};

// Builds the full report. `region` samples feed the M estimate and, with
// x_star, the tail-rate estimate; when empty the probe points are used.
inline RegularityReport regularity_report(const TargetModel& target, const ProbeOptions& opt,
                                          const std::vector<Vector>& region = {},
                                          const std::optional<Vector>& x_star = std::nullopt) {
  RegularityReport rep;
  rep.seed = opt.seed;
  rep.probe_count = opt.points * opt.directions;
  if (target.bad_directions) {
    const Matrix& bad = *target.bad_directions;
    if (bad.cols() > 0) {
      rep.incoherence = incoherence(bad);
      if (!target.quadratic_precision) {
        const auto b = theorem3_bounds(bad.cols(), *rep.incoherence);
        rep.c3_bound = b.c3;
        rep.c4_bound = b.c4;
      }
    }
    rep.c3_estimate = estimate_c3(target, opt);
    rep.c4_estimate = estimate_c4(target, opt);
  }
  std::vector<Vector> pts = region;
  if (pts.empty())
    for (std::size_t p = 0; p < opt.points; ++p) pts.push_back(detail::probe_point(target, opt, p));
  const auto g = estimate_gradient_bound(target, pts);
  rep.gradient_bound_estimate = g.max_gradient_norm;
  rep.smoothness_estimate = g.smoothness;
  if (x_star && !region.empty()) {
    const double a = estimate_tail_rate(region, *x_star, target.dimension);
    if (std::isfinite(a)) rep.tail_rate_estimate = a;
  }
  return rep;
}

}  // namespace malakit

#endif
