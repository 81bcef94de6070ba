#ifndef MALAKIT_TARGET_HPP
#define MALAKIT_TARGET_HPP

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "malakit/dataset.hpp"

namespace malakit {

// Constants a target may advertise. M is carried as a single number that
// serves as both the gradient-norm bound and the gradient Lipschitz constant;
// the two roles coincide for every built-in target on the regions we probe.
struct KnownConstants {
  std::optional<double> gradient_bound;  // M
  std::optional<double> c3;
  std::optional<double> c4;
  std::optional<double> tail_rate;  // a
};

using PotentialFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;
// ∇³U(x)[u, v, w]
using ThirdDerivativeFn =
    std::function<double(const Vector&, const Vector&, const Vector&, const Vector&)>;
// ∇⁴U(x)[u, u, u, u]
using FourthDerivativeFn = std::function<double(const Vector&, const Vector&)>;

// Target density π ∝ e^{-U}. Immutable once built; copies share the
// underlying data, so one model can back any number of concurrent chains.
struct TargetModel {
  std::string id;
  Eigen::Index dimension = 0;
  PotentialFn potential;
  GradientFn gradient;
  ThirdDerivativeFn third_derivative;    // empty unless known in closed form
  FourthDerivativeFn fourth_derivative;  // empty unless known in closed form
  std::optional<Matrix> bad_directions;  // d x r, unit columns
  KnownConstants constants;
  // Diagonal precision of a quadratic target; presence means the exact
  // Hamiltonian flow is available.
  std::optional<Vector> quadratic_precision;
  std::optional<double> log_normalizer;
  bool nonconvex = false;

  void check_dimension(const Vector& x, const char* who) const {
    if (x.size() != dimension)
      throw std::invalid_argument(std::string(who) + ": dimension mismatch (got " +
                                  std::to_string(x.size()) + ", target has " +
                                  std::to_string(dimension) + ")");
  }
};

// ---- constraint sets --------------------------------------------------------

struct ConstraintSet {
  std::function<bool(const Vector&)> contains;
  std::string description;
  std::optional<std::pair<double, double>> annulus_radii;

  bool operator()(const Vector& x) const { return contains(x); }
};

inline ConstraintSet whole_space() {
  return {[](const Vector&) { return true; }, "R^d", std::nullopt};
}

// Closed annulus inner <= ‖x‖₂ <= outer.
inline ConstraintSet annulus(double inner, double outer) {
  if (!(inner > 0.0) || !(inner < outer))
    throw std::invalid_argument("annulus: need 0 < inner < outer");
  return {[inner, outer](const Vector& x) {
            const double n = x.norm();
            return n >= inner && n <= outer;
          },
          "annulus[" + format_double(inner) + "," + format_double(outer) + "]",
          std::make_pair(inner, outer)};
}

// Points whose direction is within `angle` radians of `axis`.
inline ConstraintSet cone(const Vector& axis, double angle) {
  const Vector u = axis.normalized();
  const double c = std::cos(angle);
  return {[u, c](const Vector& x) {
            const double n = x.norm();
            return n > 0.0 && u.dot(x) / n >= c;
          },
          "cone(" + format_double(angle) + ")", std::nullopt};
}

inline ConstraintSet intersect(ConstraintSet a, ConstraintSet b) {
  auto desc = a.description + " & " + b.description;
  return {[a = std::move(a), b = std::move(b)](const Vector& x) { return a(x) && b(x); },
          std::move(desc), std::nullopt};
}

// ---- quadratic targets ------------------------------------------------------

inline TargetModel make_gaussian(Eigen::Index d, const Vector& precision) {
  if (d < 1) throw std::invalid_argument("make_gaussian: d must be >= 1");
  if (precision.size() != d) throw std::invalid_argument("make_gaussian: precision size != d");
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(precision[i] > 0.0) || !std::isfinite(precision[i]))
      throw std::invalid_argument("make_gaussian: precision entries must be positive");
  TargetModel t;
  t.id = "gaussian(d=" + std::to_string(d) + ")";
  t.dimension = d;
  t.potential = [precision](const Vector& x) {
    return 0.5 * (precision.array() * x.array().square()).sum();
  };
  t.gradient = [precision](const Vector& x) -> Vector { return precision.cwiseProduct(x); };
  t.third_derivative = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return 0.0;
  };
  t.fourth_derivative = [](const Vector&, const Vector&) { return 0.0; };
  t.bad_directions = Matrix::Identity(d, d);
  t.constants = {precision.maxCoeff(), 0.0, 0.0, std::nullopt};
  t.quadratic_precision = precision;
  t.log_normalizer = 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                     0.5 * precision.array().log().sum();
  return t;
}

inline TargetModel make_standard_gaussian(Eigen::Index d) {
  return make_gaussian(d, Vector::Ones(d));
}

// U ≡ 0. Improper, but useful for free-particle checks.
inline TargetModel make_flat(Eigen::Index d) {
  if (d < 1) throw std::invalid_argument("make_flat: d must be >= 1");
  TargetModel t;
  t.id = "flat(d=" + std::to_string(d) + ")";
  t.dimension = d;
  t.potential = [](const Vector&) { return 0.0; };
  t.gradient = [d](const Vector&) -> Vector { return Vector::Zero(d); };
  t.third_derivative = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return 0.0;
  };
  t.fourth_derivative = [](const Vector&, const Vector&) { return 0.0; };
  t.bad_directions = Matrix::Identity(d, d);
  t.constants = {0.0, 0.0, 0.0, std::nullopt};
  t.quadratic_precision = Vector::Zero(d);
  return t;
}

// ---- ridge sums -------------------------------------------------------------
//
// U(x) = ½·prior·‖x‖² + Σ_i w_i φ(k_i 𝒳_iᵀx). Every regression target is of
// this form, so value, gradient and the third/fourth directional derivatives
// share one implementation.

enum class Link { LogisticLoss, Sigmoid };

// φ and its first four derivatives at s. LogisticLoss is φ(s) = log(1+e^{-s});
// Sigmoid is φ(s) = 1/(1+e^{-s}). Only e^{-|s|} is ever formed.
inline std::array<double, 5> link_derivatives(Link link, double s) {
  const double e = std::exp(-std::abs(s));
  const double p = s >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);  // σ(s)
  const double q = s >= 0.0 ? e / (1.0 + e) : 1.0 / (1.0 + e);  // σ(-s)
  const double pq = p * q;
  if (link == Link::LogisticLoss) {
    const double value = s >= 0.0 ? std::log1p(e) : -s + std::log1p(e);
    return {value, -q, pq, pq * (q - p), pq * (1.0 - 6.0 * pq)};
  }
  return {p, pq, pq * (q - p), pq * (1.0 - 6.0 * pq), pq * (q - p) * (1.0 - 12.0 * pq)};
}

struct RidgeSum {
  Matrix features;  // d x r
  Vector weights;
  Vector slopes;
  double prior = 0.0;
  Link link = Link::LogisticLoss;

  double value(const Vector& x) const {
    double u = 0.5 * prior * x.squaredNorm();
    if (features.cols() == 0) return u;
    const Vector s = features.transpose() * x;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      u += weights[i] * link_derivatives(link, slopes[i] * s[i])[0];
    return u;
  }

  Vector gradient(const Vector& x) const {
    Vector g = prior * x;
    if (features.cols() == 0) return g;
    const Vector s = features.transpose() * x;
    Vector coef(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
      coef[i] = weights[i] * slopes[i] * link_derivatives(link, slopes[i] * s[i])[1];
    g.noalias() += features * coef;
    return g;
  }

  double third(const Vector& x, const Vector& u, const Vector& v, const Vector& w) const {
    if (features.cols() == 0) return 0.0;
    const Vector s = features.transpose() * x;
    const Vector pu = features.transpose() * u;
    const Vector pv = features.transpose() * v;
    const Vector pw = features.transpose() * w;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double k = slopes[i];
      acc += weights[i] * k * k * k * link_derivatives(link, k * s[i])[3] * pu[i] * pv[i] * pw[i];
    }
    return acc;
  }

  double fourth(const Vector& x, const Vector& u) const {
    if (features.cols() == 0) return 0.0;
    const Vector s = features.transpose() * x;
    const Vector pu = features.transpose() * u;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double k2 = slopes[i] * slopes[i];
      const double p2 = pu[i] * pu[i];
      acc += weights[i] * k2 * k2 * link_derivatives(link, slopes[i] * s[i])[4] * p2 * p2;
    }
    return acc;
  }
};

inline TargetModel from_ridge_sum(std::shared_ptr<const RidgeSum> rs, std::string id) {
  TargetModel t;
  t.id = std::move(id);
  t.dimension = rs->features.rows();
  t.potential = [rs](const Vector& x) { return rs->value(x); };
  t.gradient = [rs](const Vector& x) { return rs->gradient(x); };
  t.third_derivative = [rs](const Vector& x, const Vector& u, const Vector& v, const Vector& w) {
    return rs->third(x, u, v, w);
  };
  t.fourth_derivative = [rs](const Vector& x, const Vector& u) { return rs->fourth(x, u); };
  if (rs->features.cols() > 0) t.bad_directions = rs->features;
  t.nonconvex = rs->link == Link::Sigmoid;
  return t;
}

namespace detail {
inline TargetModel make_regression(const Dataset& data, double prior, Link link,
                                   const std::string& name) {
  data.validate();
  if (!(prior >= 0.0) || !std::isfinite(prior))
    throw std::invalid_argument(name + ": prior precision must be nonnegative");
  if (!data.has_binary_labels())
    throw std::invalid_argument(name + ": responses must be 0/1");
  auto rs = std::make_shared<RidgeSum>();
  rs->features = data.features;
  rs->weights = Vector::Ones(data.size());
  // 𝒴 φ(s) + (1-𝒴) φ(-s): slope +1 for 𝒴=1, -1 for 𝒴=0.
  rs->slopes = 2.0 * data.responses.array() - 1.0;
  rs->prior = prior;
  rs->link = link;
  return from_ridge_sum(std::move(rs), name + "(d=" + std::to_string(data.dim()) +
                                           ",r=" + std::to_string(data.size()) + ")");
}
}  // namespace detail

// Negative log-posterior of Bayesian logistic regression:
// (prior/2)‖θ‖² + Σ_i [𝒴_i φ(θᵀ𝒳_i) + (1-𝒴_i) φ(-θᵀ𝒳_i)], φ(s) = log(1+e^{-s}).
inline TargetModel make_logistic_regression(const Dataset& data, double prior_precision) {
  return detail::make_regression(data, prior_precision, Link::LogisticLoss, "logistic");
}

// Same form with the non-convex sigmoid loss φ(s) = 1/(1+e^{-s}).
inline TargetModel make_sigmoid_regression(const Dataset& data, double prior_precision) {
  return detail::make_regression(data, prior_precision, Link::Sigmoid, "sigmoid");
}

// Smoothed zero-one loss at inverse temperature T⁻¹:
//   U(x) = T⁻¹ · (1/r) Σ_i ℓ̂(λ · x/(d^{1/4}λ); (𝒳_i, 𝒴_i)),
//   ℓ̂(a; (𝒳, 𝒴)) = σ(-𝒴 𝒳ᵀa),
// with ±1 responses. λ cancels inside the composition, so the surrogate's
// steepness is carried by T⁻¹ alone.
inline TargetModel make_smoothed_zero_one(const Dataset& data, double inverse_temperature,
                                          double lambda) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("make_smoothed_zero_one: r must be >= 1");
  if (!(inverse_temperature > 0.0)) throw std::invalid_argument("make_smoothed_zero_one: T^-1 > 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("make_smoothed_zero_one: lambda > 0");
  if (!data.has_sign_labels())
    throw std::invalid_argument("make_smoothed_zero_one: responses must be +-1");
  const double r = static_cast<double>(data.size());
  const double root4d = std::pow(static_cast<double>(data.dim()), 0.25);
  auto rs = std::make_shared<RidgeSum>();
  rs->features = data.features;
  rs->weights = Vector::Constant(data.size(), inverse_temperature / r);
  const double scale = lambda / (root4d * lambda);
  rs->slopes = -scale * data.responses;
  rs->prior = 0.0;
  rs->link = Link::Sigmoid;
  auto t = from_ridge_sum(std::move(rs), "zero_one(d=" + std::to_string(data.dim()) +
                                             ",r=" + std::to_string(data.size()) + ")");
  t.nonconvex = true;
  return t;
}

struct ZeroOneSchedule {
  double inverse_temperature;
  double lambda;
};

// T⁻¹ = c1·d^{3/2}/(q0·ε²) and λ = 100√d/(T·|log T|).
inline ZeroOneSchedule recommended_schedule(double q0, double epsilon, Eigen::Index d,
                                            double c1 = 1.0) {
  if (!(q0 > 0.0 && q0 <= 1.0)) throw std::invalid_argument("recommended_schedule: q0 in (0,1]");
  if (!(epsilon > 0.0) || epsilon > 0.1)
    throw std::invalid_argument("recommended_schedule: epsilon must lie in (0, 1/10]");
  if (d < 1) throw std::invalid_argument("recommended_schedule: d >= 1");
  if (!(c1 > 0.0)) throw std::invalid_argument("recommended_schedule: c1 > 0");
  const double dd = static_cast<double>(d);
  const double inv_t = c1 * std::pow(dd, 1.5) / (q0 * epsilon * epsilon);
  const double t = 1.0 / inv_t;
  const double log_t = std::abs(std::log(t));
  if (log_t == 0.0) throw std::invalid_argument("recommended_schedule: temperature is exactly 1");
  return {inv_t, 100.0 * std::sqrt(dd) / (t * log_t)};
}

// x ↦ U(scale·x). Gradient picks up one factor of scale, the k-th directional
// derivative scale^k. The advertised M is rescaled in its gradient-bound
// sense (×scale); in its smoothness sense it would scale by scale².
inline TargetModel precondition(const TargetModel& target, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("precondition: scale must be positive");
  TargetModel t = target;
  t.id = target.id + "*" + format_double(scale);
  auto u = target.potential;
  auto g = target.gradient;
  t.potential = [u, scale](const Vector& x) { return u(scale * x); };
  t.gradient = [g, scale](const Vector& x) -> Vector { return scale * g(scale * x); };
  if (target.third_derivative) {
    auto f = target.third_derivative;
    t.third_derivative = [f, scale](const Vector& x, const Vector& a, const Vector& b,
                                    const Vector& c) {
      return scale * scale * scale * f(scale * x, a, b, c);
    };
  }
  if (target.fourth_derivative) {
    auto f = target.fourth_derivative;
    t.fourth_derivative = [f, scale](const Vector& x, const Vector& a) {
      const double s2 = scale * scale;
      return s2 * s2 * f(scale * x, a);
    };
  }
  if (t.constants.gradient_bound) *t.constants.gradient_bound *= scale;
  if (t.constants.c3) *t.constants.c3 *= scale * scale * scale;
  if (t.constants.c4) *t.constants.c4 *= scale * scale * scale * scale;
  if (t.constants.tail_rate) *t.constants.tail_rate *= scale;
  if (t.quadratic_precision) t.quadratic_precision = (*t.quadratic_precision) * (scale * scale);
  if (t.log_normalizer)
    t.log_normalizer = *t.log_normalizer - static_cast<double>(t.dimension) * std::log(scale);
  return t;
}

}  // namespace malakit

#endif
