#ifndef MALAKIT_HAMILTONIAN_HPP
#define MALAKIT_HAMILTONIAN_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "malakit/errors.hpp"
#include "malakit/target.hpp"

namespace malakit {

struct PhaseState {
  Vector position;
  Vector velocity;

  PhaseState() = default;
  PhaseState(Vector x, Vector v) : position(std::move(x)), velocity(std::move(v)) {
    if (position.size() != velocity.size())
      throw std::invalid_argument("PhaseState: position and velocity lengths differ");
  }
};

struct LeapfrogResult {
  PhaseState proposal;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double energy_error = 0.0;  // energy_after - energy_before
  double potential_before = 0.0;
  double potential_after = 0.0;
  int gradient_evals = 0;
};

inline double kinetic_energy(const Vector& v) { return 0.5 * v.squaredNorm(); }

// 𝓗(x, v) = U(x) + ½‖v‖².
inline double hamiltonian(const TargetModel& target, const PhaseState& state) {
  target.check_dimension(state.position, "hamiltonian");
  target.check_dimension(state.velocity, "hamiltonian");
  return target.potential(state.position) + kinetic_energy(state.velocity);
}

namespace detail {
inline void require_finite(const Vector& g, const char* where) {
  if (g.allFinite()) return;
  std::vector<std::size_t> bad;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) bad.push_back(static_cast<std::size_t>(i));
  std::ostringstream os;
  os << where << ": non-finite gradient at coordinates";
  for (auto i : bad) os << ' ' << i;
  throw NumericFailure(os.str(), std::move(bad));
}
}  // namespace detail

// One leapfrog step of length η:
//   x̂ = x + ηv − ½η²∇U(x)
//   v̂ = v − ½η(∇U(x) + ∇U(x̂))
inline LeapfrogResult leapfrog_step(const TargetModel& target, const PhaseState& state,
                                    double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("leapfrog_step: eta must be positive");
  target.check_dimension(state.position, "leapfrog_step");
  target.check_dimension(state.velocity, "leapfrog_step");
  const Vector& x = state.position;
  const Vector& v = state.velocity;

  const Vector g = target.gradient(x);
  detail::require_finite(g, "leapfrog_step");
  Vector x_hat = x + eta * v - (0.5 * eta * eta) * g;
  const Vector g_hat = target.gradient(x_hat);
  detail::require_finite(g_hat, "leapfrog_step");
  Vector v_hat = v - (0.5 * eta) * (g + g_hat);

  LeapfrogResult out;
  out.potential_before = target.potential(x);
  out.potential_after = target.potential(x_hat);
  out.energy_before = out.potential_before + kinetic_energy(v);
  out.energy_after = out.potential_after + kinetic_energy(v_hat);
  out.energy_error = out.energy_after - out.energy_before;
  out.proposal = PhaseState(std::move(x_hat), std::move(v_hat));
  out.gradient_evals = 2;
  return out;
}

// Closed-form Hamiltonian flow for diagonal quadratic targets: each coordinate
// is a harmonic oscillator with frequency √λ (free motion when λ = 0).
inline PhaseState exact_quadratic_flow(const TargetModel& target, const PhaseState& state,
                                       double t) {
  if (!target.quadratic_precision)
    throw UnsupportedTarget("exact_quadratic_flow: target '" + target.id +
                            "' has no analytic flow");
  target.check_dimension(state.position, "exact_quadratic_flow");
  const Vector& lam = *target.quadratic_precision;
  PhaseState out(state.position, state.velocity);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double q0 = state.position[i];
    const double p0 = state.velocity[i];
    if (lam[i] == 0.0) {
      out.position[i] = q0 + p0 * t;
      continue;
    }
    const double w = std::sqrt(lam[i]);
    const double c = std::cos(w * t);
    const double s = std::sin(w * t);
    out.position[i] = q0 * c + (p0 / w) * s;
    out.velocity[i] = p0 * c - q0 * w * s;
  }
  return out;
}

// log of min(1, e^{-ΔH}).
inline double log_accept_energy(double energy_error) {
  if (!std::isfinite(energy_error))
    throw std::invalid_argument("log_accept_energy: energy error must be finite");
  return std::min(0.0, -energy_error);
}

// log N(b; a − ½η²∇U(a), η²I), dropping the normalizing constant (it cancels
// in every ratio).
inline double log_langevin_proposal(const TargetModel& target, const Vector& from,
                                    const Vector& to, double eta) {
  const Vector mean = from - (0.5 * eta * eta) * target.gradient(from);
  return -(to - mean).squaredNorm() / (2.0 * eta * eta);
}

// Metropolis–Hastings form of the MALA acceptance:
//   min(0, log π(x̂) + log q(x̂→x) − log π(x) − log q(x→x̂)).
inline double log_accept_proposal_form(const TargetModel& target, const Vector& x,
                                       const Vector& x_hat, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("log_accept_proposal_form: eta must be positive");
  target.check_dimension(x, "log_accept_proposal_form");
  target.check_dimension(x_hat, "log_accept_proposal_form");
  const double log_ratio = (target.potential(x) - target.potential(x_hat)) +
                           log_langevin_proposal(target, x_hat, x, eta) -
                           log_langevin_proposal(target, x, x_hat, eta);
  return std::min(0.0, log_ratio);
}

// η³C₃‖𝖷ᵀv‖∞²‖𝖷ᵀv‖₂ + η⁴C₄‖𝖷ᵀv‖∞⁴: upper bound on the kinetic-energy part of
// the leapfrog energy error.
inline double kinetic_error_bound(double c3, double c4, const Matrix& bad_directions,
                                  const Vector& v, double eta) {
  if (c3 < 0.0 || c4 < 0.0) throw std::invalid_argument("kinetic_error_bound: C3, C4 >= 0");
  if (bad_directions.rows() != v.size())
    throw std::invalid_argument("kinetic_error_bound: direction matrix rows != dim(v)");
  const Vector proj = bad_directions.transpose() * v;
  const double inf = proj.size() ? proj.cwiseAbs().maxCoeff() : 0.0;
  const double two = proj.norm();
  const double e3 = eta * eta * eta;
  return e3 * c3 * inf * inf * two + e3 * eta * c4 * inf * inf * inf * inf;
}

}  // namespace malakit

#endif
