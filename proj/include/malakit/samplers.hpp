#ifndef MALAKIT_SAMPLERS_HPP
#define MALAKIT_SAMPLERS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "malakit/grid.hpp"
#include "malakit/hamiltonian.hpp"
#include "malakit/rng.hpp"
#include "malakit/target.hpp"

namespace malakit {

enum class SamplerKind { MALA, RWM, ConstrainedMALA };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::MALA: return "mala";
    case SamplerKind::RWM: return "rwm";
    case SamplerKind::ConstrainedMALA: return "constrained_mala";
  }
  return "?";
}

inline std::optional<SamplerKind> parse_sampler_kind(const std::string& s) {
  if (s == "mala") return SamplerKind::MALA;
  if (s == "rwm") return SamplerKind::RWM;
  if (s == "constrained_mala") return SamplerKind::ConstrainedMALA;
  return std::nullopt;
}

struct ChainConfig {
  double step_size = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // RNG stream within the seed, e.g. a replica index
  bool lazy = false;         // hold with probability ½ before each kernel move
  std::optional<ConstraintSet> constraint;
  std::size_t record_every = 1;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw std::invalid_argument("chain config: step size must be positive");
    if (iterations < 1) throw std::invalid_argument("chain config: iterations must be >= 1");
    if (record_every < 1) throw std::invalid_argument("chain config: record_every must be >= 1");
  }
};

// One transition. For MALA, energy_error is the leapfrog ΔH; for RWM it is
// U(ẑ) − U(z). Either way log_accept = min(0, −energy_error), except for
// lazy holds, which carry zeros. Record 0 of a trace is the initial state.
struct StepRecord {
  std::size_t index = 0;
  Vector state;
  Vector proposed;
  double energy_error = 0.0;
  double log_accept = 0.0;
  bool accepted = false;
  bool held = false;
  std::optional<bool> in_constraint;
  double potential = 0.0;
};

struct ChainTrace {
  std::vector<StepRecord> records;
  ChainConfig config;
  SamplerKind kind = SamplerKind::MALA;
  std::string target_id;
  std::size_t gradient_evals = 0;
  std::size_t function_evals = 0;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  // Minimum of U over every iterate 0..iterations, including unrecorded ones.
  std::size_t argmin_index = 0;
  Vector best_state;
  double best_potential = std::numeric_limits<double>::infinity();

  const Vector& final_state() const { return records.back().state; }
};

// MALA step: v ~ N(0, I), leapfrog, accept with min(1, e^{−ΔH}).
// The velocity is dropped after the decision.
inline StepRecord mala_step(const TargetModel& target, const Vector& x, double eta, Rng& rng) {
  const Vector v = rng.normal_vector(target.dimension);
  const LeapfrogResult lf = leapfrog_step(target, PhaseState(x, v), eta);
  StepRecord rec;
  rec.energy_error = lf.energy_error;
  rec.log_accept = log_accept_energy(lf.energy_error);
  rec.proposed = lf.proposal.position;
  rec.accepted = std::log(rng.uniform()) < rec.log_accept;
  if (rec.accepted) {
    rec.state = lf.proposal.position;
    rec.potential = lf.potential_after;
  } else {
    rec.state = x;
    rec.potential = lf.potential_before;
  }
  return rec;
}

// RWM step: ẑ = z + ηv, accepted with min(1, e^{U(z) − U(ẑ)}).
inline StepRecord rwm_step(const TargetModel& target, const Vector& z, double eta, Rng& rng) {
  if (!(eta > 0.0)) throw std::invalid_argument("rwm_step: eta must be positive");
  target.check_dimension(z, "rwm_step");
  const Vector v = rng.normal_vector(target.dimension);
  StepRecord rec;
  rec.proposed = z + eta * v;
  const double u_now = target.potential(z);
  const double u_new = target.potential(rec.proposed);
  rec.energy_error = u_new - u_now;
  rec.log_accept = std::isfinite(rec.energy_error) ? std::min(0.0, -rec.energy_error)
                                                   : -std::numeric_limits<double>::infinity();
  rec.accepted = std::log(rng.uniform()) < rec.log_accept;
  rec.state = rec.accepted ? rec.proposed : z;
  rec.potential = rec.accepted ? u_new : u_now;
  return rec;
}

inline constexpr int kMalaGradientEvals = 2;
inline constexpr int kMalaFunctionEvals = 2;
inline constexpr int kRwmFunctionEvals = 2;

// A single transition of any of the three chains, with the lazy coin applied
// first. Draw order per step: [lazy coin], velocity, acceptance uniform.
struct Kernel {
  SamplerKind kind = SamplerKind::MALA;
  double eta = 0.0;
  bool lazy = false;
  std::optional<ConstraintSet> constraint;

  struct Cost {
    std::size_t gradient_evals = 0;
    std::size_t function_evals = 0;
    bool proposed = false;
  };

  StepRecord step(const TargetModel& target, const Vector& x, double current_potential, Rng& rng,
                  Cost& cost) const {
    if (lazy && rng.uniform() < 0.5) {
      StepRecord rec;
      rec.state = x;
      rec.proposed = x;
      rec.held = true;
      rec.potential = current_potential;
      return rec;
    }
    cost.proposed = true;
    if (kind == SamplerKind::RWM) {
      cost.function_evals += kRwmFunctionEvals;
      return rwm_step(target, x, eta, rng);
    }
    cost.gradient_evals += kMalaGradientEvals;
    cost.function_evals += kMalaFunctionEvals;
    StepRecord rec = mala_step(target, x, eta, rng);
    if (kind == SamplerKind::ConstrainedMALA && constraint) {
      // Metropolis decision first, then the membership check on Z.
      const bool inside = (*constraint)(rec.proposed);
      rec.in_constraint = inside;
      if (rec.accepted && !inside) {
        rec.accepted = false;
        rec.state = x;
        rec.potential = current_potential;
      }
    }
    return rec;
  }
};

namespace detail {
inline ChainTrace run_chain(SamplerKind kind, const TargetModel& target, const ChainConfig& config,
                            const Vector& init) {
  config.validate();
  target.check_dimension(init, "run_chain");
  if (!init.allFinite()) throw std::invalid_argument("run_chain: initial point is not finite");
  if (kind == SamplerKind::ConstrainedMALA) {
    if (!config.constraint)
      throw std::invalid_argument("run_constrained_mala: a constraint set is required");
    if (!(*config.constraint)(init))
      throw std::invalid_argument("run_constrained_mala: initial point is outside the constraint");
  }
  Kernel kernel{kind, config.step_size, config.lazy,
                kind == SamplerKind::ConstrainedMALA ? config.constraint : std::nullopt};
  Rng rng(config.seed, config.stream);

  ChainTrace trace;
  trace.config = config;
  trace.kind = kind;
  trace.target_id = target.id;
  trace.records.reserve(config.iterations / config.record_every + 2);

  StepRecord first;
  first.index = 0;
  first.state = init;
  first.proposed = init;
  first.potential = target.potential(init);
  ++trace.function_evals;
  if (kind == SamplerKind::ConstrainedMALA) first.in_constraint = true;
  trace.best_state = init;
  trace.best_potential = first.potential;
  trace.argmin_index = 0;

  Vector x = init;
  double ux = first.potential;
  trace.records.push_back(std::move(first));
  for (std::size_t i = 1; i <= config.iterations; ++i) {
    Kernel::Cost cost;
    StepRecord rec = kernel.step(target, x, ux, rng, cost);
    rec.index = i;
    trace.gradient_evals += cost.gradient_evals;
    trace.function_evals += cost.function_evals;
    if (cost.proposed) ++trace.proposals;
    if (rec.accepted) {
      ++trace.accepted;
      x = rec.state;
      ux = rec.potential;
    }
    if (ux < trace.best_potential) {
      trace.best_potential = ux;
      trace.best_state = x;
      trace.argmin_index = i;
    }
    if (i % config.record_every == 0 || i == config.iterations)
      trace.records.push_back(std::move(rec));
  }
  return trace;
}
}  // namespace detail

inline ChainTrace run_mala(const TargetModel& target, const ChainConfig& config,
                           const Vector& init) {
  return detail::run_chain(SamplerKind::MALA, target, config, init);
}

inline ChainTrace run_rwm(const TargetModel& target, const ChainConfig& config,
                          const Vector& init) {
  return detail::run_chain(SamplerKind::RWM, target, config, init);
}

// Constrained MALA: Metropolis accept, then reject again if Z leaves 𝖲.
inline ChainTrace run_constrained_mala(const TargetModel& target, const ChainConfig& config,
                                       const Vector& init) {
  return detail::run_chain(SamplerKind::ConstrainedMALA, target, config, init);
}

inline ChainTrace run_chain(SamplerKind kind, const TargetModel& target, const ChainConfig& config,
                            const Vector& init) {
  return detail::run_chain(kind, target, config, init);
}

struct Minimizer {
  Vector state;
  double potential;
  std::size_t index;
};

// x̂* = X_{i*}, i* = argmin_i U(X_i).
inline Minimizer extract_minimizer(const ChainTrace& trace) {
  if (trace.records.empty()) throw std::invalid_argument("extract_minimizer: empty trace");
  return {trace.best_state, trace.best_potential, trace.argmin_index};
}

// safety · min(C₃^{-1/3} d^{-1/6}, d^{-1/3}, C₄^{-1/4}) · min(1, M^{-1/2}) · loglog,
// with zero C₃/C₄ terms dropped and loglog = min(1, 1/max(1, log log(1/a))).
// A non-positive tail rate means "unknown" and leaves the factor at 1.
inline double theorem1_step_size(double c3, double c4, double m, Eigen::Index d, double tail_rate,
                                 double safety) {
  if (!(m > 0.0)) throw std::invalid_argument("theorem1_step_size: M must be positive");
  if (d < 1) throw std::invalid_argument("theorem1_step_size: d must be >= 1");
  if (!(safety > 0.0)) throw std::invalid_argument("theorem1_step_size: safety constant > 0");
  if (c3 < 0.0 || c4 < 0.0) throw std::invalid_argument("theorem1_step_size: C3, C4 >= 0");
  const double dd = static_cast<double>(d);
  double term = std::pow(dd, -1.0 / 3.0);
  if (c3 > 0.0) term = std::min(term, std::pow(c3, -1.0 / 3.0) * std::pow(dd, -1.0 / 6.0));
  if (c4 > 0.0) term = std::min(term, std::pow(c4, -0.25));
  double loglog = 1.0;
  if (tail_rate > 0.0) {
    const double l = std::log(1.0 / tail_rate);
    if (l > 1.0) loglog = std::min(1.0, 1.0 / std::max(1.0, std::log(l)));
  }
  return safety * term * std::min(1.0, 1.0 / std::sqrt(m)) * loglog;
}

// sup_S μ₀(S)/π(S) on a grid is the largest cell ratio. Returns +∞ when μ₀
// puts mass on a cell that π does not charge.
inline double warmness_on_grid(const GridDistribution& start, const GridDistribution& target) {
  if (!(start.grid == target.grid)) throw std::invalid_argument("warmness_on_grid: grid mismatch");
  double beta = 0.0;
  for (std::size_t c = 0; c < start.mass.size(); ++c) {
    if (start.mass[c] <= 0.0) continue;
    if (target.mass[c] <= 0.0) return std::numeric_limits<double>::infinity();
    beta = std::max(beta, start.mass[c] / target.mass[c]);
  }
  return beta;
}

}  // namespace malakit

#endif
