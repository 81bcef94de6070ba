#ifndef MALAKIT_DIAGNOSTICS_HPP
#define MALAKIT_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "malakit/errors.hpp"
#include "malakit/grid.hpp"
#include "malakit/hamiltonian.hpp"
#include "malakit/log.hpp"
#include "malakit/parallel.hpp"
#include "malakit/samplers.hpp"

namespace malakit {

// ---- isoperimetry on 1D grids ------------------------------------------------

// min over interior cell edges t of density(t) / min(Π(t), 1 − Π(t)). In 1D
// the infimum over sets of mass <= ½ is attained by half-lines for the
// unimodal densities we use, so cell-edge cuts are exhaustive.
inline double cheeger_1d(const GridDistribution& pi, const std::function<double(double)>& density) {
  if (pi.dims() != 1) throw std::invalid_argument("cheeger_1d: grid must be 1D");
  const std::size_t n = pi.cells();
  if (n < 2) throw std::invalid_argument("cheeger_1d: need at least two cells");
  const double h = pi.grid.width(0);
  double best = std::numeric_limits<double>::infinity();
  double cum = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    cum += pi.mass[k - 1];
    const double side = std::min(cum, 1.0 - cum);
    if (!(side > 0.0) || side > 0.5 + 1e-12) continue;
    const double t = pi.grid.lower[0] + static_cast<double>(k) * h;
    best = std::min(best, density(t) / side);
  }
  return best;
}

// Normalized density e^{−U}/Z with Z from midpoint quadrature on the grid.
inline std::function<double(double)> grid_density(const TargetModel& target,
                                                  const GridSpec& grid) {
  if (grid.dims() != 1 || target.dimension != 1)
    throw std::invalid_argument("grid_density: 1D only");
  double u_min = std::numeric_limits<double>::infinity();
  std::vector<double> u(grid.cells());
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    u[c] = target.potential(grid.midpoint(c));
    u_min = std::min(u_min, u[c]);
  }
  double z = 0.0;
  for (double v : u) z += std::exp(-(v - u_min));
  z *= grid.width(0);
  auto pot = target.potential;
  return [pot, u_min, z](double t) {
    Vector x(1);
    x[0] = t;
    return std::exp(-(pot(x) - u_min)) / z;
  };
}

inline double cheeger_1d(const TargetModel& target, const GridDistribution& pi) {
  return cheeger_1d(pi, grid_density(target, pi.grid));
}

// Restricted variant: infimum over intervals S of cells inside V with
// π(S) > 0 of (boundary density)/π(S). Edges at the grid ends contribute no
// boundary.
inline double restricted_cheeger_1d(const GridDistribution& pi,
                                    const std::function<double(double)>& density,
                                    const std::function<bool(std::size_t)>& in_region) {
  if (pi.dims() != 1) throw std::invalid_argument("restricted_cheeger_1d: grid must be 1D");
  const std::size_t n = pi.cells();
  const double h = pi.grid.width(0);
  const double lo = pi.grid.lower[0];
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n; ++a) {
    if (!in_region(a)) continue;
    double mass = 0.0;
    for (std::size_t b = a; b < n && in_region(b); ++b) {
      mass += pi.mass[b];
      if (!(mass > 0.0)) continue;
      double boundary = 0.0;
      if (a > 0) boundary += density(lo + static_cast<double>(a) * h);
      if (b + 1 < n) boundary += density(lo + static_cast<double>(b + 1) * h);
      best = std::min(best, boundary / mass);
    }
  }
  return best;
}

// ---- discretized kernels -----------------------------------------------------

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Row-stochastic kernel over grid midpoints: off-diagonal entries are the
// proposal density at the destination midpoint times the cell width times the
// Metropolis acceptance; the remaining mass (rejections and proposals that
// land off the grid) sits on the diagonal.
// Warns when the π-weighted off-grid proposal mass exceeds 1e-6.
inline Matrix transition_matrix_1d(const TargetModel& target, SamplerKind kind, double eta,
                                   const GridSpec& grid) {
  if (grid.dims() != 1 || target.dimension != 1)
    throw std::invalid_argument("transition_matrix_1d: 1D only");
  if (!(eta > 0.0)) throw std::invalid_argument("transition_matrix_1d: eta > 0");
  if (kind == SamplerKind::ConstrainedMALA)
    throw std::invalid_argument("transition_matrix_1d: constrained kernels are not discretized");
  const std::size_t n = grid.cells();
  const double h = grid.width(0);
  std::vector<double> x(n), u(n), mean(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector p = grid.midpoint(i);
    x[i] = p[0];
    u[i] = target.potential(p);
    mean[i] = kind == SamplerKind::RWM ? x[i] : x[i] - 0.5 * eta * eta * target.gradient(p)[0];
  }
  auto log_q = [&](std::size_t from, std::size_t to) {
    const double z = (x[to] - mean[from]) / eta;
    return -0.5 * z * z - std::log(eta * std::sqrt(2.0 * std::numbers::pi));
  };
  Matrix k = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double u_min = *std::min_element(u.begin(), u.end());
  double leak = 0.0, z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double lq_ij = log_q(i, j);
      double log_ratio = u[i] - u[j];
      if (kind == SamplerKind::MALA) log_ratio += log_q(j, i) - lq_ij;
      const double entry = std::exp(lq_ij + std::min(0.0, log_ratio)) * h;
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entry;
      row += entry;
    }
    if (row > 1.0)
      throw std::invalid_argument("transition_matrix_1d: grid too coarse for this step size");
    k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0 - row;
    const double off = normal_cdf((grid.lower[0] - mean[i]) / eta) +
                       normal_cdf(-(grid.upper[0] - mean[i]) / eta);
    const double w = std::exp(-(u[i] - u_min));
    leak += w * off;
    z += w;
  }
  if (leak / z > kTruncationWarnMass)
    warn("transition_matrix_1d: " + format_double(leak / z) +
         " of the stationary proposal mass leaves the grid and is folded into the diagonal");
  return k;
}

// max over i ≠ j of |π_i K_ij − π_j K_ji| / max(π_i K_ij, π_j K_ji, tiny).
inline double detailed_balance_violation(const Matrix& k, const GridDistribution& pi,
                                         double tiny = 1e-300) {
  const auto n = k.rows();
  if (k.cols() != n || static_cast<std::size_t>(n) != pi.cells())
    throw std::invalid_argument("detailed_balance_violation: size mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = pi.mass[static_cast<std::size_t>(i)] * k(i, j);
      const double b = pi.mass[static_cast<std::size_t>(j)] * k(j, i);
      worst = std::max(worst, std::abs(a - b) / std::max({a, b, tiny}));
    }
  return worst;
}

inline double max_row_sum_error(const Matrix& k) {
  return (k.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

// μ ↦ μK.
inline GridDistribution evolve(const GridDistribution& mu, const Matrix& k) {
  Eigen::Map<const Eigen::RowVectorXd> m(mu.mass.data(), static_cast<Eigen::Index>(mu.cells()));
  const Eigen::RowVectorXd next = m * k;
  GridDistribution out{mu.grid, std::vector<double>(next.data(), next.data() + next.size())};
  return out;
}

struct ConductanceOptions {
  std::size_t random_subsets = 10000;
  std::size_t max_intervals = 4;
  std::uint64_t seed = 0;
};

struct ConductanceResult {
  double value = std::numeric_limits<double>::infinity();  // upper bound on Ψ_K
  std::vector<std::pair<std::size_t, std::size_t>> best_cut;  // inclusive intervals
  std::size_t cuts_evaluated = 0;
  std::string family;
};

// min over evaluated cuts S (0 < π(S) <= ½) of Σ_{i∈S, j∉S} π_i K_ij / π(S).
// The family is every prefix and suffix cut (exact for monotone 1D kernels)
// plus random unions of up to `max_intervals` intervals. Each row's exit mass
// is taken from row sums accumulated from the near end, and π(S) is summed
// directly, so far-tail cuts with π(S) near 1e-16 keep their relative accuracy.
inline ConductanceResult conductance(const Matrix& k, const GridDistribution& pi,
                                     const ConductanceOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(k.rows());
  if (k.cols() != k.rows() || n != pi.cells())
    throw std::invalid_argument("conductance: size mismatch");
  const auto N = k.rows();
  // left(i, j) = Σ_{j' < j} K_ij', right(i, j) = Σ_{j' >= j} K_ij'
  Matrix left = Matrix::Zero(N, N + 1), right = Matrix::Zero(N, N + 1);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < N; ++j) left(i, j + 1) = left(i, j) + k(i, j);
    for (Eigen::Index j = N - 1; j >= 0; --j) right(i, j) = right(i, j + 1) + k(i, j);
  }
  // K_i([c, d]) for a column interval not containing i
  auto row_mass = [&](std::size_t i, std::size_t c, std::size_t d) {
    const auto I = static_cast<Eigen::Index>(i);
    const auto C = static_cast<Eigen::Index>(c), D = static_cast<Eigen::Index>(d + 1);
    return d < i ? left(I, D) - left(I, C) : right(I, C) - right(I, D);
  };

  using Intervals = std::vector<std::pair<std::size_t, std::size_t>>;
  ConductanceResult res;
  auto evaluate = [&](const Intervals& s) {
    double mass = 0.0;
    for (auto [a, b] : s)
      for (std::size_t i = a; i <= b; ++i) mass += pi.mass[i];
    if (!(mass > 0.0) || mass > 0.5 + 1e-12) return;
    Intervals comp;
    std::size_t at = 0;
    for (auto [a, b] : s) {
      if (a > at) comp.emplace_back(at, a - 1);
      at = b + 1;
    }
    if (at < n) comp.emplace_back(at, n - 1);
    double flow = 0.0;
    for (auto [a, b] : s)
      for (std::size_t i = a; i <= b; ++i) {
        if (pi.mass[i] == 0.0) continue;
        double out = 0.0;
        for (auto [c, d] : comp) out += row_mass(i, c, d);
        flow += pi.mass[i] * std::max(0.0, out);
      }
    ++res.cuts_evaluated;
    const double phi = flow / mass;
    if (phi < res.value) {
      res.value = phi;
      res.best_cut = s;
    }
  };
  for (std::size_t e = 0; e + 1 < n; ++e) {
    evaluate({{0, e}});
    evaluate({{e + 1, n - 1}});
  }
  Rng rng(opt.seed, streams::kMisc);
  for (std::size_t t = 0; t < opt.random_subsets && n > 1; ++t) {
    const std::size_t m = 1 + rng.next_u64() % std::max<std::size_t>(1, opt.max_intervals);
    std::vector<std::size_t> cuts;
    for (std::size_t q = 0; q < 2 * m; ++q) cuts.push_back(rng.next_u64() % (n + 1));
    std::sort(cuts.begin(), cuts.end());
    Intervals s;
    for (std::size_t q = 0; q + 1 < cuts.size(); q += 2)
      if (cuts[q] < cuts[q + 1]) {
        if (!s.empty() && s.back().second + 1 >= cuts[q])
          s.back().second = cuts[q + 1] - 1;
        else
          s.emplace_back(cuts[q], cuts[q + 1] - 1);
      }
    if (!s.empty()) evaluate(s);
  }
  res.family = "prefix/suffix cuts + " + std::to_string(opt.random_subsets) +
               " random unions of <= " + std::to_string(opt.max_intervals) + " intervals";
  if (res.cuts_evaluated == 0) res.value = 0.0;
  return res;
}

// Restricted conductance over intervals inside V with π(S) > 0.
inline double restricted_conductance_1d(const Matrix& k, const GridDistribution& pi,
                                        const std::function<bool(std::size_t)>& in_region) {
  const auto n = static_cast<std::size_t>(k.rows());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n; ++a) {
    if (!in_region(a)) continue;
    for (std::size_t b = a; b < n && in_region(b); ++b) {
      double mass = 0.0, flow = 0.0;
      for (std::size_t i = a; i <= b; ++i) {
        mass += pi.mass[i];
        double inside = 0.0;
        for (std::size_t j = a; j <= b; ++j)
          inside += k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        flow += pi.mass[i] * (1.0 - inside);
      }
      if (mass > 0.0) best = std::min(best, std::max(0.0, flow) / mass);
    }
  }
  return best;
}

// ---- ensembles, TV and mixing -----------------------------------------------

using InitSampler = std::function<Vector(Rng&)>;

struct EnsembleOptions {
  SamplerKind kind = SamplerKind::MALA;
  double eta = 0.1;
  bool lazy = false;
  std::optional<ConstraintSet> constraint;
  std::size_t replicas = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t floor_batches = 32;
};

// TV between the empirical law of `samples` and `truth`. Samples falling off
// the grid count as mass the truth does not have.
inline double tv_to_truth(const std::vector<Vector>& samples, const GridDistribution& truth) {
  std::vector<double> counts(truth.cells(), 0.0);
  std::size_t out = 0;
  for (const auto& x : samples) {
    if (auto c = truth.grid.locate(x))
      counts[*c] += 1.0;
    else
      ++out;
  }
  const double n = static_cast<double>(samples.size());
  double s = static_cast<double>(out) / n;
  for (std::size_t c = 0; c < counts.size(); ++c) s += std::abs(counts[c] / n - truth.mass[c]);
  return std::min(1.0, 0.5 * s);
}

// Expected TV of `replicas` exact draws from the truth, i.e. the finite-sample
// binning floor. Averaged over `batches` independent batches.
inline double binning_floor(const GridDistribution& truth, std::size_t replicas,
                            std::size_t batches, std::uint64_t seed) {
  GridSampler draw(truth);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    Rng rng(seed, streams::kFloor + b);
    std::vector<Vector> xs;
    xs.reserve(replicas);
    for (std::size_t r = 0; r < replicas; ++r) xs.push_back(draw(rng));
    total += tv_to_truth(xs, truth);
  }
  return total / static_cast<double>(batches);
}

// Independent replica chains advanced in lockstep. Replica r draws its start
// from stream kInit + r and its moves from stream r, so results do not depend
// on the thread count.
class Ensemble {
 public:
  Ensemble(const TargetModel& target, const EnsembleOptions& opt, const InitSampler& init)
      : target_(target), opt_(opt),
        kernel_{opt.kind, opt.eta, opt.lazy,
                opt.kind == SamplerKind::ConstrainedMALA ? opt.constraint : std::nullopt} {
    if (opt.replicas < 1) throw std::invalid_argument("ensemble: replicas >= 1");
    if (opt.kind == SamplerKind::ConstrainedMALA && !opt.constraint)
      throw std::invalid_argument("ensemble: constrained sampler needs a constraint");
    states_.resize(opt.replicas);
    potentials_.resize(opt.replicas);
    rngs_.reserve(opt.replicas);
    for (std::size_t r = 0; r < opt.replicas; ++r) {
      Rng init_rng(opt.seed, streams::kInit + r);
      states_[r] = init(init_rng);
      target.check_dimension(states_[r], "ensemble init");
      if (kernel_.constraint && !(*kernel_.constraint)(states_[r]))
        throw std::invalid_argument("ensemble: initial point outside the constraint");
      potentials_[r] = target.potential(states_[r]);
      rngs_.emplace_back(opt.seed, r);
    }
    accepted_.assign(opt.replicas, 0);
    proposals_.assign(opt.replicas, 0);
    gradient_evals_.assign(opt.replicas, 0);
  }

  void advance(std::size_t steps) {
    parallel_for(states_.size(), opt_.threads, [&](std::size_t r) {
      for (std::size_t s = 0; s < steps; ++s) {
        Kernel::Cost cost;
        StepRecord rec = kernel_.step(target_, states_[r], potentials_[r], rngs_[r], cost);
        gradient_evals_[r] += cost.gradient_evals;
        if (cost.proposed) ++proposals_[r];
        if (rec.accepted) {
          ++accepted_[r];
          states_[r] = std::move(rec.state);
          potentials_[r] = rec.potential;
        }
      }
    });
    iteration_ += steps;
  }

  const std::vector<Vector>& states() const { return states_; }
  std::size_t iteration() const { return iteration_; }
  double acceptance_rate() const {
    std::size_t a = 0, p = 0;
    for (std::size_t r = 0; r < states_.size(); ++r) {
      a += accepted_[r];
      p += proposals_[r];
    }
    return p ? static_cast<double>(a) / static_cast<double>(p) : 0.0;
  }
  std::size_t gradient_evals() const {
    std::size_t g = 0;
    for (auto v : gradient_evals_) g += v;
    return g;
  }

 private:
  const TargetModel& target_;
  EnsembleOptions opt_;
  Kernel kernel_;
  std::vector<Vector> states_;
  std::vector<double> potentials_;
  std::vector<Rng> rngs_;
  std::vector<std::size_t> accepted_, proposals_, gradient_evals_;
  std::size_t iteration_ = 0;
};

struct EnsembleTv {
  double tv = 0.0;
  double floor = 0.0;
  double corrected = 0.0;  // max(0, tv − floor)
  std::size_t replicas = 0;
  std::size_t iterations = 0;
  double acceptance_rate = 0.0;
};

// Distribution-level TV after `iterations` steps of `replicas` chains.
inline EnsembleTv ensemble_tv(const TargetModel& target, const EnsembleOptions& opt,
                              const InitSampler& init, std::size_t iterations,
                              const GridDistribution& truth) {
  Ensemble ens(target, opt, init);
  ens.advance(iterations);
  EnsembleTv out;
  out.tv = tv_to_truth(ens.states(), truth);
  out.floor = binning_floor(truth, opt.replicas, opt.floor_batches, opt.seed);
  out.corrected = std::max(0.0, out.tv - out.floor);
  out.replicas = opt.replicas;
  out.iterations = iterations;
  out.acceptance_rate = ens.acceptance_rate();
  return out;
}

struct MixingEstimate {
  std::optional<std::size_t> iteration;  // nullopt: not mixed within budget
  double floor = 0.0;
  std::vector<std::pair<std::size_t, double>> checkpoints;  // (iteration, raw TV)
  std::size_t replicas = 0;
};

// First checkpoint (0, k, 2k, ...) at which TV − floor <= threshold.
inline MixingEstimate mixing_time_estimate(const TargetModel& target, const EnsembleOptions& opt,
                                           const InitSampler& init, const GridDistribution& truth,
                                           double tv_threshold, std::size_t check_every,
                                           std::size_t max_iterations) {
  if (target.dimension > 2) throw std::invalid_argument("mixing_time_estimate: d <= 2 only");
  if (opt.replicas < 100) throw std::invalid_argument("mixing_time_estimate: replicas >= 100");
  if (check_every < 1) throw std::invalid_argument("mixing_time_estimate: check_every >= 1");
  MixingEstimate est;
  est.replicas = opt.replicas;
  est.floor = binning_floor(truth, opt.replicas, opt.floor_batches, opt.seed);
  Ensemble ens(target, opt, init);
  for (;;) {
    const double tv = tv_to_truth(ens.states(), truth);
    est.checkpoints.emplace_back(ens.iteration(), tv);
    if (tv - est.floor <= tv_threshold) {
      est.iteration = ens.iteration();
      return est;
    }
    if (ens.iteration() + check_every > max_iterations) return est;
    ens.advance(check_every);
  }
}

// ---- trace-level diagnostics --------------------------------------------------

inline std::optional<std::size_t> hitting_time(const ChainTrace& trace, const ConstraintSet& set) {
  for (const auto& rec : trace.records)
    if (set(rec.state)) return rec.index;
  return std::nullopt;
}

struct ScalingFit {
  std::vector<double> log_x;
  std::vector<double> log_y;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<double> dropped;  // x values excluded from the fit

  nlohmann::json to_json() const {
    return {{"log_x", log_x},   {"log_y", log_y},         {"slope", slope},
            {"intercept", intercept}, {"r_squared", r_squared}, {"dropped", dropped}};
  }
};

// Ordinary least squares of log y on log x over pairs with finite, positive
// values.
inline ScalingFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_power_law: size mismatch");
  ScalingFit fit;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] > 0.0 && ys[i] > 0.0 && std::isfinite(xs[i]) && std::isfinite(ys[i])) {
      fit.log_x.push_back(std::log(xs[i]));
      fit.log_y.push_back(std::log(ys[i]));
    } else {
      fit.dropped.push_back(xs[i]);
    }
  }
  const auto n = static_cast<double>(fit.log_x.size());
  if (fit.log_x.size() < 2) throw FitFailed("fit_power_law: fewer than two usable points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < fit.log_x.size(); ++i) {
    mx += fit.log_x[i];
    my += fit.log_y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < fit.log_x.size(); ++i) {
    const double dx = fit.log_x[i] - mx, dy = fit.log_y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw FitFailed("fit_power_law: all x values coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

using PhaseSampler = std::function<PhaseState(Rng&)>;

// Mean |ΔH| of one leapfrog step from phase-space draws, for each η, and the
// log-log slope. Etas with any non-finite ΔH are dropped with a warning.
inline ScalingFit energy_error_scaling(const TargetModel& target, const PhaseSampler& phase,
                                       const std::vector<double>& etas,
                                       std::size_t samples_per_eta, std::uint64_t seed) {
  if (etas.size() < 3) throw std::invalid_argument("energy_error_scaling: need >= 3 step sizes");
  const auto [lo, hi] = std::minmax_element(etas.begin(), etas.end());
  if (!(*lo > 0.0) || *hi / *lo < 10.0 - 1e-9)
    throw std::invalid_argument("energy_error_scaling: step sizes must span a decade");
  if (target.constants.gradient_bound)
    for (double eta : etas)
      if (eta * eta * *target.constants.gradient_bound >= 2.0)
        throw std::invalid_argument("energy_error_scaling: eta^2 M >= 2 is outside stability");
  if (samples_per_eta < 1) throw std::invalid_argument("energy_error_scaling: samples >= 1");
  std::vector<double> means;
  for (std::size_t e = 0; e < etas.size(); ++e) {
    // Same phase points for every η (common random numbers).
    Rng rng(seed, streams::kMisc);
    double total = 0.0;
    bool finite = true;
    for (std::size_t s = 0; s < samples_per_eta && finite; ++s) {
      const PhaseState p = phase(rng);
      double err;
      try {
        err = leapfrog_step(target, p, etas[e]).energy_error;
      } catch (const NumericFailure&) {
        err = std::numeric_limits<double>::infinity();
      }
      if (!std::isfinite(err)) finite = false;
      total += std::abs(err);
    }
    if (!finite) {
      warn("energy_error_scaling: dropping eta=" + format_double(etas[e]) +
           " (non-finite energy error)");
      means.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      means.push_back(total / static_cast<double>(samples_per_eta));
    }
  }
  std::size_t usable = 0;
  for (double m : means) usable += std::isfinite(m) ? 1 : 0;
  if (usable < 3) throw FitFailed("energy_error_scaling: fewer than 3 usable step sizes");
  return fit_power_law(etas, means);
}

struct AcceptanceStats {
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double accepted_fraction = 0.0;
  std::size_t proposals = 0;
};

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

// Statistics of exp(log_accept) over the recorded proposals (the initial record
// and lazy holds are excluded).
inline AcceptanceStats acceptance_stats(const ChainTrace& trace) {
  if (trace.records.empty()) throw std::invalid_argument("acceptance_stats: empty trace");
  std::vector<double> probs;
  std::size_t accepted = 0;
  for (const auto& rec : trace.records) {
    if (rec.index == 0 || rec.held) continue;
    probs.push_back(std::exp(rec.log_accept));
    if (rec.accepted) ++accepted;
  }
  AcceptanceStats st;
  st.proposals = probs.size();
  if (probs.empty()) return st;
  double total = 0.0;
  for (double p : probs) total += p;
  st.mean = total / static_cast<double>(probs.size());
  st.accepted_fraction = static_cast<double>(accepted) / static_cast<double>(probs.size());
  std::sort(probs.begin(), probs.end());
  st.q05 = quantile_sorted(probs, 0.05);
  st.q50 = quantile_sorted(probs, 0.50);
  st.q95 = quantile_sorted(probs, 0.95);
  return st;
}

struct HansonWrightResult {
  double empirical = 0.0;
  double bound = 0.0;
  double std_error = 0.0;
  bool holds = false;
  std::size_t n = 0;
};

// P[‖Z‖₂ > ξ] <= e^{−(ξ²−d)/8} for Z ~ N(0, I_d), ξ >= √(2d) (both sides are
// continuous in ξ, so the boundary is included).
inline HansonWrightResult hanson_wright_check(Eigen::Index d, double xi, std::size_t n,
                                              std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("hanson_wright_check: d >= 1");
  if (!(xi >= std::sqrt(2.0 * static_cast<double>(d))))
    throw std::invalid_argument("hanson_wright_check: bound needs xi >= sqrt(2d)");
  if (n < 10000) throw std::invalid_argument("hanson_wright_check: n >= 1e4");
  Rng rng(seed, streams::kMisc);
  std::size_t above = 0;
  const double xi2 = xi * xi;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double z = rng.normal();
      s += z * z;
    }
    if (s > xi2) ++above;
  }
  HansonWrightResult r;
  r.n = n;
  r.empirical = static_cast<double>(above) / static_cast<double>(n);
  r.bound = std::exp(-(xi2 - static_cast<double>(d)) / 8.0);
  r.std_error = std::sqrt(r.empirical * (1.0 - r.empirical) / static_cast<double>(n));
  r.holds = r.empirical <= r.bound + 3.0 * r.std_error;
  return r;
}

}  // namespace malakit

#endif
