#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "malakit/dataset.hpp"
#include "malakit/diagnostics.hpp"
#include "oracles.hpp"

using namespace malakit;

namespace {
const GridSpec kLine = GridSpec::line(-8, 8, 400);

InitSampler point_init(double x) {
  return [x](Rng&) { return Vector::Constant(1, x); };
}

InitSampler gaussian_init(double mean, double sd) {
  return [mean, sd](Rng& rng) { return Vector::Constant(1, mean + sd * rng.normal()); };
}

// Flow out of S = cells [0, k) divided by π(S), by explicit loops.
double prefix_cut_ratio(const Matrix& k, const GridDistribution& pi, std::size_t cut) {
  double flow = 0, mass = 0;
  for (std::size_t i = 0; i < cut; ++i) {
    mass += pi.mass[i];
    for (std::size_t j = cut; j < pi.cells(); ++j)
      flow += pi.mass[i] * k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return flow / mass;
}
}  // namespace

TEST(Cheeger, UniformIsTwo) {
  const auto g = GridSpec::line(0, 1, 100);
  const auto pi = grid_truth(make_flat(1), g);
  EXPECT_NEAR(cheeger_1d(pi, [](double) { return 1.0; }), 2.0, 1e-9);
}

TEST(Cheeger, StandardGaussian) {
  const auto g = make_standard_gaussian(1);
  const auto pi = grid_truth(g, kLine);
  EXPECT_NEAR(cheeger_1d(g, pi), 2.0 * oracle::normal_pdf(0.0), 1e-3);
  EXPECT_NEAR(cheeger_1d(pi, oracle::normal_pdf), 0.798, 1e-3);
}

TEST(Cheeger, DilationScalesInversely) {
  const auto base = make_standard_gaussian(1);
  const double psi = cheeger_1d(base, grid_truth(base, kLine));
  for (double c : {2.0, 4.0}) {
    const auto wide = make_gaussian(1, Vector::Constant(1, 1.0 / (c * c)));
    const auto g = GridSpec::line(-8 * c, 8 * c, 400);
    const double psi_c = cheeger_1d(wide, grid_truth(wide, g));
    EXPECT_NEAR(psi_c * c / psi, 1.0, 0.02) << "c=" << c;
  }
}

TEST(Cheeger, SingleCellRejected) {
  GridDistribution one{GridSpec::line(0, 1, 1), {1.0}};
  EXPECT_THROW(cheeger_1d(one, [](double) { return 1.0; }), std::invalid_argument);
}

TEST(Cheeger, RestrictedShrinksWithRegion) {
  const auto g = make_standard_gaussian(1);
  const auto pi = grid_truth(g, kLine);
  const auto dens = grid_density(g, kLine);
  const double narrow = restricted_cheeger_1d(pi, dens, [](std::size_t c) { return c >= 180 && c < 220; });
  const double wide = restricted_cheeger_1d(pi, dens, [](std::size_t c) { return c >= 100 && c < 300; });
  EXPECT_GE(narrow, wide);
  EXPECT_GT(wide, 0.0);
}

TEST(TransitionMatrix, FlatRwmIsSymmetricGaussian) {
  const auto g = GridSpec::line(-4, 4, 80);
  const Matrix k = transition_matrix_1d(make_flat(1), SamplerKind::RWM, 0.5, g);
  const double h = 0.1;
  for (Eigen::Index i = 0; i < 80; i += 7)
    for (Eigen::Index j = 0; j < 80; j += 5) {
      if (i == j) continue;
      EXPECT_NEAR(k(i, j), k(j, i), 1e-15);
      const double dz = (j - i) * h / 0.5;
      EXPECT_NEAR(k(i, j), oracle::normal_pdf(dz) / 0.5 * h, 1e-13);
    }
}

TEST(TransitionMatrix, RowsStochasticAndReversible) {
  const auto pi = grid_truth(make_standard_gaussian(1), kLine);
  for (auto kind : {SamplerKind::MALA, SamplerKind::RWM})
    for (double eta : {0.1, 0.5, 1.0}) {
      const Matrix k = transition_matrix_1d(make_standard_gaussian(1), kind, eta, kLine);
      EXPECT_LE(max_row_sum_error(k), 1e-9);
      EXPECT_GE(k.minCoeff(), 0.0);
      EXPECT_LE(detailed_balance_violation(k, pi), 1e-8) << to_string(kind) << " eta=" << eta;
    }
}

TEST(TransitionMatrix, LogisticTargetReversible) {
  Dataset data;
  data.features = Matrix::Ones(1, 3);
  data.responses = Vector(3);
  data.responses << 1, 0, 1;
  const auto t = make_logistic_regression(data, 0.5);
  const auto pi = grid_truth(t, kLine);
  const Matrix k = transition_matrix_1d(t, SamplerKind::MALA, 0.4, kLine);
  EXPECT_LE(max_row_sum_error(k), 1e-9);
  EXPECT_LE(detailed_balance_violation(k, pi), 1e-8);
}

TEST(TransitionMatrix, PowerIterationTvNonIncreasing) {
  const auto g = make_standard_gaussian(1);
  const auto pi = grid_truth(g, kLine);
  const Matrix k = transition_matrix_1d(g, SamplerKind::MALA, 0.5, kLine);
  GridDistribution mu{kLine, std::vector<double>(400, 0.0)};
  mu.mass[250] = 1.0;  // x ≈ 2
  double prev = tv_distance(mu, pi);
  for (int n = 0; n < 300; ++n) {
    mu = evolve(mu, k);
    const double tv = tv_distance(mu, pi);
    EXPECT_LE(tv, prev + 1e-12) << "n=" << n;
    prev = tv;
  }
  EXPECT_LT(prev, 0.01);
  // π is stationary for the matrix.
  EXPECT_LT(tv_distance(evolve(pi, k), pi), 1e-12);
}

TEST(Conductance, IdentityHasNoFlow) {
  const auto pi = grid_truth(make_standard_gaussian(1), GridSpec::line(-4, 4, 40));
  const auto res = conductance(Matrix::Identity(40, 40), pi);
  EXPECT_EQ(res.value, 0.0);
  EXPECT_FALSE(res.family.empty());
}

TEST(Conductance, TwoStateChain) {
  GridDistribution pi{GridSpec::line(0, 1, 2), {0.5, 0.5}};
  for (double p : {0.05, 0.3, 0.9}) {
    Matrix k(2, 2);
    k << 1 - p, p, p, 1 - p;
    EXPECT_NEAR(conductance(k, pi).value, p, 1e-15);
  }
}

TEST(Conductance, NoWorseThanEveryPrefixCut) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-6, 6, 120);
  const auto pi = grid_truth(g, grid);
  const Matrix k = transition_matrix_1d(g, SamplerKind::MALA, 0.3, grid);
  ConductanceOptions opt;
  opt.random_subsets = 2000;
  const auto res = conductance(k, pi, opt);
  double cum = 0;
  for (std::size_t cut = 1; cut < 120; ++cut) {
    cum += pi.mass[cut - 1];
    if (cum > 0.5) break;
    EXPECT_LE(res.value, prefix_cut_ratio(k, pi, cut) + 1e-12);
  }
  EXPECT_GT(res.value, 0.0);
  EXPECT_LE(res.value, 1.0);
  EXPECT_EQ(conductance(k, pi, opt).value, res.value);
}

TEST(Conductance, RestrictedNotBelowUnrestrictedOnFullRegion) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-6, 6, 60);
  const auto pi = grid_truth(g, grid);
  const Matrix k = transition_matrix_1d(g, SamplerKind::MALA, 0.3, grid);
  const double small = restricted_conductance_1d(k, pi, [](std::size_t c) { return c >= 25 && c < 35; });
  const double large = restricted_conductance_1d(k, pi, [](std::size_t c) { return c >= 10 && c < 50; });
  EXPECT_GE(small, large);
}

TEST(Ensemble, ThreadCountDoesNotChangeStates) {
  const auto g = make_standard_gaussian(1);
  EnsembleOptions opt;
  opt.eta = 0.7;
  opt.replicas = 64;
  opt.seed = 3;
  Ensemble one(g, opt, gaussian_init(1, 1));
  opt.threads = 4;
  Ensemble four(g, opt, gaussian_init(1, 1));
  one.advance(50);
  four.advance(50);
  for (std::size_t r = 0; r < 64; ++r) EXPECT_EQ(one.states()[r], four.states()[r]);
  EXPECT_EQ(one.acceptance_rate(), four.acceptance_rate());
  EXPECT_EQ(one.gradient_evals(), 2u * 64u * 50u);
}

TEST(TvToTruth, OffGridSamplesCount) {
  GridDistribution t{GridSpec::line(0, 1, 2), {0.5, 0.5}};
  EXPECT_NEAR(tv_to_truth({Vector::Constant(1, 0.25), Vector::Constant(1, 0.75)}, t), 0.0, 1e-15);
  EXPECT_NEAR(tv_to_truth({Vector::Constant(1, 0.25), Vector::Constant(1, 7.0)}, t), 0.5, 1e-15);
}

TEST(BinningFloor, ShrinksWithReplicas) {
  const auto pi = grid_truth(make_standard_gaussian(1), GridSpec::line(-5, 5, 40));
  const double f100 = binning_floor(pi, 100, 16, 1);
  const double f10000 = binning_floor(pi, 10000, 16, 1);
  EXPECT_GT(f100, f10000);
  EXPECT_LT(f10000, 0.05);
}

TEST(Mixing, StationaryStartMixesImmediately) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-5, 5, 40);
  const auto pi = grid_truth(g, grid);
  GridSampler draw(pi);
  EnsembleOptions opt;
  opt.eta = 0.5;
  opt.replicas = 1000;
  opt.seed = 4;
  const auto est = mixing_time_estimate(g, opt, [&](Rng& r) { return draw(r); }, pi, 0.05, 5, 100);
  ASSERT_TRUE(est.iteration);
  EXPECT_EQ(*est.iteration, 0u);
}

TEST(Mixing, MalaNoSlowerThanRwm) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-5, 5, 40);
  const auto pi = grid_truth(g, grid);
  EnsembleOptions opt;
  opt.eta = 0.5;
  opt.replicas = 1000;
  opt.seed = 6;
  const auto mala = mixing_time_estimate(g, opt, gaussian_init(3, 0.3), pi, 0.05, 1, 3000);
  opt.kind = SamplerKind::RWM;
  const auto rwm = mixing_time_estimate(g, opt, gaussian_init(3, 0.3), pi, 0.05, 1, 3000);
  ASSERT_TRUE(mala.iteration && rwm.iteration);
  EXPECT_LE(*mala.iteration, *rwm.iteration);
  EXPECT_GT(*mala.iteration, 0u);
}

TEST(Mixing, BudgetExhaustedIsSentinel) {
  const auto g = make_standard_gaussian(1);
  const auto pi = grid_truth(g, GridSpec::line(-5, 5, 40));
  EnsembleOptions opt;
  opt.eta = 0.01;
  opt.replicas = 200;
  const auto est = mixing_time_estimate(g, opt, point_init(4.0), pi, 0.01, 10, 50);
  EXPECT_FALSE(est.iteration);
  EXPECT_EQ(est.checkpoints.size(), 6u);
  opt.replicas = 50;
  EXPECT_THROW(mixing_time_estimate(g, opt, point_init(0), pi, 0.05, 1, 10), std::invalid_argument);
}

TEST(HittingTime, Examples) {
  ChainTrace t;
  for (std::size_t i = 0; i < 30; ++i) {
    StepRecord r;
    r.index = i;
    r.state = Vector::Constant(1, i < 17 ? 0.0 : 2.0);
    t.records.push_back(r);
  }
  const auto right = ConstraintSet{[](const Vector& x) { return x[0] > 1.0; }, "x>1", {}};
  const auto left = ConstraintSet{[](const Vector& x) { return x[0] < 1.0; }, "x<1", {}};
  const auto far = ConstraintSet{[](const Vector& x) { return x[0] > 9.0; }, "x>9", {}};
  EXPECT_EQ(hitting_time(t, right), 17u);
  EXPECT_EQ(hitting_time(t, left), 0u);
  EXPECT_FALSE(hitting_time(t, far));
}

TEST(PowerLawFit, ExactData) {
  const std::vector<double> xs{0.1, 0.2, 0.4, 0.8};
  std::vector<double> ys, ys2;
  for (double x : xs) {
    ys.push_back(3.0 * std::pow(x, 2.5));
    ys2.push_back(3.0 * std::pow(2 * x, 2.5));
  }
  const auto f = fit_power_law(xs, ys);
  EXPECT_NEAR(f.slope, 2.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  const auto f2 = fit_power_law(xs, ys2);
  EXPECT_NEAR(f2.intercept - f.intercept, 2.5 * std::log(2.0), 1e-12);
  EXPECT_THROW(fit_power_law({1.0}, {1.0}), FitFailed);
  const auto dropped = fit_power_law({1, 2, 4}, {1, -1, 16});
  EXPECT_EQ(dropped.dropped.size(), 1u);
  EXPECT_NEAR(dropped.slope, 2.0, 1e-12);
}

TEST(EnergyScaling, GaussianSlope) {
  const auto g = make_standard_gaussian(3);
  PhaseSampler phase = [](Rng& r) { return PhaseState(r.normal_vector(3), r.normal_vector(3)); };
  const auto f = energy_error_scaling(g, phase, {0.025, 0.05, 0.1, 0.2, 0.4}, 2000, 1);
  EXPECT_GE(f.slope, 2.5);
  EXPECT_LE(f.slope, 4.5);
  EXPECT_EQ(f.log_x.size(), 5u);
}

TEST(EnergyScaling, LogisticSlope) {
  Rng rng(12, 0);
  const Vector theta = sample_unit_sphere(5, rng);
  const auto data = to_binary_labels(sample_sphere_dataset(5, 20, theta, 0.7, 12));
  const auto t = make_logistic_regression(data, 1.0);
  PhaseSampler phase = [](Rng& r) { return PhaseState(r.normal_vector(5), r.normal_vector(5)); };
  const auto f = energy_error_scaling(t, phase, {0.025, 0.05, 0.1, 0.2, 0.4}, 2000, 2);
  EXPECT_GE(f.slope, 2.5);
}

TEST(EnergyScaling, RejectsBadStepSets) {
  const auto g = make_standard_gaussian(1);
  PhaseSampler phase = [](Rng& r) { return PhaseState(r.normal_vector(1), r.normal_vector(1)); };
  EXPECT_THROW(energy_error_scaling(g, phase, {0.1, 0.2}, 10, 0), std::invalid_argument);
  EXPECT_THROW(energy_error_scaling(g, phase, {0.1, 0.2, 0.5}, 10, 0), std::invalid_argument);
  EXPECT_THROW(energy_error_scaling(g, phase, {0.1, 0.5, 1.5}, 10, 0), std::invalid_argument);
}

TEST(AcceptanceStats, FlatAndRejected) {
  ChainConfig c;
  c.step_size = 0.5;
  c.iterations = 100;
  const auto st = acceptance_stats(run_mala(make_flat(1), c, Vector::Zero(1)));
  EXPECT_EQ(st.mean, 1.0);
  EXPECT_EQ(st.accepted_fraction, 1.0);
  EXPECT_EQ(st.proposals, 100u);

  ChainTrace t;
  for (std::size_t i = 0; i < 10; ++i) {
    StepRecord r;
    r.index = i;
    r.state = Vector::Zero(1);
    r.log_accept = -5.0;
    t.records.push_back(r);
  }
  const auto rej = acceptance_stats(t);
  EXPECT_EQ(rej.accepted_fraction, 0.0);
  EXPECT_NEAR(rej.q50, std::exp(-5.0), 1e-15);
}

TEST(AcceptanceStats, GaussianGolden) {
  const double golden = oracle::gaussian_mala_acceptance(0.5);
  ChainConfig c;
  c.step_size = 0.5;
  c.iterations = 100000;
  c.seed = 31;
  const auto st = acceptance_stats(run_mala(make_standard_gaussian(1), c, Vector::Zero(1)));
  EXPECT_NEAR(st.accepted_fraction, golden, 0.02);
  EXPECT_NEAR(st.mean, golden, 0.02);
  EXPECT_LE(st.q05, st.q50);
  EXPECT_LE(st.q50, st.q95);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile_sorted({0, 10}, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted({1, 2, 3}, 1.0), 3.0);
  EXPECT_THROW(quantile_sorted({}, 0.5), std::invalid_argument);
}

TEST(HansonWright, TenDimensions) {
  const auto r = hanson_wright_check(10, std::sqrt(20.0), 200000, 1);
  EXPECT_NEAR(r.bound, std::exp(-10.0 / 8.0), 1e-12);
  EXPECT_NEAR(r.bound, 0.2865, 1e-4);
  EXPECT_NEAR(r.empirical, oracle::chi2_sf_even(10, 20.0), 0.002);
  EXPECT_TRUE(r.holds);
}

TEST(HansonWright, OneDimension) {
  const auto r = hanson_wright_check(1, 2.0, 200000, 2);
  EXPECT_NEAR(r.bound, std::exp(-3.0 / 8.0), 1e-12);
  EXPECT_NEAR(r.empirical, 2.0 * oracle::normal_cdf(-2.0), 0.002);
  EXPECT_TRUE(r.holds);
}

TEST(HansonWright, FarTailAndErrors) {
  const auto r = hanson_wright_check(2, 20.0, 10000, 3);
  EXPECT_EQ(r.empirical, 0.0);
  EXPECT_TRUE(r.holds);
  EXPECT_THROW(hanson_wright_check(10, std::sqrt(20.0) - 1e-9, 10000, 0), std::invalid_argument);
  EXPECT_THROW(hanson_wright_check(1, 2.0, 100, 0), std::invalid_argument);
}
