// Acceptance gate. Each criterion prints one PASS/FAIL line; the exit status is
// nonzero if any criterion fails. Per-criterion summary CSVs are written to
// $MALAKIT_OUT/acceptance (default ./acceptance-out).
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "malakit.hpp"

using namespace malakit;

namespace {

constexpr std::uint64_t kSeed = 20240601;

class Summary {
 public:
  void add(const std::string& key, double v) { os_ << key << ',' << format_double(v) << '\n'; }
  void add(const std::string& key, const std::string& v) { os_ << key << ',' << v << '\n'; }
  std::string str() const { return "key,value\n" + os_.str(); }

 private:
  std::ostringstream os_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
  std::string csv;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds
  std::function<Outcome(unsigned threads)> run;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Dataset logistic_data(Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
  return to_binary_labels(sample_sphere_dataset(d, r, generated_theta_star(d, seed), 0.7, seed));
}

// ---- 1 ----
Outcome acceptance_forms(unsigned) {
  const auto gauss = make_gaussian(5, Vector::LinSpaced(5, 0.5, 2.5));
  const auto lr = make_logistic_regression(logistic_data(5, 20, kSeed), 1.0);
  Rng rng(kSeed, 1);
  double worst = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const TargetModel& t = i % 2 ? lr : gauss;
    const Vector x = rng.normal_vector(5), v = rng.normal_vector(5);
    const double eta = 0.01 + 0.49 * rng.uniform();
    const auto lf = leapfrog_step(t, PhaseState(x, v), eta);
    const double a = log_accept_energy(lf.energy_error);
    const double b = log_accept_proposal_form(t, x, lf.proposal.position, eta);
    worst = std::max(worst, std::abs(a - b));
  }
  Summary s;
  s.add("instances", n);
  s.add("max_abs_difference", worst);
  return {worst <= 1e-10, "max |difference| " + fmt(worst) + " over 1e4 instances", s.str()};
}

// ---- 2 ----
Outcome stationarity(unsigned threads) {
  Summary s;
  std::ostringstream detail;
  bool pass = true;
  const std::size_t replicas = 1000, iters = 2000;

  const auto g1 = make_standard_gaussian(1);
  const auto line = grid_truth(g1, GridSpec::line(-5, 5, 20));
  // Half-normal start: density 2π on x > 0, so exactly 2-warm.
  const InitSampler half = [](Rng& r) { return Vector::Constant(1, std::abs(r.normal())); };
  auto check = [&](const std::string& tag, const TargetModel& t, EnsembleOptions opt,
                   const InitSampler& init, const GridDistribution& truth, double limit) {
    opt.replicas = replicas;
    opt.seed = kSeed;
    opt.threads = threads;
    const auto res = ensemble_tv(t, opt, init, iters, truth);
    s.add(tag + "_eta", opt.eta);
    s.add(tag + "_tv", res.tv);
    s.add(tag + "_floor", res.floor);
    s.add(tag + "_corrected", res.corrected);
    s.add(tag + "_acceptance", res.acceptance_rate);
    const bool ok = res.corrected <= limit;
    pass = pass && ok;
    detail << tag << " TV " << fmt(res.tv, 3) << " floor " << fmt(res.floor, 3) << " corrected "
           << fmt(res.corrected, 3) << (ok ? " <= " : " > ") << limit << "; ";
  };

  EnsembleOptions mala;
  mala.kind = SamplerKind::MALA;
  mala.eta = theorem1_step_size(0, 0, 1, 1, 0, 0.5);
  check("mala", g1, mala, half, line, 0.03);

  EnsembleOptions rwm;
  rwm.kind = SamplerKind::RWM;
  rwm.eta = 1.0;
  check("rwm", g1, rwm, half, line, 0.03);

  const auto g2 = make_standard_gaussian(2);
  const auto ring = annulus(0.5, 1.0);
  const auto square = grid_truth(g2, GridSpec::square(-1, 1, 10), ring);
  EnsembleOptions cm;
  cm.kind = SamplerKind::ConstrainedMALA;
  cm.constraint = ring;
  cm.eta = theorem1_step_size(0, 0, 1, 2, 0, 0.5);
  // Uniform on the ring is 1.22-warm for the ring-restricted Gaussian.
  const InitSampler uniform_ring = [](Rng& r) -> Vector {
    const double rho = std::sqrt(0.25 + 0.75 * r.uniform());
    const double phi = 2.0 * std::numbers::pi * r.uniform();
    Vector x(2);
    x << rho * std::cos(phi), rho * std::sin(phi);
    return x;
  };
  check("constrained_mala", g2, cm, uniform_ring, square, 0.05);
  return {pass, detail.str(), s.str()};
}

// ---- 3 ----
Outcome energy_order(unsigned) {
  const std::vector<double> etas{0.025, 0.05, 0.1, 0.2, 0.4};
  const PhaseSampler phase = [](Rng& r) { return PhaseState(r.normal_vector(5), r.normal_vector(5)); };
  const auto gauss = make_standard_gaussian(5);
  const auto lr = make_logistic_regression(logistic_data(5, 20, kSeed + 3), 1.0);
  const auto fg = energy_error_scaling(gauss, phase, etas, 4000, kSeed);
  const auto fl = energy_error_scaling(lr, phase, etas, 4000, kSeed);
  Summary s;
  s.add("gaussian_slope", fg.slope);
  s.add("gaussian_r_squared", fg.r_squared);
  s.add("logistic_slope", fl.slope);
  s.add("logistic_r_squared", fl.r_squared);
  auto in = [](double x) { return x >= 2.5 && x <= 4.5; };
  const bool pass = in(fg.slope) && in(fl.slope) && fl.slope >= 2.5;
  return {pass, "slopes gaussian " + fmt(fg.slope) + ", logistic " + fmt(fl.slope), s.str()};
}

// ---- 4 ----
Outcome regularity_bounds(unsigned) {
  const Eigen::Index ds[] = {3, 5, 10};
  const Eigen::Index rs[] = {10, 50, 200};
  Summary s;
  bool pass = true;
  double worst3 = 0.0, worst4 = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index d = ds[k % 3], r = rs[(k / 3) % 3];
    const auto data = logistic_data(d, r, kSeed + 100 + static_cast<std::uint64_t>(k));
    const auto t = make_logistic_regression(data, 0.0);
    ProbeOptions po;
    po.points = 32;
    po.directions = 8;
    po.seed = kSeed + static_cast<std::uint64_t>(k);
    po.finite_differences = true;
    const double phi = incoherence(data);
    const auto b = theorem3_bounds(r, phi);
    const double c3 = estimate_c3(t, po), c4 = estimate_c4(t, po);
    const std::string tag = "ds" + std::to_string(k) + "_d" + std::to_string(d) + "_r" + std::to_string(r);
    s.add(tag + "_phi", phi);
    s.add(tag + "_c3_ratio", c3 / b.c3);
    s.add(tag + "_c4_ratio", c4 / b.c4);
    worst3 = std::max(worst3, c3 / b.c3);
    worst4 = std::max(worst4, c4 / b.c4);
    pass = pass && c3 <= b.c3 * 1.05 && c4 <= b.c4 * 1.05;
  }
  return {pass,
          "max estimate/bound: C3 " + fmt(worst3) + ", C4 " + fmt(worst4) + " over 20 datasets",
          s.str()};
}

// ---- 5 ----
Outcome mixing_scaling(unsigned threads) {
  const auto g = make_standard_gaussian(1);
  const auto truth = grid_truth(g, GridSpec::line(-5, 5, 40));
  const InitSampler start = [](Rng& r) { return Vector::Constant(1, 3.0 + 0.25 * r.normal()); };
  Summary s;
  std::vector<double> ratios;
  for (int rep = 0; rep < 5; ++rep) {
    EnsembleOptions opt;
    opt.eta = 0.5;
    opt.replicas = 1000;
    opt.seed = kSeed + 1000 * static_cast<std::uint64_t>(rep + 1);
    opt.threads = threads;
    const auto fast = mixing_time_estimate(g, opt, start, truth, 0.05, 1, 5000);
    opt.eta = 0.25;
    const auto slow = mixing_time_estimate(g, opt, start, truth, 0.05, 1, 5000);
    const double a = fast.iteration ? static_cast<double>(*fast.iteration) : NAN;
    const double b = slow.iteration ? static_cast<double>(*slow.iteration) : NAN;
    s.add("rep" + std::to_string(rep) + "_mixing_eta0.5", a);
    s.add("rep" + std::to_string(rep) + "_mixing_eta0.25", b);
    ratios.push_back(b / a);
  }
  std::vector<double> finite;
  for (double r : ratios)
    if (std::isfinite(r)) finite.push_back(r);
  if (finite.size() < 3) return {false, "too few repetitions mixed within budget", s.str()};
  std::sort(ratios.begin(), ratios.end(), [](double a, double b) {
    if (!std::isfinite(a)) return false;
    if (!std::isfinite(b)) return true;
    return a < b;
  });
  const double median = ratios[2];
  s.add("median_ratio", median);
  const bool pass = std::isfinite(median) && median >= 2.0 && median <= 8.0;
  return {pass, "median mixing ratio eta=0.25 vs 0.5: " + fmt(median), s.str()};
}

// ---- 6 ----
Outcome conductance_cheeger(unsigned) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-8, 8, 400);
  const auto pi = grid_truth(g, grid);
  const double psi = cheeger_1d(g, pi);
  Summary s;
  s.add("cheeger", psi);
  bool pass = true;
  std::ostringstream detail;
  for (double eta : {0.05, 0.1, 0.2}) {
    const Matrix k = transition_matrix_1d(g, SamplerKind::MALA, eta, grid);
    ConductanceOptions co;
    co.seed = kSeed;
    const auto cond = conductance(k, pi, co);
    ChainConfig cfg;
    cfg.step_size = eta;
    cfg.iterations = 100000;
    cfg.seed = kSeed;
    const double acc = acceptance_stats(run_mala(g, cfg, Vector::Zero(1))).mean;
    const double ratio = cond.value / (eta * psi);
    s.add("eta" + format_double(eta) + "_conductance", cond.value);
    s.add("eta" + format_double(eta) + "_acceptance", acc);
    s.add("eta" + format_double(eta) + "_ratio", ratio);
    const bool ok = acc >= 0.99 && cond.value >= 0.01 * eta * psi;
    pass = pass && ok;
    detail << "eta " << eta << ": Psi/(eta psi) " << fmt(ratio, 3) << ", acc " << fmt(acc, 4) << "; ";
  }
  return {pass, detail.str(), s.str()};
}

// ---- 7 ----
Outcome detailed_balance(unsigned) {
  const auto g = make_standard_gaussian(1);
  const auto grid = GridSpec::line(-8, 8, 400);
  const auto pi = grid_truth(g, grid);
  Summary s;
  double worst = 0.0, rows = 0.0;
  for (auto kind : {SamplerKind::MALA, SamplerKind::RWM})
    for (double eta : {0.1, 0.5, 1.0}) {
      const Matrix k = transition_matrix_1d(g, kind, eta, grid);
      const double v = detailed_balance_violation(k, pi);
      s.add(to_string(kind) + "_eta" + format_double(eta) + "_violation", v);
      worst = std::max(worst, v);
      rows = std::max(rows, max_row_sum_error(k));
    }
  s.add("max_row_sum_error", rows);
  return {worst <= 1e-8 && rows <= 1e-9,
          "max relative violation " + fmt(worst) + ", row-sum error " + fmt(rows), s.str()};
}

// ---- 8 ----
// c1 and the step size were tuned once on a separate seed and are pinned here.
constexpr double kZeroOneC1 = 1.0;
constexpr double kZeroOneEta = 0.05;
constexpr std::size_t kZeroOneIterations = 4000;

Outcome zero_one(unsigned threads) {
  ExperimentSpec spec;
  spec.name = "acceptance-zero-one";
  spec.seed = kSeed;
  spec.iterations = kZeroOneIterations;
  spec.replicas = 10;
  spec.target.kind = TargetKind::ZeroOne;
  spec.target.d = 3;
  spec.target.r = 2000;
  spec.target.q0 = 0.7;
  spec.target.epsilon = 0.1;
  spec.target.c1 = kZeroOneC1;
  spec.target.data_seed = kSeed;
  spec.target.annulus = {0.5, 1.0};
  spec.sampler = SamplerKind::ConstrainedMALA;
  spec.record_every = 10;
  spec.schedule.eta = kZeroOneEta;
  spec.init.kind = InitKind::Annulus;
  spec.diagnostics.names = {"acceptance_stats", "minimizer"};
  spec.output.traces = false;
  RunOptions ro;
  ro.threads = threads;
  ro.write_files = false;
  const RunReport rep = run_experiment(spec, ro);
  const Vector theta = generated_theta_star(3, kSeed);

  // Raw zero-one risk on fresh draws from the data model.
  Rng rng(kSeed, streams::kMisc);
  const int n = 100000;
  Matrix xs(3, n);
  Vector ys(n);
  for (int i = 0; i < n; ++i) {
    xs.col(i) = sample_unit_sphere(3, rng);
    ys[i] = draw_label(xs.col(i), theta, 0.7, rng);
  }
  auto risk = [&](const Vector& x) {
    const Vector m = xs.transpose() * x;
    int wrong = 0;
    for (int i = 0; i < n; ++i) wrong += ((m[i] >= 0 ? 1.0 : -1.0) != ys[i]) ? 1 : 0;
    return static_cast<double>(wrong) / n;
  };
  const double f_star = risk(theta);
  Summary s;
  s.add("risk_theta_star", f_star);
  int good = 0;
  for (const auto& r : rep.replicas) {
    const std::string tag = "replica" + std::to_string(r.replica);
    if (!r.ok) {
      s.add(tag + "_status", "failed");
      continue;
    }
    const double angle = angle_between(r.best_state, theta);
    const double excess = risk(r.best_state) - f_star;
    s.add(tag + "_angle", angle);
    s.add(tag + "_excess_risk", excess);
    if (angle <= 0.35 && excess <= 0.1) ++good;
  }
  s.add("successes", good);
  return {good >= 8, std::to_string(good) + "/10 runs within angle 0.35 and excess risk 0.1",
          s.str()};
}

// ---- 9 ----
Outcome good_set(unsigned) {
  const auto g = make_standard_gaussian(10);
  GoodSetParams p;
  p.alpha = 4.0;
  p.radius = 3.0 * std::sqrt(10.0);
  p.grad_bound = 1.0;
  p.horizon = 0.3;
  Rng rng(kSeed, 9);
  const int n = 10000;
  int in = 0;
  for (int i = 0; i < n; ++i) {
    const Vector x = rng.normal_vector(10);
    const Vector v = rng.normal_vector(10);
    in += good_set_check(g, PhaseState(x, v), p) ? 1 : 0;
  }
  const double frac = static_cast<double>(in) / n;
  Summary s;
  s.add("draws", n);
  s.add("fraction_in_good_set", frac);
  return {frac >= 0.99, "P((x,v) in G) = " + fmt(frac), s.str()};
}

// ---- 10 ----
Outcome hanson_wright(unsigned) {
  Summary s;
  bool pass = true;
  std::ostringstream detail;
  for (Eigen::Index d : {1, 10, 50}) {
    const double xi = 1.5 * std::sqrt(2.0 * static_cast<double>(d));
    const auto r = hanson_wright_check(d, xi, 1000000, kSeed);
    s.add("d" + std::to_string(d) + "_empirical", r.empirical);
    s.add("d" + std::to_string(d) + "_bound", r.bound);
    pass = pass && r.empirical <= r.bound;
    detail << "d=" << d << ": " << fmt(r.empirical) << " <= " << fmt(r.bound) << "; ";
  }
  return {pass, detail.str(), s.str()};
}

std::filesystem::path out_dir() {
  const char* env = std::getenv("MALAKIT_OUT");
  return env && *env ? std::filesystem::path(env) / "acceptance"
                     : std::filesystem::path("acceptance-out");
}

}  // namespace

int main() {
  set_warnings_enabled(false);
  const std::vector<Criterion> criteria = {
      {1, "acceptance-form equivalence", 10, acceptance_forms},
      {2, "stationarity", 360, stationarity},
      {3, "energy-error order", 30, energy_order},
      {4, "regularity bounds for empirical functions", 60, regularity_bounds},
      {5, "mixing-time step-size scaling", 300, mixing_scaling},
      {6, "conductance vs Cheeger constant", 60, conductance_cheeger},
      {7, "detailed balance of discretized kernels", 30, detailed_balance},
      {8, "zero-one loss optimization", 300, zero_one},
      {9, "good-set probability", 30, good_set},
      {10, "Hanson-Wright tail", 20, hanson_wright},
  };
  const auto dir = out_dir();
  std::filesystem::create_directories(dir);
  const unsigned many = std::max(4u, default_threads());

  int failures = 0;
  std::vector<std::string> first_csv;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(1);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what(), ""};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.time_limit;
    const bool ok = o.pass && in_time;
    failures += ok ? 0 : 1;
    std::ofstream(dir / ("criterion" + std::to_string(c.id) + ".csv"), std::ios::binary) << o.csv;
    first_csv.push_back(o.csv);
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): "
              << o.detail << " [" << fmt(secs, 3) << " s, limit " << c.time_limit << " s"
              << (in_time ? "" : ", over time") << "]" << std::endl;
  }

  // 11: same master seed, different thread count, byte-identical summaries.
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> mismatched;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      std::string again;
      try {
        again = criteria[i].run(many).csv;
      } catch (const std::exception&) {
        again = "<threw>";
      }
      if (again != first_csv[i] || again.empty()) mismatched.push_back(criteria[i].id);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = mismatched.empty();
    failures += ok ? 0 : 1;
    std::ostringstream detail;
    if (ok) {
      detail << "all 10 summaries byte-identical between 1 and " << many << " threads";
    } else {
      detail << "summaries differ for criteria";
      for (int id : mismatched) detail << ' ' << id;
    }
    std::cout << (ok ? "PASS" : "FAIL") << " criterion 11 (reproducibility): " << detail.str()
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed"
                         : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
