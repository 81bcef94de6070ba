#ifndef MALAKIT_CLI_HPP
#define MALAKIT_CLI_HPP

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "malakit/diagnostics.hpp"
#include "malakit/experiment.hpp"
#include "malakit/regularity.hpp"

namespace malakit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned threads = default_threads();
};

inline void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--seed", f.seed, "Master seed (overrides the spec file)");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--threads", f.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
}

inline RunOptions run_options(const CommonFlags& f) {
  RunOptions o;
  o.threads = f.threads;
  o.out_dir = f.out;
  return o;
}

// Flags shared by `sample` and `optimize` that describe an ad-hoc run.
struct AdHocFlags {
  std::string target = "gaussian";
  std::optional<Eigen::Index> d;  // default: the dataset's, else 1
  std::vector<double> precision{1.0};
  std::string dataset;
  Eigen::Index r = 50;
  double q0 = 0.7;
  std::uint64_t data_seed = 0;
  double prior = 0.0;
  double epsilon = 0.1;
  double c1 = 1.0;
  std::vector<double> annulus;
  std::string sampler = "mala";
  std::optional<double> eta;
  double safety = 1.0;
  std::size_t iterations = 1000;
  std::size_t replicas = 1;
  bool lazy = false;
  std::vector<double> init{0.0};
};

inline void add_adhoc(CLI::App* app, AdHocFlags& f, bool optimize) {
  if (!optimize) {
    app->add_option("--target", f.target, "gaussian | logistic | sigmoid");
    app->add_option("--precision", f.precision, "Gaussian precision (1 or d values)")
        ->delimiter(',');
    app->add_option("--dataset", f.dataset, "Dataset CSV for regression targets");
    app->add_option("--prior", f.prior, "Gaussian prior precision for regression targets");
    app->add_option("--sampler", f.sampler, "mala | rwm | constrained_mala");
  } else {
    app->add_option("--epsilon", f.epsilon, "Target accuracy, in (0, 0.1]");
    app->add_option("--c1", f.c1, "Inverse-temperature constant");
  }
  app->add_option("--d", f.d, "Dimension");
  app->add_option("--r", f.r, "Generated data size");
  app->add_option("--q0", f.q0, "Label noise parameter");
  app->add_option("--data-seed", f.data_seed, "Seed of the generated dataset");
  app->add_option("--annulus", f.annulus, "Constraint radii inner,outer")->delimiter(',');
  app->add_option("--eta", f.eta, "Step size (default: theorem-1 schedule)");
  app->add_option("--safety", f.safety, "Safety constant of the theorem-1 schedule");
  app->add_option("--iterations", f.iterations, "Iterations per chain");
  app->add_option("--replicas", f.replicas, "Independent chains");
  app->add_flag("--lazy", f.lazy, "Hold with probability 1/2 before each move");
  app->add_option("--init", f.init, "Start point (1 or d values)")->delimiter(',');
}

inline ExperimentSpec adhoc_spec(const AdHocFlags& f, bool optimize, const CommonFlags& c) {
  ExperimentSpec s;
  s.name = optimize ? "optimize" : "sample";
  s.seed = c.seed.value_or(0);
  s.iterations = f.iterations;
  s.replicas = f.replicas;
  s.lazy = f.lazy;
  auto& t = s.target;
  t.d = f.d.value_or(1);
  t.precision = f.precision;
  t.dataset = f.dataset;
  t.r = f.r;
  t.q0 = f.q0;
  t.data_seed = f.data_seed;
  t.prior = f.prior;
  t.epsilon = f.epsilon;
  t.c1 = f.c1;
  t.annulus = f.annulus;
  std::vector<std::string> errors;
  if (optimize) {
    t.kind = TargetKind::ZeroOne;
    s.sampler = SamplerKind::ConstrainedMALA;
    if (t.annulus.empty()) t.annulus = {0.5, 1.0};
    s.init.kind = InitKind::Annulus;
    s.diagnostics.names = {"acceptance_stats", "minimizer", "hitting_time"};
  } else {
    if (f.target == "gaussian") t.kind = TargetKind::Gaussian;
    else if (f.target == "logistic") t.kind = TargetKind::Logistic;
    else if (f.target == "sigmoid") t.kind = TargetKind::Sigmoid;
    else errors.push_back("--target: unknown target '" + f.target + "'");
    if (auto k = parse_sampler_kind(f.sampler)) s.sampler = *k;
    else errors.push_back("--sampler: unknown sampler '" + f.sampler + "'");
    s.init.point = f.init;
    s.diagnostics.names = {"acceptance_stats"};
    if (!t.dataset.empty() && !std::filesystem::exists(t.dataset))
      errors.push_back("--dataset: file not found: " + t.dataset);
    else if (!t.dataset.empty() && !f.d)
      t.d = dataset_dimension(t.dataset);
    else if (!t.dataset.empty() && dataset_dimension(t.dataset) != *f.d)
      errors.push_back("--d: dataset has dimension " +
                       std::to_string(dataset_dimension(t.dataset)));
  }
  if (f.eta) {
    s.schedule.mode = ScheduleMode::Explicit;
    s.schedule.eta = *f.eta;
  } else {
    s.schedule.mode = ScheduleMode::Theorem1;
    s.schedule.safety = f.safety;
  }
  validate_spec(s, errors);
  if (!errors.empty()) throw SpecError(errors);
  return s;
}

inline nlohmann::json run_summary(const RunReport& rep, const std::filesystem::path& out) {
  return {{"name", rep.spec.name},       {"seed", rep.spec.seed},
          {"replicas", rep.spec.replicas}, {"iterations", rep.spec.iterations},
          {"etas", rep.etas},            {"failed_replicas", rep.failed},
          {"gradient_evals", rep.gradient_evals}, {"function_evals", rep.function_evals},
          {"diagnostics", rep.diagnostics}, {"out", out.string()}};
}

}  // namespace detail

// Exit status: 0 success, 1 usage or validation error, 2 runtime failure.
// Progress goes to standard error; results go to files and standard output.
inline int cli_entry(int argc, char** argv) {
  CLI::App app{"malakit: Langevin and random-walk Metropolis samplers with diagnostics"};
  app.set_version_flag("--version", std::string(MALAKIT_VERSION));
  app.require_subcommand(1);

  detail::CommonFlags common;

  auto* run = app.add_subcommand("run", "Run an experiment spec file");
  std::string spec_path;
  run->add_option("spec", spec_path, "Spec file")->required();
  detail::add_common(run, common);

  auto* sample = app.add_subcommand("sample", "Run sampling chains on a built-in target");
  detail::AdHocFlags sample_flags;
  detail::add_adhoc(sample, sample_flags, false);
  detail::add_common(sample, common);

  auto* optimize =
      app.add_subcommand("optimize", "Minimize a smoothed zero-one loss with constrained MALA");
  detail::AdHocFlags opt_flags;
  opt_flags.d = 3;
  opt_flags.r = 500;
  opt_flags.replicas = 4;
  opt_flags.iterations = 2000;
  detail::add_adhoc(optimize, opt_flags, true);
  detail::add_common(optimize, common);

  auto* diagnose = app.add_subcommand(
      "diagnose", "Discretized-kernel diagnostics for a 1D Gaussian target");
  double diag_precision = 1.0, diag_eta = 0.1, diag_lower = -8.0, diag_upper = 8.0;
  std::size_t diag_bins = 400;
  std::string diag_sampler = "mala";
  diagnose->add_option("--precision", diag_precision, "Precision of the 1D Gaussian");
  diagnose->add_option("--eta", diag_eta, "Step size");
  diagnose->add_option("--sampler", diag_sampler, "mala | rwm");
  diagnose->add_option("--lower", diag_lower, "Grid lower bound");
  diagnose->add_option("--upper", diag_upper, "Grid upper bound");
  diagnose->add_option("--bins", diag_bins, "Grid cells");
  detail::add_common(diagnose, common);

  auto* scaling = app.add_subcommand("scaling", "Scaling study over eta or dimension");
  std::string scaling_spec, scaling_axis = "eta";
  std::vector<double> scaling_values;
  scaling->add_option("spec", scaling_spec, "Template spec file")->required();
  scaling->add_option("--axis", scaling_axis, "eta | dimension");
  scaling->add_option("--values", scaling_values, "Axis values")->delimiter(',')->required();
  detail::add_common(scaling, common);

  auto* regularity = app.add_subcommand("regularity", "Regularity constants of a dataset");
  std::string reg_dataset;
  double reg_prior = 0.0;
  std::size_t reg_points = 32, reg_dirs = 8;
  regularity->add_option("dataset", reg_dataset, "Dataset CSV")->required();
  regularity->add_option("--prior", reg_prior, "Gaussian prior precision");
  regularity->add_option("--points", reg_points, "Probe points");
  regularity->add_option("--directions", reg_dirs, "Probe directions per point");
  detail::add_common(regularity, common);

  auto* dataset = app.add_subcommand("dataset", "Generate a sphere dataset with noisy labels");
  Eigen::Index ds_d = 5, ds_r = 50;
  double ds_q0 = 0.7;
  std::uint64_t ds_seed = 0;
  bool ds_signs = false;
  std::string ds_path;
  dataset->add_option("csv", ds_path, "Output CSV (a .json sidecar is written next to it)")
      ->required();
  dataset->add_option("--d", ds_d, "Dimension");
  dataset->add_option("--r", ds_r, "Number of data points");
  dataset->add_option("--q0", ds_q0, "Label noise parameter");
  dataset->add_option("--data-seed", ds_seed, "Generator seed");
  dataset->add_flag("--signs", ds_signs, "Keep +-1 labels instead of 0/1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*run) {
      ExperimentSpec spec = load_spec_file(spec_path);
      if (common.seed) spec.seed = *common.seed;
      const RunOptions ro = detail::run_options(common);
      info("running " + spec.name + " (" + std::to_string(spec.replicas) + " replicas, " +
           std::to_string(ro.threads) + " threads)");
      const RunReport rep = run_experiment(spec, ro);
      const auto out = resolve_out_dir(spec, ro);
      info("wrote " + std::to_string(rep.files.size()) + " files to " + out.string());
      std::cout << detail::run_summary(rep, out).dump(2) << '\n';
    } else if (*sample || *optimize) {
      const bool is_opt = static_cast<bool>(*optimize);
      const ExperimentSpec spec =
          detail::adhoc_spec(is_opt ? opt_flags : sample_flags, is_opt, common);
      const RunOptions ro = detail::run_options(common);
      RunOptions effective = ro;
      effective.write_files = common.out.has_value();
      const RunReport rep = run_experiment(spec, effective);
      if (is_opt) {
        const auto out = resolve_out_dir(spec, ro);
        std::cout << detail::run_summary(rep, common.out ? out : "").dump(2) << '\n';
      } else {
        std::cout << rep.summary_csv;
      }
    } else if (*diagnose) {
      const auto kind = parse_sampler_kind(diag_sampler);
      if (!kind || *kind == SamplerKind::ConstrainedMALA)
        throw std::invalid_argument("--sampler: expected mala or rwm");
      const TargetModel target = make_gaussian(1, Vector::Constant(1, diag_precision));
      const GridSpec grid = GridSpec::line(diag_lower, diag_upper, diag_bins);
      const GridDistribution pi = grid_truth(target, grid);
      const Matrix k = transition_matrix_1d(target, *kind, diag_eta, grid);
      ConductanceOptions co;
      co.seed = common.seed.value_or(0);
      const auto cond = conductance(k, pi, co);
      double accept = 0.0;
      for (std::size_t i = 0; i < pi.cells(); ++i)
        accept += pi.mass[i] * (1.0 - k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      nlohmann::json j = {{"target", target.id},
                          {"sampler", to_string(*kind)},
                          {"eta", diag_eta},
                          {"cells", pi.cells()},
                          {"cheeger", cheeger_1d(target, pi)},
                          {"conductance", cond.value},
                          {"conductance_cut_family", cond.family},
                          {"cuts_evaluated", cond.cuts_evaluated},
                          {"detailed_balance_violation", detailed_balance_violation(k, pi)},
                          {"row_sum_error", max_row_sum_error(k)},
                          {"stationary_move_probability", accept},
                          {"seed", co.seed}};
      std::cout << j.dump(2) << '\n';
    } else if (*scaling) {
      ExperimentSpec spec = load_spec_file(scaling_spec);
      if (common.seed) spec.seed = *common.seed;
      ScalingAxis axis;
      if (scaling_axis == "eta") axis = ScalingAxis::Eta;
      else if (scaling_axis == "dimension") axis = ScalingAxis::Dimension;
      else throw std::invalid_argument("--axis: expected eta or dimension");
      RunOptions ro = detail::run_options(common);
      ro.write_files = common.out.has_value();
      const ScalingTable table = scaling_study(spec, axis, scaling_values, ro);
      std::cout << table.to_csv();
    } else if (*dataset) {
      const Vector theta = generated_theta_star(ds_d, ds_seed);
      Dataset data = sample_sphere_dataset(ds_d, ds_r, theta, ds_q0, ds_seed);
      if (!ds_signs) data = to_binary_labels(data);
      save_dataset(data, ds_path);
      info("wrote " + ds_path);
    } else if (*regularity) {
      Dataset data = load_dataset(reg_dataset);
      if (data.has_sign_labels()) data = to_binary_labels(data);
      const TargetModel target = make_logistic_regression(data, reg_prior);
      ProbeOptions po;
      po.points = reg_points;
      po.directions = reg_dirs;
      po.seed = common.seed.value_or(0);
      const RegularityReport rep = regularity_report(target, po);
      const double phi = *rep.incoherence;
      const auto r = data.size();
      nlohmann::json j = rep.to_json();
      j["dataset"] = reg_dataset;
      j["d"] = data.dim();
      j["r"] = r;
      j["phi"] = phi;
      j["sqrt_r_phi"] = std::sqrt(static_cast<double>(r) * phi);
      std::cout << j.dump(2) << '\n';
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "malakit: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "malakit: failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace malakit

#endif
