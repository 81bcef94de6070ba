#ifndef MALAKIT_EXPERIMENT_HPP
#define MALAKIT_EXPERIMENT_HPP

// Declarative experiments. A spec file looks like
//
//   malakit-experiment 1
//   name = gaussian-demo
//   seed = 7
//   iterations = 1000
//   replicas = 8
//
//   [target]
//   kind = gaussian
//   d = 1
//   precision = 1
//
//   [sampler]
//   kind = mala
//
//   [schedule]
//   mode = explicit
//   eta = 0.5
//
// The full grammar is in docs/spec-format.md.

#include <algorithm>
#include <chrono>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "malakit/dataset.hpp"
#include "malakit/diagnostics.hpp"
#include "malakit/errors.hpp"
#include "malakit/grid.hpp"
#include "malakit/log.hpp"
#include "malakit/parallel.hpp"
#include "malakit/regularity.hpp"
#include "malakit/samplers.hpp"
#include "malakit/target.hpp"
#include "malakit/trace_io.hpp"

#ifndef MALAKIT_VERSION
#define MALAKIT_VERSION "0.1.0"
#endif

namespace malakit {

inline constexpr const char* kSpecHeader = "malakit-experiment 1";
inline constexpr const char* kOutEnv = "MALAKIT_OUT";

// Thrown by parse_spec with every problem found, not just the first.
class SpecError : public std::invalid_argument {
 public:
  explicit SpecError(std::vector<std::string> errors)
      : std::invalid_argument(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& e) {
    std::string s = "invalid experiment spec:";
    for (const auto& m : e) s += "\n  " + m;
    return s;
  }
  std::vector<std::string> errors_;
};

enum class TargetKind { Gaussian, Logistic, Sigmoid, ZeroOne };
enum class ScheduleMode { Explicit, Theorem1, Sweep };
enum class InitKind { Point, Gaussian, Truth, Annulus };

inline const std::vector<std::string>& known_diagnostics() {
  static const std::vector<std::string> names = {
      "acceptance_stats", "tv_vs_truth",          "mixing_time", "hitting_time",
      "minimizer",        "energy_error_scaling", "regularity"};
  return names;
}

struct TargetSpec {
  TargetKind kind = TargetKind::Gaussian;
  Eigen::Index d = 1;
  std::vector<double> precision{1.0};  // gaussian; one value is broadcast
  std::string dataset;                 // logistic/sigmoid: CSV path, else generated
  Eigen::Index r = 0;                  // generated data size
  double q0 = 0.7;
  std::uint64_t data_seed = 0;
  double prior = 0.0;
  double epsilon = 0.1;  // zero_one
  double c1 = 1.0;       // zero_one
  std::vector<double> annulus;  // {inner, outer}; empty = none
  bool operator==(const TargetSpec&) const = default;
};

struct ScheduleSpec {
  ScheduleMode mode = ScheduleMode::Explicit;
  double eta = 0.0;
  double safety = 1.0;
  std::vector<double> etas;
  bool operator==(const ScheduleSpec&) const = default;
};

struct InitSpec {
  InitKind kind = InitKind::Point;
  std::vector<double> point{0.0};  // one value is broadcast
  double scale = 1.0;
  bool operator==(const InitSpec&) const = default;
};

struct DiagnosticsSpec {
  std::vector<std::string> names;
  std::vector<double> grid_lower;
  std::vector<double> grid_upper;
  std::vector<std::size_t> grid_bins;
  double mixing_threshold = 0.05;
  std::size_t check_every = 1;
  std::size_t floor_batches = 32;
  double hit_angle = 0.35;
  std::vector<double> energy_etas;
  std::size_t energy_samples = 1000;
  std::size_t probe_points = 32;
  std::size_t probe_directions = 8;
  bool operator==(const DiagnosticsSpec&) const = default;

  bool has(const std::string& n) const {
    return std::find(names.begin(), names.end(), n) != names.end();
  }
};

struct OutputSpec {
  std::string dir;  // empty: $MALAKIT_OUT/<name>, or ./malakit-out/<name>
  bool traces = true;
  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::size_t replicas = 1;
  TargetSpec target;
  SamplerKind sampler = SamplerKind::MALA;
  bool lazy = false;
  std::size_t record_every = 1;
  ScheduleSpec schedule;
  InitSpec init;
  DiagnosticsSpec diagnostics;
  OutputSpec output;
  bool operator==(const ExperimentSpec&) const = default;
};

inline std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::Gaussian: return "gaussian";
    case TargetKind::Logistic: return "logistic";
    case TargetKind::Sigmoid: return "sigmoid";
    case TargetKind::ZeroOne: return "zero_one";
  }
  return "?";
}
inline std::string to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::Explicit: return "explicit";
    case ScheduleMode::Theorem1: return "theorem1";
    case ScheduleMode::Sweep: return "sweep";
  }
  return "?";
}
inline std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::Point: return "point";
    case InitKind::Gaussian: return "gaussian";
    case InitKind::Truth: return "truth";
    case InitKind::Annulus: return "annulus";
  }
  return "?";
}

// ---- parsing -------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> to_uint(const std::string& s) {
  if (s.empty() || s[0] == '-' || s[0] == '+') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
  return static_cast<std::uint64_t>(v);
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

template <class T>
std::string join_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::ostringstream os;
    os << v[i];
    s += (i ? "," : "") + os.str();
  }
  return s;
}

class SpecReader {
 public:
  std::vector<std::string> errors;

  void field_error(const std::string& field, const std::string& msg) {
    errors.push_back(field + ": " + msg);
  }

  double real(const std::string& field, const std::string& v) {
    if (auto d = to_double(v)) return *d;
    field_error(field, "expected a number, got '" + v + "'");
    return 0.0;
  }
  std::uint64_t uint(const std::string& field, const std::string& v) {
    if (auto d = to_uint(v)) return *d;
    field_error(field, "expected a nonnegative integer, got '" + v + "'");
    return 0;
  }
  bool boolean(const std::string& field, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    field_error(field, "expected true or false, got '" + v + "'");
    return false;
  }
  std::vector<double> reals(const std::string& field, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(real(field, item));
    return out;
  }
  std::vector<std::size_t> uints(const std::string& field, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(uint(field, item));
    return out;
  }
};

}  // namespace detail

inline void validate_spec(const ExperimentSpec& s, std::vector<std::string>& errors) {
  auto err = [&](const std::string& field, const std::string& msg) {
    errors.push_back(field + ": " + msg);
  };
  if (s.name.empty()) err("name", "required");
  if (s.iterations < 1) err("iterations", "must be >= 1");
  if (s.replicas < 1) err("replicas", "must be >= 1");
  if (s.record_every < 1) err("sampler.record_every", "must be >= 1");

  const auto& t = s.target;
  if (t.d < 1) err("target.d", "must be >= 1");
  switch (t.kind) {
    case TargetKind::Gaussian:
      if (t.precision.size() != 1 && static_cast<Eigen::Index>(t.precision.size()) != t.d)
        err("target.precision", "needs 1 or d values");
      for (double p : t.precision)
        if (!(p > 0.0)) err("target.precision", "entries must be positive");
      break;
    case TargetKind::Logistic:
    case TargetKind::Sigmoid:
      if (t.dataset.empty() && t.r < 1) err("target.r", "required (>= 1) when no dataset is given");
      if (!(t.prior >= 0.0)) err("target.prior", "must be >= 0");
      if (!(t.q0 > 0.0 && t.q0 <= 1.0)) err("target.q0", "must lie in (0, 1]");
      break;
    case TargetKind::ZeroOne:
      if (t.r < 1) err("target.r", "must be >= 1");
      if (!(t.q0 > 0.0 && t.q0 <= 1.0)) err("target.q0", "must lie in (0, 1]");
      if (!(t.epsilon > 0.0 && t.epsilon <= 0.1)) err("target.epsilon", "must lie in (0, 0.1]");
      if (!(t.c1 > 0.0)) err("target.c1", "must be positive");
      break;
  }
  if (!t.annulus.empty() &&
      (t.annulus.size() != 2 || !(t.annulus[0] > 0.0) || !(t.annulus[0] < t.annulus[1])))
    err("target.annulus", "expected 'inner,outer' with 0 < inner < outer");
  if (s.sampler == SamplerKind::ConstrainedMALA && t.annulus.size() != 2)
    err("target.annulus", "constrained_mala needs an annulus constraint");

  switch (s.schedule.mode) {
    case ScheduleMode::Explicit:
      if (!(s.schedule.eta > 0.0)) err("schedule.eta", "must be positive");
      break;
    case ScheduleMode::Theorem1:
      if (!(s.schedule.safety > 0.0)) err("schedule.safety", "must be positive");
      break;
    case ScheduleMode::Sweep:
      if (s.schedule.etas.empty()) err("schedule.etas", "sweep needs at least one step size");
      for (double e : s.schedule.etas)
        if (!(e > 0.0)) err("schedule.etas", "entries must be positive");
      break;
  }

  const auto& in = s.init;
  if (in.point.size() != 1 && static_cast<Eigen::Index>(in.point.size()) != t.d)
    err("init.point", "needs 1 or d values");
  if (!(in.scale > 0.0)) err("init.scale", "must be positive");
  if (in.kind == InitKind::Annulus && t.annulus.size() != 2)
    err("init.kind", "annulus init needs target.annulus");

  const auto& dg = s.diagnostics;
  for (const auto& n : dg.names)
    if (std::find(known_diagnostics().begin(), known_diagnostics().end(), n) ==
        known_diagnostics().end())
      err("diagnostics.list", "unknown diagnostic '" + n + "'");
  const bool needs_grid =
      dg.has("tv_vs_truth") || dg.has("mixing_time") || in.kind == InitKind::Truth;
  if (needs_grid) {
    if (t.d > 2) err("diagnostics", "grid-based diagnostics need d <= 2");
    const auto d = static_cast<std::size_t>(std::max<Eigen::Index>(t.d, 0));
    if (dg.grid_lower.size() != d || dg.grid_upper.size() != d || dg.grid_bins.size() != d)
      err("diagnostics.grid", "grid_lower, grid_upper and grid_bins need d values each");
    for (std::size_t k = 0; k < std::min({dg.grid_lower.size(), dg.grid_upper.size()}); ++k)
      if (!(dg.grid_lower[k] < dg.grid_upper[k])) err("diagnostics.grid", "lower must be < upper");
    for (auto b : dg.grid_bins)
      if (b < 2) err("diagnostics.grid_bins", "must be >= 2");
  }
  if (dg.has("mixing_time")) {
    if (s.replicas < 100) err("replicas", "mixing_time needs >= 100 replicas");
    if (dg.check_every < 1) err("diagnostics.check_every", "must be >= 1");
    if (!(dg.mixing_threshold > 0.0)) err("diagnostics.mixing_threshold", "must be positive");
  }
  if (dg.has("hitting_time") && t.kind != TargetKind::ZeroOne)
    err("diagnostics.list", "hitting_time needs a zero_one target (known parameter)");
  if (dg.has("hitting_time") && !(dg.hit_angle > 0.0))
    err("diagnostics.hit_angle", "must be positive");
  if (dg.has("energy_error_scaling") && dg.energy_etas.size() < 3)
    err("diagnostics.energy_etas", "needs at least 3 step sizes");
  if (dg.floor_batches < 1) err("diagnostics.floor_batches", "must be >= 1");
  if (dg.probe_points < 1 || dg.probe_directions < 1)
    err("diagnostics.probe", "probe_points and probe_directions must be >= 1");
}

// Parses a spec document. Relative dataset paths are resolved against
// `base_dir` when it is given, and must then exist.
inline ExperimentSpec parse_spec(const std::string& text,
                                 const std::filesystem::path& base_dir = {}) {
  detail::SpecReader rd;
  ExperimentSpec s;
  std::istringstream is(text);
  std::string line, section;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kSpecHeader)
        rd.errors.push_back("line " + std::to_string(lineno) + ": expected header '" +
                            kSpecHeader + "'");
      header_seen = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        rd.errors.push_back("line " + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> sections = {"target",   "sampler",     "schedule",
                                                        "init",     "diagnostics", "output"};
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        rd.errors.push_back("line " + std::to_string(lineno) + ": unknown section [" + section +
                            "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      rd.errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string field = section.empty() ? key : section + "." + key;
    auto unknown = [&] { rd.field_error(field, "unknown key"); };

    if (section.empty()) {
      if (key == "name") s.name = val;
      else if (key == "seed") s.seed = rd.uint(field, val);
      else if (key == "iterations") s.iterations = rd.uint(field, val);
      else if (key == "replicas") s.replicas = rd.uint(field, val);
      else unknown();
    } else if (section == "target") {
      auto& t = s.target;
      if (key == "kind") {
        if (val == "gaussian") t.kind = TargetKind::Gaussian;
        else if (val == "logistic") t.kind = TargetKind::Logistic;
        else if (val == "sigmoid") t.kind = TargetKind::Sigmoid;
        else if (val == "zero_one") t.kind = TargetKind::ZeroOne;
        else rd.field_error(field, "unknown target '" + val + "'");
      } else if (key == "d") t.d = static_cast<Eigen::Index>(rd.uint(field, val));
      else if (key == "precision") t.precision = rd.reals(field, val);
      else if (key == "dataset") t.dataset = val;
      else if (key == "r") t.r = static_cast<Eigen::Index>(rd.uint(field, val));
      else if (key == "q0") t.q0 = rd.real(field, val);
      else if (key == "data_seed") t.data_seed = rd.uint(field, val);
      else if (key == "prior") t.prior = rd.real(field, val);
      else if (key == "epsilon") t.epsilon = rd.real(field, val);
      else if (key == "c1") t.c1 = rd.real(field, val);
      else if (key == "annulus") t.annulus = rd.reals(field, val);
      else unknown();
    } else if (section == "sampler") {
      if (key == "kind") {
        if (auto k = parse_sampler_kind(val)) s.sampler = *k;
        else rd.field_error(field, "unknown sampler '" + val + "'");
      } else if (key == "lazy") s.lazy = rd.boolean(field, val);
      else if (key == "record_every") s.record_every = rd.uint(field, val);
      else unknown();
    } else if (section == "schedule") {
      if (key == "mode") {
        if (val == "explicit") s.schedule.mode = ScheduleMode::Explicit;
        else if (val == "theorem1") s.schedule.mode = ScheduleMode::Theorem1;
        else if (val == "sweep") s.schedule.mode = ScheduleMode::Sweep;
        else rd.field_error(field, "unknown schedule mode '" + val + "'");
      } else if (key == "eta") s.schedule.eta = rd.real(field, val);
      else if (key == "safety") s.schedule.safety = rd.real(field, val);
      else if (key == "etas") s.schedule.etas = rd.reals(field, val);
      else unknown();
    } else if (section == "init") {
      if (key == "kind") {
        if (val == "point") s.init.kind = InitKind::Point;
        else if (val == "gaussian") s.init.kind = InitKind::Gaussian;
        else if (val == "truth") s.init.kind = InitKind::Truth;
        else if (val == "annulus") s.init.kind = InitKind::Annulus;
        else rd.field_error(field, "unknown init kind '" + val + "'");
      } else if (key == "point") s.init.point = rd.reals(field, val);
      else if (key == "scale") s.init.scale = rd.real(field, val);
      else unknown();
    } else if (section == "diagnostics") {
      auto& dg = s.diagnostics;
      if (key == "list") dg.names = detail::split_list(val);
      else if (key == "grid_lower") dg.grid_lower = rd.reals(field, val);
      else if (key == "grid_upper") dg.grid_upper = rd.reals(field, val);
      else if (key == "grid_bins") dg.grid_bins = rd.uints(field, val);
      else if (key == "mixing_threshold") dg.mixing_threshold = rd.real(field, val);
      else if (key == "check_every") dg.check_every = rd.uint(field, val);
      else if (key == "floor_batches") dg.floor_batches = rd.uint(field, val);
      else if (key == "hit_angle") dg.hit_angle = rd.real(field, val);
      else if (key == "energy_etas") dg.energy_etas = rd.reals(field, val);
      else if (key == "energy_samples") dg.energy_samples = rd.uint(field, val);
      else if (key == "probe_points") dg.probe_points = rd.uint(field, val);
      else if (key == "probe_directions") dg.probe_directions = rd.uint(field, val);
      else unknown();
    } else if (section == "output") {
      if (key == "dir") s.output.dir = val;
      else if (key == "traces") s.output.traces = rd.boolean(field, val);
      else unknown();
    }
  }
  if (!header_seen) rd.errors.push_back(std::string("missing header '") + kSpecHeader + "'");
  if (!s.target.dataset.empty() && !base_dir.empty()) {
    std::filesystem::path p(s.target.dataset);
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) {
      rd.field_error("target.dataset", "file not found: " + p.string());
    } else {
      s.target.dataset = p.lexically_normal().string();
      if (const auto dd = dataset_dimension(p); dd != s.target.d)
        rd.field_error("target.d", "dataset has dimension " + std::to_string(dd));
    }
  }
  validate_spec(s, rd.errors);
  if (!rd.errors.empty()) throw SpecError(rd.errors);
  return s;
}

inline ExperimentSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read spec file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_spec(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

// Emits every field, so parse_spec(serialize_spec(s)) == s.
inline std::string serialize_spec(const ExperimentSpec& s) {
  using detail::join_doubles;
  std::ostringstream os;
  const auto& t = s.target;
  os << kSpecHeader << "\n"
     << "name = " << s.name << "\n"
     << "seed = " << s.seed << "\n"
     << "iterations = " << s.iterations << "\n"
     << "replicas = " << s.replicas << "\n\n"
     << "[target]\n"
     << "kind = " << to_string(t.kind) << "\n"
     << "d = " << t.d << "\n"
     << "precision = " << join_doubles(t.precision) << "\n";
  if (!t.dataset.empty()) os << "dataset = " << t.dataset << "\n";
  os << "r = " << t.r << "\n"
     << "q0 = " << format_double(t.q0) << "\n"
     << "data_seed = " << t.data_seed << "\n"
     << "prior = " << format_double(t.prior) << "\n"
     << "epsilon = " << format_double(t.epsilon) << "\n"
     << "c1 = " << format_double(t.c1) << "\n";
  if (!t.annulus.empty()) os << "annulus = " << join_doubles(t.annulus) << "\n";
  os << "\n[sampler]\n"
     << "kind = " << to_string(s.sampler) << "\n"
     << "lazy = " << (s.lazy ? "true" : "false") << "\n"
     << "record_every = " << s.record_every << "\n\n"
     << "[schedule]\n"
     << "mode = " << to_string(s.schedule.mode) << "\n"
     << "eta = " << format_double(s.schedule.eta) << "\n"
     << "safety = " << format_double(s.schedule.safety) << "\n";
  if (!s.schedule.etas.empty()) os << "etas = " << join_doubles(s.schedule.etas) << "\n";
  os << "\n[init]\n"
     << "kind = " << to_string(s.init.kind) << "\n"
     << "point = " << join_doubles(s.init.point) << "\n"
     << "scale = " << format_double(s.init.scale) << "\n\n";
  const auto& dg = s.diagnostics;
  os << "[diagnostics]\n";
  if (!dg.names.empty()) os << "list = " << detail::join_list(dg.names) << "\n";
  if (!dg.grid_lower.empty()) os << "grid_lower = " << join_doubles(dg.grid_lower) << "\n";
  if (!dg.grid_upper.empty()) os << "grid_upper = " << join_doubles(dg.grid_upper) << "\n";
  if (!dg.grid_bins.empty()) os << "grid_bins = " << detail::join_list(dg.grid_bins) << "\n";
  os << "mixing_threshold = " << format_double(dg.mixing_threshold) << "\n"
     << "check_every = " << dg.check_every << "\n"
     << "floor_batches = " << dg.floor_batches << "\n"
     << "hit_angle = " << format_double(dg.hit_angle) << "\n";
  if (!dg.energy_etas.empty()) os << "energy_etas = " << join_doubles(dg.energy_etas) << "\n";
  os << "energy_samples = " << dg.energy_samples << "\n"
     << "probe_points = " << dg.probe_points << "\n"
     << "probe_directions = " << dg.probe_directions << "\n\n"
     << "[output]\n";
  if (!s.output.dir.empty()) os << "dir = " << s.output.dir << "\n";
  os << "traces = " << (s.output.traces ? "true" : "false") << "\n";
  return os.str();
}

// ---- building the pieces --------------------------------------------------------

struct BuiltTarget {
  TargetModel target;
  std::optional<Dataset> data;
  std::optional<ConstraintSet> constraint;
  std::optional<ZeroOneSchedule> zero_one;
  std::optional<Vector> theta_star;
};

inline Vector broadcast(const std::vector<double>& v, Eigen::Index d) {
  if (v.size() == 1) return Vector::Constant(d, v[0]);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// θ* for generated data is a uniform unit vector drawn from the data seed.
inline Vector generated_theta_star(Eigen::Index d, std::uint64_t data_seed) {
  Rng rng(data_seed, streams::kData + 1);
  return sample_unit_sphere(d, rng);
}

inline BuiltTarget build_target(const ExperimentSpec& spec) {
  const auto& t = spec.target;
  BuiltTarget b;
  if (t.annulus.size() == 2) b.constraint = annulus(t.annulus[0], t.annulus[1]);
  switch (t.kind) {
    case TargetKind::Gaussian:
      b.target = make_gaussian(t.d, broadcast(t.precision, t.d));
      break;
    case TargetKind::Logistic:
    case TargetKind::Sigmoid: {
      Dataset data;
      if (!t.dataset.empty()) {
        data = load_dataset(t.dataset);
        if (data.has_sign_labels()) data = to_binary_labels(data);
      } else {
        b.theta_star = generated_theta_star(t.d, t.data_seed);
        data = to_binary_labels(sample_sphere_dataset(t.d, t.r, *b.theta_star, t.q0, t.data_seed));
      }
      if (data.true_param) b.theta_star = data.true_param;
      b.target = t.kind == TargetKind::Logistic ? make_logistic_regression(data, t.prior)
                                                : make_sigmoid_regression(data, t.prior);
      b.data = std::move(data);
      break;
    }
    case TargetKind::ZeroOne: {
      b.theta_star = generated_theta_star(t.d, t.data_seed);
      Dataset data = sample_sphere_dataset(t.d, t.r, *b.theta_star, t.q0, t.data_seed);
      b.zero_one = recommended_schedule(t.q0, t.epsilon, t.d, t.c1);
      b.target = make_smoothed_zero_one(data, b.zero_one->inverse_temperature, b.zero_one->lambda);
      b.data = std::move(data);
      break;
    }
  }
  return b;
}

inline std::optional<GridSpec> diagnostics_grid(const ExperimentSpec& spec) {
  const auto& dg = spec.diagnostics;
  if (dg.grid_bins.empty()) return std::nullopt;
  GridSpec g{dg.grid_lower, dg.grid_upper, dg.grid_bins};
  g.validate();
  return g;
}

// Start-point sampler for replica chains. Uses only the RNG it is handed.
inline InitSampler make_init_sampler(const ExperimentSpec& spec, const BuiltTarget& built) {
  const Eigen::Index d = spec.target.d;
  const Vector center = broadcast(spec.init.point, d);
  const double scale = spec.init.scale;
  switch (spec.init.kind) {
    case InitKind::Point:
      return [center](Rng&) { return center; };
    case InitKind::Gaussian:
      return [center, scale, d](Rng& rng) -> Vector { return center + scale * rng.normal_vector(d); };
    case InitKind::Truth: {
      const auto grid = diagnostics_grid(spec);
      if (!grid) throw std::invalid_argument("truth init needs a diagnostics grid");
      auto sampler = std::make_shared<GridSampler>(grid_truth(built.target, *grid, built.constraint));
      return [sampler](Rng& rng) { return (*sampler)(rng); };
    }
    case InitKind::Annulus: {
      const double a = spec.target.annulus.at(0), b = spec.target.annulus.at(1);
      // Uniform on the shell: radius density ∝ ρ^{d−1}.
      return [a, b, d](Rng& rng) -> Vector {
        const double dd = static_cast<double>(d);
        const Vector dir = sample_unit_sphere(d, rng);
        const double u = rng.uniform();
        const double rho =
            std::pow(std::pow(a, dd) + u * (std::pow(b, dd) - std::pow(a, dd)), 1.0 / dd);
        return rho * dir;
      };
    }
  }
  throw std::logic_error("unhandled init kind");
}

struct ResolvedSchedule {
  std::vector<double> etas;
  nlohmann::json details;
};

inline ResolvedSchedule resolve_schedule(const ExperimentSpec& spec, const BuiltTarget& built) {
  ResolvedSchedule out;
  switch (spec.schedule.mode) {
    case ScheduleMode::Explicit:
      out.etas = {spec.schedule.eta};
      out.details = {{"mode", "explicit"}};
      return out;
    case ScheduleMode::Sweep:
      out.etas = spec.schedule.etas;
      out.details = {{"mode", "sweep"}};
      return out;
    case ScheduleMode::Theorem1:
      break;
  }
  const auto& tm = built.target;
  double c3 = tm.constants.c3.value_or(-1.0);
  double c4 = tm.constants.c4.value_or(-1.0);
  double m = tm.constants.gradient_bound.value_or(-1.0);
  nlohmann::json details = {{"mode", "theorem1"}, {"safety", spec.schedule.safety}};
  if (c3 < 0.0 || c4 < 0.0 || m <= 0.0) {
    ProbeOptions po;
    po.points = spec.diagnostics.probe_points;
    po.directions = spec.diagnostics.probe_directions;
    po.seed = spec.seed;
    const RegularityReport rep = regularity_report(tm, po);
    if (c3 < 0.0) c3 = rep.c3_bound ? *rep.c3_bound : rep.c3_estimate;
    if (c4 < 0.0) c4 = rep.c4_bound ? *rep.c4_bound : rep.c4_estimate;
    if (m <= 0.0) m = std::max(rep.smoothness_estimate, 1e-12);
    details["regularity"] = rep.to_json();
  }
  const double tail = tm.constants.tail_rate.value_or(0.0);
  details["c3"] = c3;
  details["c4"] = c4;
  details["m"] = m;
  details["tail_rate"] = tail;
  out.etas = {theorem1_step_size(c3, c4, m, tm.dimension, tail, spec.schedule.safety)};
  out.details = std::move(details);
  return out;
}

// ---- running -------------------------------------------------------------------

struct ReplicaResult {
  double eta = 0.0;
  std::size_t replica = 0;
  bool ok = false;
  std::string error;
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  std::size_t gradient_evals = 0;
  std::size_t function_evals = 0;
  double acceptance_mean = 0.0;
  double best_potential = 0.0;
  std::size_t argmin_index = 0;
  std::optional<double> angle;
  std::optional<double> training_risk;
  std::optional<std::size_t> hitting;
  Vector best_state;
  Vector final_state;
  std::string trace_file;
};

struct RunOptions {
  unsigned threads = default_threads();
  std::optional<std::string> out_dir;  // overrides output.dir
  bool write_files = true;
};

struct RunReport {
  ExperimentSpec spec;
  std::vector<double> etas;
  nlohmann::json schedule;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::vector<ReplicaResult> replicas;
  std::vector<std::string> files;
  std::size_t gradient_evals = 0;  // Σ over replica traces
  std::size_t function_evals = 0;
  std::size_t failed = 0;
  double wall_seconds = 0.0;
  std::string version = MALAKIT_VERSION;
  std::string summary_csv;      // exact bytes of summary.csv
  std::string diagnostics_csv;  // exact bytes of diagnostics.csv

  nlohmann::json to_json() const;
};

inline std::filesystem::path resolve_out_dir(const ExperimentSpec& spec, const RunOptions& opt) {
  if (opt.out_dir) return *opt.out_dir;
  if (!spec.output.dir.empty()) return spec.output.dir;
  const char* env = std::getenv(kOutEnv);
  const std::filesystem::path base = env && *env ? env : "malakit-out";
  return base / spec.name;
}

inline std::string summary_header(Eigen::Index d) {
  std::string h =
      "eta,replica,status,accepted,proposals,gradient_evals,function_evals,acceptance_mean,"
      "best_potential,argmin_index,angle,training_risk,hitting_time";
  for (Eigen::Index k = 0; k < d; ++k) h += ",final_x_" + std::to_string(k);
  return h;
}

inline std::string summary_row(const ReplicaResult& r, Eigen::Index d) {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  os << format_double(r.eta) << ',' << r.replica << ',' << (r.ok ? "ok" : "failed") << ','
     << r.accepted << ',' << r.proposals << ',' << r.gradient_evals << ',' << r.function_evals
     << ',' << (r.ok ? format_double(r.acceptance_mean) : "") << ','
     << (r.ok ? format_double(r.best_potential) : "") << ',' << r.argmin_index << ','
     << opt(r.angle) << ',' << opt(r.training_risk) << ','
     << (r.hitting ? std::to_string(*r.hitting) : "");
  for (Eigen::Index k = 0; k < d; ++k)
    os << ',' << (r.ok && r.final_state.size() == d ? format_double(r.final_state[k]) : "");
  return os.str();
}

inline nlohmann::json RunReport::to_json() const {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : replicas) {
    nlohmann::json j = {{"eta", r.eta},
                        {"replica", r.replica},
                        {"ok", r.ok},
                        {"accepted", r.accepted},
                        {"proposals", r.proposals},
                        {"gradient_evals", r.gradient_evals},
                        {"function_evals", r.function_evals}};
    if (!r.ok) j["error"] = r.error;
    if (!r.trace_file.empty()) j["trace"] = r.trace_file;
    reps.push_back(std::move(j));
  }
  return {{"name", spec.name},
          {"spec", serialize_spec(spec)},
          {"seed", spec.seed},
          {"etas", etas},
          {"schedule", schedule},
          {"diagnostics", diagnostics},
          {"replicas", reps},
          {"failed_replicas", failed},
          {"gradient_evals", gradient_evals},
          {"function_evals", function_evals},
          {"files", files},
          {"wall_seconds", wall_seconds},
          {"version", version},
          {"compiler", __VERSION__}};
}

// Deterministic given (spec, seed, replicas): replica i uses RNG stream i of
// the master seed for its moves and stream kInit + i for its start, results
// land in index-keyed slots, and every reduction runs in index order.
inline RunReport run_experiment(const ExperimentSpec& spec, const RunOptions& opt = {}) {
  {
    std::vector<std::string> errors;
    validate_spec(spec, errors);
    if (!errors.empty()) throw SpecError(errors);
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.spec = spec;
  const BuiltTarget built = build_target(spec);
  const auto sched = resolve_schedule(spec, built);
  rep.etas = sched.etas;
  rep.schedule = sched.details;
  const InitSampler init = make_init_sampler(spec, built);
  const Eigen::Index d = built.target.dimension;
  const auto& dg = spec.diagnostics;

  const std::filesystem::path out = resolve_out_dir(spec, opt);
  if (opt.write_files) {
    std::filesystem::create_directories(out);
    if (spec.output.traces) std::filesystem::create_directories(out / "traces");
  }
  std::optional<ConstraintSet> hit_set;
  if (dg.has("hitting_time") && built.theta_star) hit_set = cone(*built.theta_star, dg.hit_angle);

  const std::size_t n_rep = spec.replicas;
  rep.replicas.resize(rep.etas.size() * n_rep);
  for (std::size_t e = 0; e < rep.etas.size(); ++e) {
    parallel_for(n_rep, opt.threads, [&](std::size_t r) {
      ReplicaResult& res = rep.replicas[e * n_rep + r];
      res.eta = rep.etas[e];
      res.replica = r;
      try {
        Rng init_rng(spec.seed, streams::kInit + r);
        const Vector x0 = init(init_rng);
        ChainConfig cfg;
        cfg.step_size = res.eta;
        cfg.iterations = spec.iterations;
        cfg.seed = spec.seed;
        cfg.stream = r;
        cfg.lazy = spec.lazy;
        cfg.record_every = spec.record_every;
        if (spec.sampler == SamplerKind::ConstrainedMALA) cfg.constraint = built.constraint;
        const ChainTrace trace = run_chain(spec.sampler, built.target, cfg, x0);
        res.accepted = trace.accepted;
        res.proposals = trace.proposals;
        res.gradient_evals = trace.gradient_evals;
        res.function_evals = trace.function_evals;
        res.acceptance_mean = acceptance_stats(trace).mean;
        const Minimizer mn = extract_minimizer(trace);
        res.best_potential = mn.potential;
        res.argmin_index = mn.index;
        res.best_state = mn.state;
        res.final_state = trace.final_state();
        if (built.theta_star && mn.state.norm() > 0.0)
          res.angle = angle_between(mn.state, *built.theta_star);
        if (built.data && spec.target.kind == TargetKind::ZeroOne)
          res.training_risk = zero_one_risk(*built.data, mn.state);
        if (hit_set) res.hitting = hitting_time(trace, *hit_set);
        if (opt.write_files && spec.output.traces) {
          const auto file = out / "traces" /
                            ("eta" + std::to_string(e) + "_replica" + std::to_string(r) + ".csv");
          save_trace(trace, file, {{"experiment", spec.name}});
          res.trace_file = file.string();
        }
        res.ok = true;
      } catch (const std::exception& ex) {
        res.ok = false;
        res.error = ex.what();
      }
    });
  }
  for (const auto& r : rep.replicas) {
    rep.gradient_evals += r.gradient_evals;
    rep.function_evals += r.function_evals;
    if (!r.ok) ++rep.failed;
    if (!r.trace_file.empty()) {
      rep.files.push_back(r.trace_file);
      auto side = std::filesystem::path(r.trace_file);
      side.replace_extension(".json");
      rep.files.push_back(side.string());
    }
  }
  if (rep.failed == rep.replicas.size())
    throw std::runtime_error("run_experiment: every replica failed; first error: " +
                             rep.replicas.front().error);

  // Run-level diagnostics, in a fixed order, one entry per step size.
  std::ostringstream dcsv;
  dcsv << "diagnostic,eta,key,value\n";
  auto emit = [&](const std::string& diag, double eta, const std::string& key, double value) {
    dcsv << diag << ',' << format_double(eta) << ',' << key << ',' << format_double(value) << '\n';
  };
  std::optional<GridDistribution> truth;
  if (dg.has("tv_vs_truth") || dg.has("mixing_time"))
    truth = grid_truth(built.target, *diagnostics_grid(spec),
                       spec.sampler == SamplerKind::ConstrainedMALA ? built.constraint
                                                                    : std::nullopt);
  nlohmann::json per_eta = nlohmann::json::array();
  for (std::size_t e = 0; e < rep.etas.size(); ++e) {
    const double eta = rep.etas[e];
    nlohmann::json j = {{"eta", eta}};
    std::vector<const ReplicaResult*> ok;
    for (std::size_t r = 0; r < n_rep; ++r)
      if (rep.replicas[e * n_rep + r].ok) ok.push_back(&rep.replicas[e * n_rep + r]);
    if (ok.empty()) {
      j["error"] = "all replicas failed";
      per_eta.push_back(std::move(j));
      continue;
    }
    if (dg.has("acceptance_stats")) {
      double mean = 0.0;
      std::size_t acc = 0, prop = 0;
      for (auto* r : ok) {
        mean += r->acceptance_mean;
        acc += r->accepted;
        prop += r->proposals;
      }
      mean /= static_cast<double>(ok.size());
      const double frac = prop ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
      j["acceptance_stats"] = {{"mean", mean}, {"accepted_fraction", frac},
                               {"replicas", ok.size()}, {"proposals", prop}};
      emit("acceptance_stats", eta, "mean", mean);
      emit("acceptance_stats", eta, "accepted_fraction", frac);
    }
    if (dg.has("tv_vs_truth")) {
      std::vector<Vector> finals;
      for (auto* r : ok) finals.push_back(r->final_state);
      const double tv = tv_to_truth(finals, *truth);
      const double floor = binning_floor(*truth, finals.size(), dg.floor_batches, spec.seed);
      j["tv_vs_truth"] = {{"tv", tv},
                          {"floor", floor},
                          {"corrected", std::max(0.0, tv - floor)},
                          {"replicas", finals.size()},
                          {"iteration", spec.iterations},
                          {"seed", spec.seed}};
      emit("tv_vs_truth", eta, "tv", tv);
      emit("tv_vs_truth", eta, "floor", floor);
    }
    if (dg.has("mixing_time")) {
      EnsembleOptions eo;
      eo.kind = spec.sampler;
      eo.eta = eta;
      eo.lazy = spec.lazy;
      eo.constraint = built.constraint;
      eo.replicas = n_rep;
      eo.seed = spec.seed;
      eo.threads = opt.threads;
      eo.floor_batches = dg.floor_batches;
      const auto est = mixing_time_estimate(built.target, eo, init, *truth, dg.mixing_threshold,
                                            dg.check_every, spec.iterations);
      j["mixing_time"] = {{"iteration", est.iteration ? nlohmann::json(*est.iteration)
                                                      : nlohmann::json(nullptr)},
                          {"floor", est.floor},
                          {"threshold", dg.mixing_threshold},
                          {"replicas", est.replicas},
                          {"checkpoints", est.checkpoints.size()},
                          {"seed", spec.seed}};
      emit("mixing_time", eta, "iteration",
           est.iteration ? static_cast<double>(*est.iteration) : -1.0);
      emit("mixing_time", eta, "floor", est.floor);
    }
    if (dg.has("hitting_time")) {
      std::vector<double> hits;
      for (auto* r : ok)
        if (r->hitting) hits.push_back(static_cast<double>(*r->hitting));
      std::sort(hits.begin(), hits.end());
      j["hitting_time"] = {{"hit", hits.size()}, {"replicas", ok.size()},
                           {"angle", dg.hit_angle}};
      emit("hitting_time", eta, "hit_fraction",
           static_cast<double>(hits.size()) / static_cast<double>(ok.size()));
      if (!hits.empty()) {
        j["hitting_time"]["median"] = quantile_sorted(hits, 0.5);
        emit("hitting_time", eta, "median", quantile_sorted(hits, 0.5));
      }
    }
    if (dg.has("minimizer")) {
      const ReplicaResult* best = ok.front();
      for (auto* r : ok)
        if (r->best_potential < best->best_potential) best = r;
      std::vector<double> x(best->best_state.data(),
                            best->best_state.data() + best->best_state.size());
      j["minimizer"] = {{"replica", best->replica}, {"potential", best->best_potential},
                        {"state", x}};
      emit("minimizer", eta, "potential", best->best_potential);
      if (best->angle) {
        j["minimizer"]["angle"] = *best->angle;
        emit("minimizer", eta, "angle", *best->angle);
      }
      if (best->training_risk) {
        j["minimizer"]["training_risk"] = *best->training_risk;
        emit("minimizer", eta, "training_risk", *best->training_risk);
      }
    }
    per_eta.push_back(std::move(j));
  }
  rep.diagnostics["per_eta"] = per_eta;

  if (dg.has("energy_error_scaling")) {
    const Eigen::Index dd = d;
    PhaseSampler phase = [&init, dd](Rng& rng) {
      Vector x = init(rng);
      return PhaseState(x, rng.normal_vector(dd));
    };
    const ScalingFit fit =
        energy_error_scaling(built.target, phase, dg.energy_etas, dg.energy_samples, spec.seed);
    nlohmann::json j = fit.to_json();
    j["samples_per_eta"] = dg.energy_samples;
    j["seed"] = spec.seed;
    rep.diagnostics["energy_error_scaling"] = j;
    emit("energy_error_scaling", 0.0, "slope", fit.slope);
    emit("energy_error_scaling", 0.0, "r_squared", fit.r_squared);
  }
  if (dg.has("regularity")) {
    ProbeOptions po;
    po.points = dg.probe_points;
    po.directions = dg.probe_directions;
    po.seed = spec.seed;
    const RegularityReport rr = regularity_report(built.target, po);
    rep.diagnostics["regularity"] = rr.to_json();
    emit("regularity", 0.0, "c3_estimate", rr.c3_estimate);
    emit("regularity", 0.0, "c4_estimate", rr.c4_estimate);
    if (rr.incoherence) emit("regularity", 0.0, "incoherence", *rr.incoherence);
  }

  std::ostringstream scsv;
  scsv << summary_header(d) << '\n';
  for (const auto& r : rep.replicas) scsv << summary_row(r, d) << '\n';
  rep.summary_csv = scsv.str();
  rep.diagnostics_csv = dcsv.str();
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (opt.write_files) {
    auto write = [&](const std::string& fname, const std::string& body) {
      const auto p = out / fname;
      std::ofstream os(p, std::ios::binary);
      if (!os) throw std::runtime_error("cannot write " + p.string());
      os << body;
      rep.files.push_back(p.string());
    };
    write("summary.csv", rep.summary_csv);
    write("diagnostics.csv", rep.diagnostics_csv);
    write("spec.txt", serialize_spec(spec));
    rep.files.push_back((out / "report.json").string());
    write("report.json", rep.to_json().dump(2) + "\n");
  }
  return rep;
}

// ---- scaling studies -------------------------------------------------------------

enum class ScalingAxis { Eta, Dimension };

struct ScalingRow {
  double value = 0.0;
  std::optional<double> mixing;  // iterations
  std::optional<double> acceptance_mean;
  std::size_t gradient_evals = 0;
  std::string error;
};

struct ScalingTable {
  ScalingAxis axis = ScalingAxis::Eta;
  std::vector<ScalingRow> rows;
  std::optional<ScalingFit> mixing_fit;  // log mixing vs log value, survivors only

  static std::string csv_safe(std::string s) {
    for (char& c : s)
      if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
    return s;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << (axis == ScalingAxis::Eta ? "eta" : "dimension")
       << ",mixing_time,acceptance_mean,gradient_evals,error\n";
    for (const auto& r : rows)
      os << format_double(r.value) << ',' << (r.mixing ? format_double(*r.mixing) : "") << ','
         << (r.acceptance_mean ? format_double(*r.acceptance_mean) : "") << ','
         << r.gradient_evals << ',' << csv_safe(r.error) << '\n';
    if (mixing_fit)
      os << "# slope," << format_double(mixing_fit->slope) << ",r_squared,"
         << format_double(mixing_fit->r_squared) << '\n';
    return os.str();
  }
};

// One run per axis value, all sharing the template's master seed (common
// random numbers across cells). A failing cell is recorded and skipped.
inline ScalingTable scaling_study(const ExperimentSpec& tmpl, ScalingAxis axis,
                                  const std::vector<double>& values, const RunOptions& opt = {}) {
  if (values.size() < 3) throw std::invalid_argument("scaling_study: need at least 3 axis values");
  ScalingTable table;
  table.axis = axis;
  std::vector<double> xs, ys;
  for (double v : values) {
    ScalingRow row;
    row.value = v;
    ExperimentSpec s = tmpl;
    if (axis == ScalingAxis::Eta) {
      s.schedule.mode = ScheduleMode::Explicit;
      s.schedule.eta = v;
    } else {
      if (v < 1.0 || v != std::floor(v)) {
        row.error = "dimension must be a positive integer";
        table.rows.push_back(row);
        continue;
      }
      s.target.d = static_cast<Eigen::Index>(v);
      if (s.target.precision.size() != 1) s.target.precision.resize(1);
      if (s.init.point.size() != 1) s.init.point.resize(1);
    }
    if (!s.diagnostics.has("acceptance_stats")) s.diagnostics.names.push_back("acceptance_stats");
    RunOptions ro = opt;
    if (opt.write_files)
      ro.out_dir = (resolve_out_dir(tmpl, opt) / ("cell_" + format_double(v))).string();
    try {
      const RunReport rep = run_experiment(s, ro);
      const auto& cell = rep.diagnostics["per_eta"].at(0);
      if (cell.contains("acceptance_stats"))
        row.acceptance_mean = cell["acceptance_stats"]["mean"].get<double>();
      if (cell.contains("mixing_time") && !cell["mixing_time"]["iteration"].is_null())
        row.mixing = cell["mixing_time"]["iteration"].get<double>();
      row.gradient_evals = rep.gradient_evals;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    if (row.mixing && *row.mixing > 0.0) {
      xs.push_back(v);
      ys.push_back(*row.mixing);
    }
    table.rows.push_back(row);
  }
  if (xs.size() >= 2) {
    try {
      table.mixing_fit = fit_power_law(xs, ys);
    } catch (const FitFailed&) {
    }
  }
  return table;
}

}  // namespace malakit

#endif
