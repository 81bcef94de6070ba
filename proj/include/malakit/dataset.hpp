#ifndef MALAKIT_DATASET_HPP
#define MALAKIT_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "malakit/rng.hpp"

namespace malakit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kUnitNormTolerance = 1e-12;

// Feature columns 𝒳_1..𝒳_r (unit norm) with one response per column.
// Responses are 0/1 for the regression targets and ±1 for the classifier
// model; the target factories check which convention they need.
struct Dataset {
  Matrix features;  // d x r
  Vector responses;
  std::optional<Vector> true_param;
  double noise_floor = 1.0;
  std::optional<std::uint64_t> seed;

  Eigen::Index dim() const { return features.rows(); }
  Eigen::Index size() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1) throw std::invalid_argument("dataset: dimension must be >= 1");
    if (responses.size() != features.cols())
      throw std::invalid_argument("dataset: responses length must equal number of columns");
    if (!features.allFinite() || !responses.allFinite())
      throw std::invalid_argument("dataset: non-finite entry");
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      const double n = features.col(j).norm();
      if (std::abs(n - 1.0) > kUnitNormTolerance)
        throw std::invalid_argument("dataset: feature column " + std::to_string(j) +
                                    " is not unit norm (norm " + std::to_string(n) + ")");
    }
    if (!(noise_floor > 0.0 && noise_floor <= 1.0))
      throw std::invalid_argument("dataset: noise floor must lie in (0, 1]");
  }

  bool has_binary_labels() const {
    return (responses.array() == 0.0 || responses.array() == 1.0).all();
  }
  bool has_sign_labels() const {
    return (responses.array() == -1.0 || responses.array() == 1.0).all();
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    auto same_opt = [](const std::optional<Vector>& x, const std::optional<Vector>& y) {
      if (x.has_value() != y.has_value()) return false;
      return !x || (x->size() == y->size() && *x == *y);
    };
    return a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features && a.responses == b.responses &&
           same_opt(a.true_param, b.true_param) && a.noise_floor == b.noise_floor &&
           a.seed == b.seed;
  }
};

// Uniform direction via a normalized standard Gaussian; near-zero draws are
// rejected.
inline Vector sample_unit_sphere(Eigen::Index d, Rng& rng) {
  for (;;) {
    Vector g = rng.normal_vector(d);
    const double n = g.norm();
    if (n >= 1e-12) return g / n;
  }
}

// Response model: sign(xᵀθ*) with probability (1 + q(x))/2, otherwise the
// opposite sign, with q(x) = min(1, q0·|xᵀθ*|). sign(0) is taken as +1.
inline double draw_label(const Vector& x, const Vector& theta_star, double q0, Rng& rng) {
  const double margin = x.dot(theta_star);
  const double s = margin >= 0.0 ? 1.0 : -1.0;
  const double q = std::min(1.0, q0 * std::abs(margin));
  return rng.uniform() < 0.5 * (1.0 + q) ? s : -s;
}

inline Dataset sample_sphere_dataset(Eigen::Index d, Eigen::Index r, const Vector& theta_star,
                                     double q0, std::uint64_t seed) {
  if (d < 1 || r < 0) throw std::invalid_argument("sample_sphere_dataset: bad shape");
  if (theta_star.size() != d) throw std::invalid_argument("sample_sphere_dataset: theta* size");
  if (std::abs(theta_star.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("sample_sphere_dataset: theta* must be a unit vector");
  if (!(q0 > 0.0 && q0 <= 1.0)) throw std::invalid_argument("sample_sphere_dataset: q0 in (0,1]");
  Rng rng(seed, streams::kData);
  Dataset data;
  data.features.resize(d, r);
  data.responses.resize(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    data.features.col(i) = sample_unit_sphere(d, rng);
    data.responses[i] = draw_label(data.features.col(i), theta_star, q0, rng);
  }
  data.true_param = theta_star;
  data.noise_floor = q0;
  data.seed = seed;
  return data;
}

// Same generator with 0/1 responses, for the regression targets.
inline Dataset to_binary_labels(Dataset data) {
  for (Eigen::Index i = 0; i < data.responses.size(); ++i)
    data.responses[i] = data.responses[i] > 0.0 ? 1.0 : 0.0;
  return data;
}

// Fraction of sign disagreements, sign(0) counted as +1. This is the raw
// zero-one loss; it only ever serves as an evaluation oracle.
inline double zero_one_risk(const Dataset& data, const Vector& x) {
  if (data.size() == 0) throw std::invalid_argument("zero_one_risk: empty dataset");
  const Vector margins = data.features.transpose() * x;
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double pred = margins[i] >= 0.0 ? 1.0 : -1.0;
    if (pred != data.responses[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

inline double angle_between(const Vector& a, const Vector& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// ---- serialization --------------------------------------------------------
//
// CSV: header feature_0..feature_{d-1},response; one row per datum with
// full-precision decimals. Sidecar JSON next to it (same stem, .json):
// {d, r, q0, seed, theta_star}.

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_dataset_csv(const Dataset& data, std::ostream& os) {
  for (Eigen::Index k = 0; k < data.dim(); ++k) os << "feature_" << k << ',';
  os << "response\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < data.dim(); ++k) os << format_double(data.features(k, i)) << ',';
    os << format_double(data.responses[i]) << '\n';
  }
}

inline nlohmann::json dataset_sidecar(const Dataset& data) {
  nlohmann::json j;
  j["d"] = data.dim();
  j["r"] = data.size();
  j["q0"] = data.noise_floor;
  j["seed"] = data.seed ? nlohmann::json(*data.seed) : nlohmann::json(nullptr);
  if (data.true_param)
    j["theta_star"] = std::vector<double>(data.true_param->data(),
                                          data.true_param->data() + data.true_param->size());
  else
    j["theta_star"] = nullptr;
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline void save_dataset(const Dataset& data, const std::filesystem::path& csv) {
  {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
    write_dataset_csv(data, os);
  }
  std::ofstream js(sidecar_path(csv));
  if (!js) throw std::runtime_error("cannot write " + sidecar_path(csv).string());
  js << dataset_sidecar(data).dump(2) << '\n';
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("dataset csv: missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "response")
    throw std::invalid_argument("dataset csv: header must end with 'response'");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index k = 0; k < d; ++k)
    if (header[k] != "feature_" + std::to_string(k))
      throw std::invalid_argument("dataset csv: unexpected column '" + header[k] + "'");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::invalid_argument("dataset csv: bad number on line " + std::to_string(lineno));
      }
    }
    if (row.size() != header.size())
      throw std::invalid_argument("dataset csv: wrong field count on line " +
                                  std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  Dataset data;
  data.features.resize(d, static_cast<Eigen::Index>(rows.size()));
  data.responses.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) data.features(k, static_cast<Eigen::Index>(i)) = rows[i][k];
    data.responses[static_cast<Eigen::Index>(i)] = rows[i].back();
  }
  data.validate();
  return data;
}

// Feature count from the CSV header alone.
inline Eigen::Index dataset_dimension(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  std::string line;
  if (!is || !std::getline(is, line)) throw std::invalid_argument("cannot read " + csv.string());
  return static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
}

inline Dataset load_dataset(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw std::invalid_argument("cannot open dataset " + csv.string());
  Dataset data = read_dataset_csv(is);
  const auto side = sidecar_path(csv);
  if (std::filesystem::exists(side)) {
    std::ifstream js(side);
    const auto j = nlohmann::json::parse(js);
    if (j.at("d").get<Eigen::Index>() != data.dim() || j.at("r").get<Eigen::Index>() != data.size())
      throw std::invalid_argument("dataset sidecar shape disagrees with csv");
    data.noise_floor = j.at("q0").get<double>();
    if (!j.at("seed").is_null()) data.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("theta_star").is_null()) {
      const auto t = j.at("theta_star").get<std::vector<double>>();
      data.true_param = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
    }
  }
  data.validate();
  return data;
}

}  // namespace malakit

#endif
