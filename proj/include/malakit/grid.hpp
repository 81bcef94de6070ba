#ifndef MALAKIT_GRID_HPP
#define MALAKIT_GRID_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "malakit/errors.hpp"
#include "malakit/log.hpp"
#include "malakit/rng.hpp"
#include "malakit/target.hpp"

namespace malakit {

// Axis-aligned box split into equal cells; 1D or 2D. Cell index is
// i0 + bins[0]*i1.
struct GridSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> bins;

  GridSpec() = default;
  GridSpec(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> n)
      : lower(std::move(lo)), upper(std::move(hi)), bins(std::move(n)) {
    validate();
  }
  static GridSpec line(double lo, double hi, std::size_t n) { return GridSpec({lo}, {hi}, {n}); }
  static GridSpec square(double lo, double hi, std::size_t n) {
    return GridSpec({lo, lo}, {hi, hi}, {n, n});
  }

  void validate() const {
    if (lower.empty() || lower.size() > 2)
      throw std::invalid_argument("grid: only 1D and 2D grids are supported");
    if (upper.size() != lower.size() || bins.size() != lower.size())
      throw std::invalid_argument("grid: bounds/bins arity mismatch");
    for (std::size_t k = 0; k < lower.size(); ++k) {
      if (!(lower[k] < upper[k])) throw std::invalid_argument("grid: lower must be < upper");
      if (bins[k] < 1) throw std::invalid_argument("grid: need at least one bin per axis");
    }
  }

  std::size_t dims() const { return lower.size(); }
  std::size_t cells() const {
    return std::accumulate(bins.begin(), bins.end(), std::size_t{1}, std::multiplies<>());
  }
  double width(std::size_t axis) const {
    return (upper[axis] - lower[axis]) / static_cast<double>(bins[axis]);
  }
  double cell_volume() const {
    double v = 1.0;
    for (std::size_t k = 0; k < dims(); ++k) v *= width(k);
    return v;
  }
  std::size_t axis_index(std::size_t cell, std::size_t axis) const {
    return axis == 0 ? cell % bins[0] : cell / bins[0];
  }
  Vector midpoint(std::size_t cell) const {
    Vector m(static_cast<Eigen::Index>(dims()));
    for (std::size_t k = 0; k < dims(); ++k)
      m[static_cast<Eigen::Index>(k)] =
          lower[k] + (static_cast<double>(axis_index(cell, k)) + 0.5) * width(k);
    return m;
  }
  // Upper boundary belongs to the last cell.
  std::optional<std::size_t> locate(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != dims()) throw std::invalid_argument("grid: dim");
    std::size_t cell = 0;
    std::size_t stride = 1;
    for (std::size_t k = 0; k < dims(); ++k) {
      const double v = x[static_cast<Eigen::Index>(k)];
      if (!(v >= lower[k] && v <= upper[k])) return std::nullopt;
      auto i = static_cast<std::size_t>((v - lower[k]) / width(k));
      i = std::min(i, bins[k] - 1);
      cell += i * stride;
      stride *= bins[k];
    }
    return cell;
  }
  bool is_boundary(std::size_t cell) const {
    for (std::size_t k = 0; k < dims(); ++k) {
      const auto i = axis_index(cell, k);
      if (i == 0 || i + 1 == bins[k]) return true;
    }
    return false;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridDistribution {
  GridSpec grid;
  std::vector<double> mass;

  std::size_t dims() const { return grid.dims(); }
  std::size_t cells() const { return mass.size(); }

  double boundary_mass() const {
    double b = 0.0;
    for (std::size_t c = 0; c < mass.size(); ++c)
      if (grid.is_boundary(c)) b += mass[c];
    return b;
  }

  void validate() const {
    grid.validate();
    if (mass.size() != grid.cells()) throw std::invalid_argument("grid: mass size != cells");
    double total = 0.0;
    for (double m : mass) {
      if (!(m >= 0.0)) throw std::invalid_argument("grid: negative or NaN mass");
      total += m;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("grid: mass must sum to 1");
  }
};

namespace detail {
inline void normalize_mass(std::vector<double>& mass) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= total;
}
}  // namespace detail

inline constexpr double kTruncationWarnMass = 1e-6;

// Midpoint quadrature of e^{-U}·𝟙_S, normalized over the grid. Without a
// constraint each cell is weighted by its midpoint, which is the stationary law
// of the discretized kernels. With one, the indicator is discontinuous inside
// cells, so each cell is split into `subdivisions` parts per axis.
inline GridDistribution grid_truth(const TargetModel& target, const GridSpec& grid,
                                   const std::optional<ConstraintSet>& constraint = std::nullopt,
                                   std::size_t subdivisions = 16) {
  grid.validate();
  if (static_cast<std::size_t>(target.dimension) != grid.dims())
    throw std::invalid_argument("grid_truth: target dimension != grid dimension");
  for (auto b : grid.bins)
    if (b < 2) throw std::invalid_argument("grid_truth: need at least 2 bins per axis");
  if (subdivisions < 1) throw std::invalid_argument("grid_truth: subdivisions >= 1");
  const std::size_t k = constraint ? subdivisions : 1;
  const std::size_t per_cell = grid.dims() == 1 ? k : k * k;
  const std::size_t n = grid.cells();
  // u = +inf marks points outside the constraint
  std::vector<double> u(n * per_cell, std::numeric_limits<double>::infinity());
  double u_min = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    const Vector m = grid.midpoint(c);
    for (std::size_t s = 0; s < per_cell; ++s) {
      Vector p = m;
      for (std::size_t a = 0; a < grid.dims(); ++a) {
        const std::size_t j = a == 0 ? s % k : s / k;
        p[static_cast<Eigen::Index>(a)] +=
            ((static_cast<double>(j) + 0.5) / static_cast<double>(k) - 0.5) * grid.width(a);
      }
      if (constraint && !(*constraint)(p)) continue;
      const double v = target.potential(p);
      u[c * per_cell + s] = v;
      u_min = std::min(u_min, v);
    }
  }
  GridDistribution out{grid, std::vector<double>(n, 0.0)};
  bool any = false;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t s = 0; s < per_cell; ++s)
      out.mass[c] += std::exp(-(u[c * per_cell + s] - u_min));
    any = any || out.mass[c] > 0.0;
  }
  if (!any) throw EmptySupport("grid_truth: no grid cell carries mass");
  detail::normalize_mass(out.mass);
  if (out.boundary_mass() > kTruncationWarnMass)
    warn("grid_truth: boundary cells carry " + format_double(out.boundary_mass()) +
         " of the mass; the domain truncates the target");
  return out;
}

struct Histogram {
  GridDistribution distribution;
  std::size_t in_bounds = 0;
  std::size_t out_of_bounds = 0;
};

inline Histogram histogram(const std::vector<Vector>& samples, const GridSpec& grid) {
  grid.validate();
  Histogram h{{grid, std::vector<double>(grid.cells(), 0.0)}, 0, 0};
  std::vector<std::size_t> counts(grid.cells(), 0);
  for (const auto& x : samples) {
    if (auto c = grid.locate(x)) {
      ++counts[*c];
      ++h.in_bounds;
    } else {
      ++h.out_of_bounds;
    }
  }
  if (h.in_bounds == 0) throw EmptySupport("histogram: no sample falls inside the grid");
  for (std::size_t c = 0; c < counts.size(); ++c)
    h.distribution.mass[c] = static_cast<double>(counts[c]) / static_cast<double>(h.in_bounds);
  return h;
}

// ½ Σ |p − q| on a shared grid.
inline double tv_distance(const GridDistribution& p, const GridDistribution& q) {
  if (!(p.grid == q.grid) || p.mass.size() != q.mass.size())
    throw std::invalid_argument("tv_distance: grid geometry mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < p.mass.size(); ++c) s += std::abs(p.mass[c] - q.mass[c]);
  return std::min(1.0, 0.5 * s);
}

// Draws a cell by mass, then a uniform point inside it.
class GridSampler {
 public:
  explicit GridSampler(const GridDistribution& dist) : dist_(&dist), cdf_(dist.mass.size()) {
    std::partial_sum(dist.mass.begin(), dist.mass.end(), cdf_.begin());
  }

  Vector operator()(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto cell = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
    while (dist_->mass[cell] == 0.0 && cell > 0) --cell;
    Vector x = dist_->grid.midpoint(cell);
    for (std::size_t k = 0; k < dist_->dims(); ++k)
      x[static_cast<Eigen::Index>(k)] += (rng.uniform() - 0.5) * dist_->grid.width(k);
    return x;
  }

 private:
  const GridDistribution* dist_;
  std::vector<double> cdf_;
};

// CSV: cell,mid_0[,mid_1],mass
inline void write_grid_csv(const GridDistribution& dist, std::ostream& os) {
  os << "cell";
  for (std::size_t k = 0; k < dist.dims(); ++k) os << ",mid_" << k;
  os << ",mass\n";
  for (std::size_t c = 0; c < dist.cells(); ++c) {
    os << c;
    const Vector m = dist.grid.midpoint(c);
    for (Eigen::Index k = 0; k < m.size(); ++k) os << ',' << format_double(m[k]);
    os << ',' << format_double(dist.mass[c]) << '\n';
  }
}

}  // namespace malakit

#endif
