#include "sgil/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sgil::grid {

namespace {

// Tolerance (in cells) below which a query snaps onto a node. Absorbs the
// ulp noise of reconstructing node coordinates, keeping interpolation exact
// at nodes.
constexpr double kSnapTol = 1e-9;

struct AxisLoc {
  int i0 = 0;
  int i1 = 0;
  double w = 0.0;  // weight of i1
  bool clamped = false;
};

AxisLoc locate(const Axis& ax, double x) {
  AxisLoc loc;
  const double dx = ax.spacing();
  double t = (x - ax.lo) / dx;
  if (ax.periodic) {
    t -= ax.n * std::floor(t / ax.n);
    if (t >= ax.n) t = 0.0;  // guard against floor rounding at the seam
    int i0 = static_cast<int>(t);
    double w = t - i0;
    if (w < kSnapTol) w = 0.0;
    if (w > 1.0 - kSnapTol) {
      w = 0.0;
      ++i0;
    }
    if (i0 >= ax.n) i0 -= ax.n;
    loc.i0 = i0;
    loc.i1 = (i0 + 1 == ax.n) ? 0 : i0 + 1;
    loc.w = w;
    return loc;
  }
  if (t < 0.0) {
    loc.clamped = t < -kSnapTol;
    t = 0.0;
  } else if (t > ax.n - 1) {
    loc.clamped = t > ax.n - 1 + kSnapTol;
    t = ax.n - 1;
  }
  int i0 = static_cast<int>(t);
  if (i0 > ax.n - 2) i0 = ax.n - 2;
  double w = t - i0;
  if (w < kSnapTol) w = 0.0;
  if (w > 1.0 - kSnapTol) w = 1.0;
  loc.i0 = i0;
  loc.i1 = i0 + 1;
  loc.w = w;
  return loc;
}

struct Located {
  AxisLoc ax[kMaxDim];
  bool clamped = false;
};

Located locate_all(const Grid& g, Eigen::Ref<const Eigen::VectorXd> x) {
  if (x.size() != g.dim())
    throw std::invalid_argument("query dimension does not match grid");
  Located loc;
  for (int a = 0; a < g.dim(); ++a) {
    if (!std::isfinite(x[a]))
      throw std::invalid_argument("non-finite query coordinate");
    loc.ax[a] = locate(g.axis(a), x[a]);
    loc.clamped |= loc.ax[a].clamped;
  }
  return loc;
}

// Central difference along axis `a` at a node; one-sided at non-periodic
// boundaries, wrapping on periodic axes.
double central_diff(const Field& f, const int* midx, int a) {
  const Grid& g = *f.grid;
  const Axis& ax = g.axis(a);
  const double dx = ax.spacing();
  const std::int64_t c = g.flat_index(midx);
  const std::int64_t s = g.stride(a);
  const int i = midx[a];
  if (ax.periodic) {
    const std::int64_t prev = (i == 0) ? c + s * (ax.n - 1) : c - s;
    const std::int64_t next = (i == ax.n - 1) ? c - s * (ax.n - 1) : c + s;
    return (f.values[next] - f.values[prev]) / (2.0 * dx);
  }
  if (i == 0) return (f.values[c + s] - f.values[c]) / dx;
  if (i == ax.n - 1) return (f.values[c] - f.values[c - s]) / dx;
  return (f.values[c + s] - f.values[c - s]) / (2.0 * dx);
}

}  // namespace

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || static_cast<int>(axes_.size()) > kMaxDim)
    throw std::invalid_argument("grid must have between 1 and " +
                                std::to_string(kMaxDim) + " axes");
  for (const Axis& ax : axes_) {
    if (!std::isfinite(ax.lo) || !std::isfinite(ax.hi))
      throw std::invalid_argument("axis bounds must be finite");
    if (!(ax.lo < ax.hi)) throw std::invalid_argument("axis requires lo < hi");
    if (ax.n < 3) throw std::invalid_argument("axis requires n >= 3");
  }
  strides_.assign(axes_.size(), 1);
  size_ = 1;
  for (int a = dim() - 1; a >= 0; --a) {
    strides_[a] = size_;
    size_ *= axes_[a].n;
  }
}

double Grid::wrap(int a, double x) const {
  const Axis& ax = axes_[a];
  if (!ax.periodic) return x;
  const double period = ax.hi - ax.lo;
  double y = x - period * std::floor((x - ax.lo) / period);
  if (y >= ax.hi) y -= period;
  return y;
}

GridPtr build_grid(std::vector<Axis> axes) {
  return std::make_shared<Grid>(std::move(axes));
}

Interp interpolate_clamped(const Field& f, Eigen::Ref<const Eigen::VectorXd> x) {
  const Grid& g = *f.grid;
  const Located loc = locate_all(g, x);
  const int d = g.dim();
  std::int64_t c0[kMaxDim], c1[kMaxDim];
  for (int a = 0; a < d; ++a) {
    c0[a] = loc.ax[a].i0 * g.stride(a);
    c1[a] = loc.ax[a].i1 * g.stride(a);
  }
  double acc = 0.0;
  const int corners = 1 << d;
  for (int m = 0; m < corners; ++m) {
    double w = 1.0;
    std::int64_t flat = 0;
    for (int a = 0; a < d; ++a) {
      if (m & (1 << a)) {
        w *= loc.ax[a].w;
        flat += c1[a];
      } else {
        w *= 1.0 - loc.ax[a].w;
        flat += c0[a];
      }
    }
    if (w != 0.0) acc += w * f.values[flat];
  }
  return {acc, loc.clamped};
}

double interpolate(const Field& f, Eigen::Ref<const Eigen::VectorXd> x) {
  const Interp r = interpolate_clamped(f, x);
  if (r.clamped)
    throw std::domain_error("interpolation query outside non-periodic axis");
  return r.value;
}

GradientResult gradient_at_clamped(const Field& f,
                                   Eigen::Ref<const Eigen::VectorXd> x) {
  const Grid& g = *f.grid;
  const Located loc = locate_all(g, x);
  const int d = g.dim();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
  int midx[kMaxDim];
  const int corners = 1 << d;
  for (int m = 0; m < corners; ++m) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      if (m & (1 << a)) {
        w *= loc.ax[a].w;
        midx[a] = loc.ax[a].i1;
      } else {
        w *= 1.0 - loc.ax[a].w;
        midx[a] = loc.ax[a].i0;
      }
    }
    if (w == 0.0) continue;
    for (int a = 0; a < d; ++a) grad[a] += w * central_diff(f, midx, a);
  }
  return {std::move(grad), loc.clamped};
}

Eigen::VectorXd gradient_at(const Field& f,
                            Eigen::Ref<const Eigen::VectorXd> x) {
  GradientResult r = gradient_at_clamped(f, x);
  if (r.clamped)
    throw std::domain_error("gradient query outside non-periodic axis");
  return std::move(r.grad);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> upwind_derivatives(
    const Field& f, const int* midx) {
  const Grid& g = *f.grid;
  const int d = g.dim();
  Eigen::VectorXd left(d), right(d);
  const std::int64_t c = g.flat_index(midx);
  for (int a = 0; a < d; ++a) {
    const Axis& ax = g.axis(a);
    const double inv = 1.0 / ax.spacing();
    const std::int64_t s = g.stride(a);
    const int i = midx[a];
    if (ax.periodic) {
      const std::int64_t prev = (i == 0) ? c + s * (ax.n - 1) : c - s;
      const std::int64_t next = (i == ax.n - 1) ? c - s * (ax.n - 1) : c + s;
      left[a] = (f.values[c] - f.values[prev]) * inv;
      right[a] = (f.values[next] - f.values[c]) * inv;
    } else if (i == 0) {
      // ghost node by linear extrapolation: both differences collapse
      left[a] = right[a] = (f.values[c + s] - f.values[c]) * inv;
    } else if (i == ax.n - 1) {
      left[a] = right[a] = (f.values[c] - f.values[c - s]) * inv;
    } else {
      left[a] = (f.values[c] - f.values[c - s]) * inv;
      right[a] = (f.values[c + s] - f.values[c]) * inv;
    }
  }
  return {std::move(left), std::move(right)};
}

std::vector<Field> node_gradients(const Field& f) {
  const Grid& g = *f.grid;
  const int d = g.dim();
  std::vector<Field> out;
  out.reserve(d);
  for (int a = 0; a < d; ++a) out.emplace_back(f.grid);
  int midx[kMaxDim] = {0};
  for (std::int64_t c = 0; c < g.size(); ++c) {
    for (int a = 0; a < d; ++a) out[a].values[c] = central_diff(f, midx, a);
    for (int a = d - 1; a >= 0; --a) {  // row-major counter, last axis fastest
      if (++midx[a] < g.axis(a).n) break;
      midx[a] = 0;
    }
  }
  return out;
}

bool all_finite(const Field& f) { return f.values.allFinite(); }

}  // namespace sgil::grid
