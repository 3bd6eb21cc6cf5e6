#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace sgil::grid {

// Hard cap on grid dimensionality; keeps query scratch on the stack.
inline constexpr int kMaxDim = 6;

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  int n = 3;
  bool periodic = false;

  // Periodic axes identify lo with hi, so the last node sits one spacing
  // short of hi.
  double spacing() const {
    return periodic ? (hi - lo) / n : (hi - lo) / (n - 1);
  }
  double node(int k) const { return lo + k * spacing(); }
};

// Rectilinear grid, row-major node layout with the last axis fastest.
class Grid {
 public:
  explicit Grid(std::vector<Axis> axes);

  int dim() const { return static_cast<int>(axes_.size()); }
  std::int64_t size() const { return size_; }
  const Axis& axis(int a) const { return axes_[a]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::int64_t stride(int a) const { return strides_[a]; }

  std::int64_t flat_index(const int* midx) const {
    std::int64_t f = 0;
    for (int a = 0; a < dim(); ++a) f += strides_[a] * midx[a];
    return f;
  }
  void multi_index(std::int64_t flat, int* midx) const {
    for (int a = 0; a < dim(); ++a) {
      midx[a] = static_cast<int>(flat / strides_[a]);
      flat %= strides_[a];
    }
  }

  // Wraps x onto the axis for periodic axes; returns x unchanged otherwise.
  double wrap(int a, double x) const;

 private:
  std::vector<Axis> axes_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr build_grid(std::vector<Axis> axes);

// Scalar samples over a grid. Immutable by convention once filled: every
// public operation leaves values finite.
struct Field {
  GridPtr grid;
  Eigen::ArrayXd values;

  Field() = default;
  Field(GridPtr g, Eigen::ArrayXd v) : grid(std::move(g)), values(std::move(v)) {}
  explicit Field(GridPtr g)
      : grid(std::move(g)), values(Eigen::ArrayXd::Zero(grid->size())) {}

  double at(const int* midx) const { return values[grid->flat_index(midx)]; }
};

struct Interp {
  double value = 0.0;
  bool clamped = false;  // a query coordinate fell outside a non-periodic axis
};

// Multilinear interpolation. Exact at nodes, continuous in range.
// interpolate() throws std::domain_error when x leaves a non-periodic axis;
// interpolate_clamped() clamps to the boundary and flags instead.
double interpolate(const Field& f, Eigen::Ref<const Eigen::VectorXd> x);
Interp interpolate_clamped(const Field& f, Eigen::Ref<const Eigen::VectorXd> x);

struct GradientResult {
  Eigen::VectorXd grad;
  bool clamped = false;
};

// Central differences at the surrounding nodes (one-sided on non-periodic
// boundaries), multilinearly interpolated to x.
Eigen::VectorXd gradient_at(const Field& f, Eigen::Ref<const Eigen::VectorXd> x);
GradientResult gradient_at_clamped(const Field& f,
                                   Eigen::Ref<const Eigen::VectorXd> x);

// First-order one-sided differences (left, right) along every axis at a
// node. Non-periodic boundaries use linear-extrapolation ghost nodes, so the
// one-sided pair degenerates to the interior difference there.
std::pair<Eigen::VectorXd, Eigen::VectorXd> upwind_derivatives(
    const Field& f, const int* midx);

// Precomputed per-node central-difference gradient, one Field per axis.
// gradient_at(f, x)[a] == interpolate(node_gradients(f)[a], x).
std::vector<Field> node_gradients(const Field& f);

bool all_finite(const Field& f);

}  // namespace sgil::grid
