#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridbv {

enum class Err {
  MalformedSpec,
  NegativeWeight,
  ZeroTotalMass,
  EpsTooSmall,
  RadiusTooSmall,
  SolverDiverged,
  EmptyRegion,
  NotAdmissible,
  Inconsistent,
  NotStabilized,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

/** Weighted uniform grid over an axis-aligned box.
 *
 * Cell (i_1,...,i_d) has center origin + (i + 1/2) h and carries weight
 * w_i >= 0; its measure is w_i h^d.  Weights equal to zero are exact and
 * mark cells outside the support.  Linear indices are row-major in axis
 * order (axis 0 slowest). */
class GridMeasure {
 public:
  GridMeasure(std::vector<int> shape, double spacing, std::vector<double> origin,
              std::vector<double> weights)
      : shape_(std::move(shape)), h_(spacing), origin_(std::move(origin)),
        w_(std::move(weights)) {
    if (shape_.empty() || h_ <= 0.0 || origin_.size() != shape_.size())
      throw Error(Err::MalformedSpec, "grid: bad shape/spacing/origin");
    std::size_t n = 1;
    for (int s : shape_) {
      if (s <= 0) throw Error(Err::MalformedSpec, "grid: nonpositive extent");
      n *= static_cast<std::size_t>(s);
    }
    if (w_.size() != n) throw Error(Err::MalformedSpec, "grid: weight count != cell count");
    for (double w : w_)
      if (w < 0.0 || !std::isfinite(w)) throw Error(Err::NegativeWeight, "grid: negative weight");

    strides_.assign(shape_.size(), 1);
    for (int k = static_cast<int>(shape_.size()) - 2; k >= 0; --k)
      strides_[k] = strides_[k + 1] * shape_[k + 1];

    cell_volume_ = std::pow(h_, static_cast<double>(shape_.size()));
    total_mass_ = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (w_[i] > 0.0) support_.push_back(static_cast<int>(i));
      total_mass_ += w_[i] * cell_volume_;
    }
    if (total_mass_ <= 0.0) throw Error(Err::ZeroTotalMass, "grid: zero total mass");
  }

  int dim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  double spacing() const { return h_; }
  const std::vector<double>& origin() const { return origin_; }
  const std::vector<double>& weights() const { return w_; }
  std::size_t size() const { return w_.size(); }
  double cell_volume() const { return cell_volume_; }
  double total_mass() const { return total_mass_; }

  double weight(int i) const { return w_[static_cast<std::size_t>(i)]; }
  /** Cell measure w_i h^d. */
  double mass(int i) const { return w_[static_cast<std::size_t>(i)] * cell_volume_; }
  bool in_support(int i) const { return w_[static_cast<std::size_t>(i)] > 0.0; }
  /** Linear indices of cells with w_i > 0, ascending. */
  const std::vector<int>& support() const { return support_; }

  int ravel(const std::vector<int>& mi) const {
    int i = 0;
    for (int k = 0; k < dim(); ++k) i += mi[static_cast<std::size_t>(k)] * strides_[static_cast<std::size_t>(k)];
    return i;
  }
  std::vector<int> unravel(int i) const {
    std::vector<int> mi(static_cast<std::size_t>(dim()));
    for (int k = 0; k < dim(); ++k) {
      mi[static_cast<std::size_t>(k)] = i / strides_[static_cast<std::size_t>(k)];
      i %= strides_[static_cast<std::size_t>(k)];
    }
    return mi;
  }
  int coord(int i, int k) const {
    return (i / strides_[static_cast<std::size_t>(k)]) % shape_[static_cast<std::size_t>(k)];
  }
  /** Linear index of i + e_k, or -1 past the grid. */
  int forward(int i, int k) const {
    return coord(i, k) + 1 < shape_[static_cast<std::size_t>(k)] ? i + strides_[static_cast<std::size_t>(k)] : -1;
  }
  int backward(int i, int k) const {
    return coord(i, k) > 0 ? i - strides_[static_cast<std::size_t>(k)] : -1;
  }

  std::vector<double> center(int i) const {
    std::vector<double> x(static_cast<std::size_t>(dim()));
    for (int k = 0; k < dim(); ++k)
      x[static_cast<std::size_t>(k)] = origin_[static_cast<std::size_t>(k)] + (coord(i, k) + 0.5) * h_;
    return x;
  }
  double center(int i, int k) const {
    return origin_[static_cast<std::size_t>(k)] + (coord(i, k) + 0.5) * h_;
  }

 private:
  std::vector<int> shape_;
  double h_;
  std::vector<double> origin_;
  std::vector<double> w_;
  std::vector<int> strides_;
  std::vector<int> support_;
  double cell_volume_ = 0.0;
  double total_mass_ = 0.0;
};

using MeasurePtr = std::shared_ptr<const GridMeasure>;

/** Scalar samples on every cell of a grid. */
struct GridFunction {
  MeasurePtr mu;
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(MeasurePtr m, double fill = 0.0)
      : mu(std::move(m)), values(mu->size(), fill) {}
  GridFunction(MeasurePtr m, std::vector<double> v) : mu(std::move(m)), values(std::move(v)) {
    if (values.size() != mu->size())
      throw Error(Err::MalformedSpec, "function: value count != cell count");
  }

  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
};

enum class FieldDomain { SupportOnly, AllCells };

/** d components per cell, stored cell-major.  A SupportOnly field is
 * meaningful (stored, compared, normed) only where w_i > 0. */
struct GridVectorField {
  MeasurePtr mu;
  FieldDomain domain = FieldDomain::SupportOnly;
  std::vector<double> comp;  // size() * dim(), cell-major

  GridVectorField() = default;
  GridVectorField(MeasurePtr m, FieldDomain dom)
      : mu(std::move(m)), domain(dom), comp(mu->size() * static_cast<std::size_t>(mu->dim()), 0.0) {}

  double at(int i, int k) const {
    return comp[static_cast<std::size_t>(i) * static_cast<std::size_t>(mu->dim()) + static_cast<std::size_t>(k)];
  }
  double& at(int i, int k) {
    return comp[static_cast<std::size_t>(i) * static_cast<std::size_t>(mu->dim()) + static_cast<std::size_t>(k)];
  }
  /** Euclidean norm of the cell vector. */
  double norm(int i) const {
    double s = 0.0;
    for (int k = 0; k < mu->dim(); ++k) s += at(i, k) * at(i, k);
    return std::sqrt(s);
  }
};

/** Lattice offsets o with |o| h <= radius, negation-symmetric, containing 0.
 * Offsets are stored flat (count x dim) in lexicographic order. */
struct BallStencil {
  double radius = 0.0;
  int dim = 0;
  std::vector<int> offsets;  // count * dim

  int count() const { return static_cast<int>(offsets.size()) / dim; }
  const int* offset(int a) const { return offsets.data() + static_cast<std::size_t>(a) * static_cast<std::size_t>(dim); }
};

inline BallStencil make_ball_stencil(const GridMeasure& mu, double radius) {
  BallStencil st;
  st.radius = radius;
  st.dim = mu.dim();
  const double h = mu.spacing();
  const int reach = static_cast<int>(std::floor(radius / h + 1e-12));
  const double r2 = (radius / h) * (radius / h) * (1.0 + 1e-12);
  std::vector<int> o(static_cast<std::size_t>(st.dim), -reach);
  for (;;) {
    double n2 = 0.0;
    for (int v : o) n2 += static_cast<double>(v) * v;
    if (n2 <= r2)
      st.offsets.insert(st.offsets.end(), o.begin(), o.end());
    int k = st.dim - 1;
    for (; k >= 0; --k) {
      if (++o[static_cast<std::size_t>(k)] <= reach) break;
      o[static_cast<std::size_t>(k)] = -reach;
    }
    if (k < 0) break;
  }
  return st;
}

/** integral of |f| d(mu): sum_i |f_i| w_i h^d. */
inline double l1_norm(const GridFunction& f) {
  double s = 0.0;
  for (int i : f.mu->support()) s += std::abs(f[i]) * f.mu->mass(i);
  return s;
}

/** max_i |v(x_i)| (per-cell Euclidean norm) over {w_i > 0}. */
inline double sup_norm_on_support(const GridVectorField& v) {
  double s = 0.0;
  for (int i : v.mu->support()) s = std::max(s, v.norm(i));
  return s;
}

inline double sup_norm_on_support(const GridFunction& f) {
  double s = 0.0;
  for (int i : f.mu->support()) s = std::max(s, std::abs(f[i]));
  return s;
}

}  // namespace gridbv
