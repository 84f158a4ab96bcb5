#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/grid.hpp"

namespace gridbv {

/** Map from support-cell dofs (d per support cell, cell-major) to the
 * adjoint flux on zero-weight cells.  Its null space is the set of fields
 * with exact tangency; project() lands there up to solver precision. */
class TangencyProjector {
 public:
  explicit TangencyProjector(MeasurePtr mu) : mu_(std::move(mu)) {
    const GridMeasure& g = *mu_;
    sdof_.assign(g.size(), -1);
    for (std::size_t s = 0; s < g.support().size(); ++s)
      sdof_[static_cast<std::size_t>(g.support()[s])] = static_cast<int>(s) * g.dim();

    std::vector<Eigen::Triplet<double>> trip;
    const double inv_h = 1.0 / g.spacing();
    int rows = 0;
    for (int i : g.support()) {
      for (int k = 0; k < g.dim(); ++k) {
        int j = g.forward(i, k);
        if (j < 0 || g.in_support(j)) continue;
        auto ins = row_of_null_.emplace(j, rows);
        if (ins.second) {
          ++rows;
          null_rows_.push_back(j);
        }
        trip.emplace_back(ins.first->second, sdof_[static_cast<std::size_t>(i)] + k,
                          g.mass(i) * inv_h);
      }
    }
    C_.resize(rows, static_cast<int>(g.support().size()) * g.dim());
    C_.setFromTriplets(trip.begin(), trip.end());
    if (rows > 0) {
      CCt_ = (C_ * Eigen::SparseMatrix<double>(C_.transpose())).pruned();
      cg_.setTolerance(1e-15);
      cg_.setMaxIterations(4 * rows + 200);
      cg_.compute(CCt_);
    }
  }

  int rows() const { return static_cast<int>(C_.rows()); }
  const Eigen::SparseMatrix<double>& matrix() const { return C_; }
  /** Linear indices of the zero-weight cells that receive flux. */
  const std::vector<int>& constrained_cells() const { return null_rows_; }

  /** Orthogonal projection of support dofs onto {C x = 0}. */
  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    if (C_.rows() == 0) return x;
    Eigen::VectorXd out = x;
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd r = C_ * out;
      if (r.lpNorm<Eigen::Infinity>() == 0.0) break;
      out -= C_.transpose() * cg_.solve(r);
    }
    return out;
  }

  void project(GridVectorField& v) const {
    Eigen::VectorXd x = pack(v);
    unpack(project(x), v);
  }

  Eigen::VectorXd pack(const GridVectorField& v) const {
    const GridMeasure& g = *mu_;
    Eigen::VectorXd x(static_cast<int>(g.support().size()) * g.dim());
    for (std::size_t s = 0; s < g.support().size(); ++s)
      for (int k = 0; k < g.dim(); ++k)
        x[static_cast<int>(s) * g.dim() + k] = v.at(g.support()[s], k);
    return x;
  }
  void unpack(const Eigen::VectorXd& x, GridVectorField& v) const {
    const GridMeasure& g = *mu_;
    std::fill(v.comp.begin(), v.comp.end(), 0.0);
    for (std::size_t s = 0; s < g.support().size(); ++s)
      for (int k = 0; k < g.dim(); ++k)
        v.at(g.support()[s], k) = x[static_cast<int>(s) * g.dim() + k];
  }

 private:
  MeasurePtr mu_;
  std::vector<int> sdof_;
  std::map<int, int> row_of_null_;
  std::vector<int> null_rows_;
  Eigen::SparseMatrix<double> C_;
  Eigen::SparseMatrix<double> CCt_;
  mutable Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg_;
};

struct FamilyMember {
  GridVectorField field;
  int direction = 0;     // axis of the target e_k
  int center = 0;        // linear index of the bump center
  double div_bound = 0;  // attained max |div_mu|
};

struct GeneratingFamily {
  MeasurePtr mu;
  std::vector<FamilyMember> members;
};

struct FamilyConfig {
  double lambda = 1.0;       // weight of the divergence penalty
  int stride = 4;            // bump-center lattice stride, in cells
  double bump_radius = 3.0;  // bump radius, in cells
  double tol = 1e-9;
};

/** Localized admissible fields spanning the measure's tangent directions.
 *
 * For each axis e_k and each bump center on a coarse lattice, solves the
 * sparse least-squares problem
 *    min ||adjoint flux on {w=0}||^2 + lambda ||div_mu v||^2_{L2(mu)}
 *        + ||v - eta e_k||^2_{L2(mu)},
 * then projects the solution onto the exact tangency null space and rescales
 * it to sup-norm <= 1.  Where the measure leaves a direction free the member
 * keeps the bump; where flux cannot balance, the constraint kills it. */
inline GeneratingFamily generate_family(MeasurePtr mu, const FamilyConfig& cfg = {}) {
  const GridMeasure& g = *mu;
  const int d = g.dim();
  const int ns = static_cast<int>(g.support().size());
  const int dofs = ns * d;
  const double inv_h = 1.0 / g.spacing();

  std::vector<int> sdof(g.size(), -1);
  for (int s = 0; s < ns; ++s) sdof[static_cast<std::size_t>(g.support()[s])] = s * d;

  TangencyProjector proj(mu);

  // divergence rows scaled by sqrt(m_i) so their square sums the L2(mu) norm
  std::vector<Eigen::Triplet<double>> trip;
  for (int s = 0; s < ns; ++s) {
    const int i = g.support()[s];
    const double scale = std::sqrt(g.mass(i)) / g.mass(i);
    for (int k = 0; k < d; ++k) {
      int j = g.forward(i, k);
      if (j >= 0) trip.emplace_back(s, s * d + k, scale * g.mass(i) * inv_h);
      int b = g.backward(i, k);
      if (b >= 0 && g.in_support(b))
        trip.emplace_back(s, sdof[static_cast<std::size_t>(b)] + k, -scale * g.mass(b) * inv_h);
    }
  }
  Eigen::SparseMatrix<double> Dw(ns, dofs);
  Dw.setFromTriplets(trip.begin(), trip.end());

  Eigen::SparseMatrix<double> A =
      Eigen::SparseMatrix<double>(proj.matrix().transpose()) * proj.matrix();
  A += cfg.lambda * (Eigen::SparseMatrix<double>(Dw.transpose()) * Dw).eval();
  std::vector<Eigen::Triplet<double>> mass_trip;
  for (int s = 0; s < ns; ++s)
    for (int k = 0; k < d; ++k)
      mass_trip.emplace_back(s * d + k, s * d + k, g.mass(g.support()[s]));
  Eigen::SparseMatrix<double> Mass(dofs, dofs);
  Mass.setFromTriplets(mass_trip.begin(), mass_trip.end());
  A += Mass;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw Error(Err::SolverDiverged, "generate_family: normal equations not SPD");

  // bump centers on the stride lattice, dropped when the bump misses supp(mu)
  std::vector<int> centers;
  {
    std::vector<int> mi(static_cast<std::size_t>(d), 0);
    const int off = cfg.stride / 2;
    for (;;) {
      bool on_lattice = true;
      for (int k = 0; k < d; ++k)
        if (mi[static_cast<std::size_t>(k)] % cfg.stride != off % cfg.stride) on_lattice = false;
      if (on_lattice) centers.push_back(g.ravel(mi));
      int k = d - 1;
      for (; k >= 0; --k) {
        if (++mi[static_cast<std::size_t>(k)] < g.shape()[static_cast<std::size_t>(k)]) break;
        mi[static_cast<std::size_t>(k)] = 0;
      }
      if (k < 0) break;
    }
  }

  GeneratingFamily fam;
  fam.mu = mu;
  const double r2 = cfg.bump_radius * cfg.bump_radius;
  for (int c : centers) {
    // bump profile matches the mollifier: (1 - (r/R)^2)^3
    std::vector<double> eta(static_cast<std::size_t>(ns), 0.0);
    bool hits_support = false;
    for (int s = 0; s < ns; ++s) {
      const int i = g.support()[s];
      double dist2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double dk = static_cast<double>(g.coord(i, k) - g.coord(c, k));
        dist2 += dk * dk;
      }
      if (dist2 < r2) {
        const double t = 1.0 - dist2 / r2;
        eta[static_cast<std::size_t>(s)] = t * t * t;
        hits_support = true;
      }
    }
    if (!hits_support) continue;

    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dofs);
      for (int s = 0; s < ns; ++s)
        rhs[s * d + k] = g.mass(g.support()[s]) * eta[static_cast<std::size_t>(s)];
      Eigen::VectorXd x = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success)
        throw Error(Err::SolverDiverged, "generate_family: solve failed");
      x = proj.project(x);

      FamilyMember m;
      m.field = GridVectorField(mu, FieldDomain::SupportOnly);
      proj.unpack(x, m.field);
      const double sup = sup_norm_on_support(m.field);
      if (sup > 1.0)
        for (double& v : m.field.comp) v /= sup;
      DivergenceResult dr = mu_divergence(m.field);
      for (int i : g.support()) m.div_bound = std::max(m.div_bound, std::abs(dr.div[i]));
      m.direction = k;
      m.center = c;
      fam.members.push_back(std::move(m));
    }
  }
  return fam;
}

/** Per-cell orthonormal frames spanning the directions the admissible family
 * actually uses; rank cut at tau relative to the top singular value. */
struct FiberField {
  MeasurePtr mu;
  double tau = 1e-6;
  std::vector<int> rank;      // per cell, 0 off support
  std::vector<double> sigma;  // size() * dim(), non-increasing per cell
  std::vector<double> basis;  // size() * dim() * dim(), column-major per cell

  const double* column(int i, int j) const {
    const int d = mu->dim();
    return basis.data() + (static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(d);
  }
  /** Orthogonal projection of vec onto the fiber at cell i (in place). */
  void project(int i, double* vec) const {
    const int d = mu->dim();
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < rank[static_cast<std::size_t>(i)]; ++j) {
      const double* b = column(i, j);
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += b[k] * vec[k];
      for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(k)] += dot * b[k];
    }
    for (int k = 0; k < d; ++k) vec[k] = out[static_cast<std::size_t>(k)];
  }
};

/** Stacks the family values per cell and keeps the left singular frame.
 * Singular values come from the d x d Gram matrix; ranks use a relative
 * threshold so an exactly pinned direction stays rank-deficient. */
inline FiberField compute_fibers(const GeneratingFamily& fam, double tau = 1e-6) {
  const GridMeasure& g = *fam.mu;
  const int d = g.dim();
  FiberField fib;
  fib.mu = fam.mu;
  fib.tau = tau;
  fib.rank.assign(g.size(), 0);
  fib.sigma.assign(g.size() * static_cast<std::size_t>(d), 0.0);
  fib.basis.assign(g.size() * static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);

  Eigen::MatrixXd gram(d, d);
  for (int i : g.support()) {
    gram.setZero();
    for (const FamilyMember& m : fam.members)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) gram(a, b) += m.field.at(i, a) * m.field.at(i, b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    // eigenvalues ascending; emit descending
    int rank = 0;
    const double smax = std::sqrt(std::max(eig.eigenvalues()[d - 1], 0.0));
    for (int j = 0; j < d; ++j) {
      const double s = std::sqrt(std::max(eig.eigenvalues()[d - 1 - j], 0.0));
      fib.sigma[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = s;
      if (smax > 0.0 && s > tau * smax) ++rank;
    }
    fib.rank[static_cast<std::size_t>(i)] = rank;
    for (int j = 0; j < d; ++j) {
      double* col = fib.basis.data() +
                    (static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(d);
      for (int k = 0; k < d; ++k) col[k] = eig.eigenvectors()(k, d - 1 - j);
    }
  }
  return fib;
}

/** Projection of the grid gradient onto the measure's fibers; identically
 * zero at rank-0 cells (atoms see no tangential variation). */
inline GridVectorField tangential_gradient(const GridFunction& f, const FiberField& fib) {
  const GridMeasure& g = *f.mu;
  GridVectorField grad = grid_gradient(f);
  GridVectorField out(f.mu, FieldDomain::SupportOnly);
  std::vector<double> vec(static_cast<std::size_t>(g.dim()));
  for (int i : g.support()) {
    for (int k = 0; k < g.dim(); ++k) vec[static_cast<std::size_t>(k)] = grad.at(i, k);
    fib.project(i, vec.data());
    for (int k = 0; k < g.dim(); ++k) out.at(i, k) = vec[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace gridbv
