#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCore>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/grid.hpp"

namespace gridbv {

/** State and operators for
 *    maximize  sum_i f_i div_mu(v)_i m_i
 *    over      |v_i| <= 1 on active cells, v == 0 elsewhere,
 *              adjoint flux == 0 on zero-weight cells,
 *              |div_mu(v)_i| <= M on the support.
 * Variables are the d components per active cell.  Constraint rows are
 * assembled once; M only moves the box on the divergence rows, so a sweep
 * over M reuses the workspace (and warm-starts from the previous solution).
 */
class DualWorkspace {
 public:
  DualWorkspace(const GridFunction& f, std::vector<char> active_mask)
      : mu_(f.mu), active_mask_(std::move(active_mask)) {
    const GridMeasure& g = *mu_;
    const int d = g.dim();
    const double inv_h = 1.0 / g.spacing();

    std::vector<int> var_of_cell(g.size(), -1);
    for (int i : g.support())
      if (active_mask_[static_cast<std::size_t>(i)]) {
        var_of_cell[static_cast<std::size_t>(i)] = static_cast<int>(cells_.size()) * d;
        cells_.push_back(i);
      }
    const int dofs = static_cast<int>(cells_.size()) * d;

    // objective: c . v  ==  sum f div_mu(v) dmu  ==  -sum m (Gf) . v
    GridVectorField gf = grid_gradient(f);
    c_.resize(dofs);
    for (std::size_t s = 0; s < cells_.size(); ++s) {
      const int i = cells_[s];
      for (int k = 0; k < d; ++k) c_[static_cast<int>(s) * d + k] = -g.mass(i) * gf.at(i, k);
    }

    // tangency rows (zero-weight cells fed by active cells), entries scaled O(1)
    std::vector<Eigen::Triplet<double>> tz;
    std::map<int, int> zrow;
    const double zscale = g.spacing() / g.cell_volume();
    for (std::size_t s = 0; s < cells_.size(); ++s) {
      const int i = cells_[s];
      for (int k = 0; k < d; ++k) {
        int j = g.forward(i, k);
        if (j < 0 || g.in_support(j)) continue;
        auto ins = zrow.emplace(j, static_cast<int>(zrow.size()));
        tz.emplace_back(ins.first->second, static_cast<int>(s) * d + k,
                        g.mass(i) * inv_h * zscale);
      }
    }
    KZ_.resize(static_cast<int>(zrow.size()), dofs);
    KZ_.setFromTriplets(tz.begin(), tz.end());

    // divergence rows at every support cell coupled to an active cell
    std::vector<Eigen::Triplet<double>> ts;
    std::vector<int> srows;
    for (int i : g.support()) {
      bool coupled = var_of_cell[static_cast<std::size_t>(i)] >= 0;
      for (int k = 0; k < d && !coupled; ++k) {
        int b = g.backward(i, k);
        coupled = b >= 0 && var_of_cell[static_cast<std::size_t>(b)] >= 0;
      }
      if (coupled) srows.push_back(i);
    }
    for (std::size_t r = 0; r < srows.size(); ++r) {
      const int i = srows[r];
      const double inv_mi = 1.0 / g.mass(i);
      for (int k = 0; k < d; ++k) {
        if (var_of_cell[static_cast<std::size_t>(i)] >= 0 && g.forward(i, k) >= 0)
          ts.emplace_back(static_cast<int>(r), var_of_cell[static_cast<std::size_t>(i)] + k,
                          g.mass(i) * inv_h * inv_mi);
        int b = g.backward(i, k);
        if (b >= 0 && var_of_cell[static_cast<std::size_t>(b)] >= 0)
          ts.emplace_back(static_cast<int>(r), var_of_cell[static_cast<std::size_t>(b)] + k,
                          -g.mass(b) * inv_h * inv_mi);
      }
    }
    KS_.resize(static_cast<int>(srows.size()), dofs);
    KS_.setFromTriplets(ts.begin(), ts.end());

    if (KZ_.rows() > 0) {
      CCt_ = (KZ_ * Eigen::SparseMatrix<double>(KZ_.transpose())).pruned();
      cg_.setTolerance(1e-15);
      cg_.setMaxIterations(4 * KZ_.rows() + 200);
      cg_.compute(CCt_);
    }

    norm_ = estimate_norm();
    v_ = Eigen::VectorXd::Zero(dofs);
    p_ = Eigen::VectorXd::Zero(KZ_.rows());
    q_ = Eigen::VectorXd::Zero(KS_.rows());
  }

  const std::vector<int>& cells() const { return cells_; }
  int dofs() const { return static_cast<int>(c_.size()); }

  struct Result {
    double value = 0.0;
    double gap = 0.0;
    int iterations = 0;
    bool converged = false;
  };

  struct Options {
    double M = 1.0;
    double gap_tol = 1e-6;  // converged when gap <= gap_tol * (1 + |value|)
    int max_iter = 100000;
    int check_every = 250;
    double rho = 1.8;  // over-relaxation
  };

  /** Over-relaxed primal-dual iteration.  The reported value is certified:
   * it is attained by an exactly admissible field (tangency projected, then
   * scaled into the norm and divergence boxes), and the gap bounds the
   * distance to the true supremum from above via the Lagrangian dual. */
  Result solve(const Options& opt) {
    const int d = mu_->dim();
    const double step = 0.95 / std::max(norm_, 1e-30);
    const double tau = step, sigma = step;

    Result res;
    best_value_ = -1e300;
    Eigen::VectorXd vp(dofs()), pp(KZ_.rows()), qp(KS_.rows());
    for (int it = 1; it <= opt.max_iter; ++it) {
      // v+ = Proj_B(v + tau (c - K^T y)),  y+ = prox(y + sigma K (2v+ - v))
      vp = v_ + tau * (c_ - KZ_.transpose() * p_ - KS_.transpose() * q_);
      project_balls(vp, d);
      Eigen::VectorXd ve = 2.0 * vp - v_;
      pp = p_ + sigma * (KZ_ * ve);
      qp = q_ + sigma * (KS_ * ve);
      shrink(qp, sigma * opt.M);

      v_ += opt.rho * (vp - v_);
      p_ += opt.rho * (pp - p_);
      q_ += opt.rho * (qp - q_);

      if (it % opt.check_every == 0 || it == opt.max_iter) {
        // retired components decay geometrically under over-relaxation;
        // park them at zero before they go subnormal and poison matvecs
        flush_tiny(v_);
        flush_tiny(p_);
        flush_tiny(q_);
        const double L = certified_value(opt.M);
        const double U = dual_bound(opt.M);
        res.value = best_value_;
        res.gap = U - best_value_;
        res.iterations = it;
        if (res.gap <= opt.gap_tol * (1.0 + std::abs(best_value_))) {
          res.converged = true;
          break;
        }
        (void)L;
      }
    }
    return res;
  }

  /** The admissible field behind the last certified value. */
  GridVectorField best_field() const {
    GridVectorField out(mu_, FieldDomain::SupportOnly);
    const int d = mu_->dim();
    for (std::size_t s = 0; s < cells_.size(); ++s)
      for (int k = 0; k < d; ++k) out.at(cells_[s], k) = best_v_[static_cast<int>(s) * d + k];
    return out;
  }

 private:
  static void flush_tiny(Eigen::VectorXd& x) {
    for (int i = 0; i < x.size(); ++i)
      if (std::abs(x[i]) < 1e-250) x[i] = 0.0;
  }
  static void shrink(Eigen::VectorXd& q, double t) {
    for (int i = 0; i < q.size(); ++i) {
      const double a = std::abs(q[i]) - t;
      q[i] = a > 0.0 ? (q[i] > 0.0 ? a : -a) : 0.0;
    }
  }
  void project_balls(Eigen::VectorXd& v, int d) const {
    for (int s = 0; s < static_cast<int>(cells_.size()); ++s) {
      double n2 = 0.0;
      for (int k = 0; k < d; ++k) n2 += v[s * d + k] * v[s * d + k];
      if (n2 > 1.0) {
        const double inv = 1.0 / std::sqrt(n2);
        for (int k = 0; k < d; ++k) v[s * d + k] *= inv;
      }
    }
  }

  Eigen::VectorXd project_tangent(const Eigen::VectorXd& x) const {
    if (KZ_.rows() == 0) return x;
    Eigen::VectorXd out = x;
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd r = KZ_ * out;
      if (r.lpNorm<Eigen::Infinity>() == 0.0) break;
      out -= KZ_.transpose() * cg_.solve(r);
    }
    return out;
  }

  double certified_value(double M) {
    Eigen::VectorXd w = project_tangent(v_);
    const int d = mu_->dim();
    double sup = 0.0;
    for (int s = 0; s < static_cast<int>(cells_.size()); ++s) {
      double n2 = 0.0;
      for (int k = 0; k < d; ++k) n2 += w[s * d + k] * w[s * d + k];
      sup = std::max(sup, n2);
    }
    if (sup > 1.0) w /= std::sqrt(sup);
    if (KS_.rows() > 0) {
      const double dmax = (KS_ * w).lpNorm<Eigen::Infinity>();
      if (dmax > M) w *= M / dmax;
    }
    const double L = c_.dot(w);
    if (L > best_value_) {
      best_value_ = L;
      best_v_ = w;
    }
    return L;
  }

  double dual_bound(double M) const {
    Eigen::VectorXd r = c_ - KZ_.transpose() * p_ - KS_.transpose() * q_;
    const int d = mu_->dim();
    double s1 = 0.0;
    for (int s = 0; s < static_cast<int>(cells_.size()); ++s) {
      double n2 = 0.0;
      for (int k = 0; k < d; ++k) n2 += r[s * d + k] * r[s * d + k];
      s1 += std::sqrt(n2);
    }
    return s1 + M * q_.lpNorm<1>();
  }

  double estimate_norm() const {
    if (dofs() == 0) return 1.0;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(dofs(), 1.0 / std::sqrt(static_cast<double>(dofs())));
    double lam = 1.0;
    for (int it = 0; it < 150; ++it) {
      Eigen::VectorXd y = KZ_.transpose() * (KZ_ * x) + KS_.transpose() * (KS_ * x);
      lam = y.norm();
      if (lam <= 0.0) return 1.0;
      x = y / lam;
    }
    return std::sqrt(lam) * 1.02;
  }

  MeasurePtr mu_;
  std::vector<char> active_mask_;
  std::vector<int> cells_;
  Eigen::VectorXd c_;
  Eigen::SparseMatrix<double> KZ_, KS_, CCt_;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg_;
  double norm_ = 1.0;
  Eigen::VectorXd v_, p_, q_;
  double best_value_ = -1e300;
  Eigen::VectorXd best_v_;
};

}  // namespace gridbv
