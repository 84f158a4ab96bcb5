#pragma once

// Independent dense reference implementations used only by tests.  Everything
// here is rebuilt from the defining formulas (forward differences, adjoint
// flux, per-cell ball and divergence constraints) with its own index
// arithmetic, so agreement with the library is a genuine two-route check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridbv/grid.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

/** Dense gradient / adjoint-flux / divergence matrices, assembled from the
 * definition with locally computed row-major strides. */
struct DenseOps {
  int n = 0, d = 0;
  double h = 0.0;
  std::vector<double> mass;  // w_i h^d
  Mat G;                     // (n*d) x n, zero rows at the upper boundary
  Mat A;                     // n x (n*d), a = A v for cell-major stacked v
  Mat Div;                   // n x (n*d), -A[i]/mass_i on support, zero rows off

  std::vector<double> gradient(const std::vector<double>& f) const { return mul(G, f); }
  std::vector<double> flux(const std::vector<double>& v) const { return mul(A, v); }
  std::vector<double> divergence(const std::vector<double>& v) const { return mul(Div, v); }

  static std::vector<double> mul(const Mat& M, const std::vector<double>& x) {
    std::vector<double> y(M.size(), 0.0);
    for (std::size_t r = 0; r < M.size(); ++r)
      for (std::size_t c = 0; c < x.size(); ++c) y[r] += M[r][c] * x[c];
    return y;
  }
};

inline DenseOps assemble(const gridbv::GridMeasure& mu) {
  DenseOps ops;
  const std::vector<int>& shape = mu.shape();
  ops.d = static_cast<int>(shape.size());
  ops.h = mu.spacing();
  std::vector<int> stride(static_cast<std::size_t>(ops.d), 1);
  for (int k = ops.d - 2; k >= 0; --k)
    stride[static_cast<std::size_t>(k)] = stride[static_cast<std::size_t>(k + 1)] * shape[static_cast<std::size_t>(k + 1)];
  ops.n = stride[0] * shape[0];

  const double vol = std::pow(ops.h, static_cast<double>(ops.d));
  ops.mass.resize(static_cast<std::size_t>(ops.n));
  for (int i = 0; i < ops.n; ++i) ops.mass[static_cast<std::size_t>(i)] = mu.weights()[static_cast<std::size_t>(i)] * vol;

  ops.G.assign(static_cast<std::size_t>(ops.n * ops.d), std::vector<double>(static_cast<std::size_t>(ops.n), 0.0));
  ops.A.assign(static_cast<std::size_t>(ops.n), std::vector<double>(static_cast<std::size_t>(ops.n * ops.d), 0.0));
  ops.Div = ops.A;

  for (int i = 0; i < ops.n; ++i)
    for (int k = 0; k < ops.d; ++k) {
      const int ck = (i / stride[static_cast<std::size_t>(k)]) % shape[static_cast<std::size_t>(k)];
      if (ck + 1 >= shape[static_cast<std::size_t>(k)]) continue;
      const int j = i + stride[static_cast<std::size_t>(k)];
      ops.G[static_cast<std::size_t>(i * ops.d + k)][static_cast<std::size_t>(j)] = 1.0 / ops.h;
      ops.G[static_cast<std::size_t>(i * ops.d + k)][static_cast<std::size_t>(i)] = -1.0 / ops.h;
      const double mi = ops.mass[static_cast<std::size_t>(i)];
      if (mi > 0.0) {
        ops.A[static_cast<std::size_t>(j)][static_cast<std::size_t>(i * ops.d + k)] += mi / ops.h;
        ops.A[static_cast<std::size_t>(i)][static_cast<std::size_t>(i * ops.d + k)] -= mi / ops.h;
      }
    }
  for (int i = 0; i < ops.n; ++i)
    if (ops.mass[static_cast<std::size_t>(i)] > 0.0)
      for (int c = 0; c < ops.n * ops.d; ++c)
        ops.Div[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
            -ops.A[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] / ops.mass[static_cast<std::size_t>(i)];
  return ops;
}

/** Dense tableau simplex for  max c.x  s.t.  A x <= b, x >= 0.  Two phases
 * with one artificial column; index tie-breaks on both pivot choices keep the
 * walk deterministic.  Returns -inf when infeasible, +inf when unbounded. */
struct Simplex {
  static constexpr double inf = std::numeric_limits<double>::infinity();
  static constexpr double eps = 1e-9;

  int m, n;
  std::vector<int> B, N;
  Mat D;
  long pivots = 0;

  Simplex(const Mat& A, const std::vector<double>& b, const std::vector<double>& c)
      : m(static_cast<int>(b.size())), n(static_cast<int>(c.size())),
        B(static_cast<std::size_t>(m)), N(static_cast<std::size_t>(n) + 1),
        D(static_cast<std::size_t>(m) + 2, std::vector<double>(static_cast<std::size_t>(n) + 2, 0.0)) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) D[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      B[static_cast<std::size_t>(i)] = n + i;
      D[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)] = -1.0;
      D[static_cast<std::size_t>(i)][static_cast<std::size_t>(n) + 1] = b[static_cast<std::size_t>(i)];
    }
    for (int j = 0; j < n; ++j) {
      N[static_cast<std::size_t>(j)] = j;
      D[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] = -c[static_cast<std::size_t>(j)];
    }
    N[static_cast<std::size_t>(n)] = -1;
    D[static_cast<std::size_t>(m) + 1][static_cast<std::size_t>(n)] = 1.0;
  }

  void pivot(int r, int s) {
    if (++pivots > 500000) throw std::runtime_error("simplex: pivot budget exhausted");
    std::vector<double>& a = D[static_cast<std::size_t>(r)];
    const double inv = 1.0 / a[static_cast<std::size_t>(s)];
    for (int i = 0; i < m + 2; ++i) {
      if (i == r || std::abs(D[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)]) <= eps) continue;
      std::vector<double>& row = D[static_cast<std::size_t>(i)];
      const double inv2 = row[static_cast<std::size_t>(s)] * inv;
      for (int j = 0; j < n + 2; ++j) row[static_cast<std::size_t>(j)] -= a[static_cast<std::size_t>(j)] * inv2;
      row[static_cast<std::size_t>(s)] = a[static_cast<std::size_t>(s)] * inv2;
    }
    for (int j = 0; j < n + 2; ++j)
      if (j != s) a[static_cast<std::size_t>(j)] *= inv;
    for (int i = 0; i < m + 2; ++i)
      if (i != r) D[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] *= -inv;
    a[static_cast<std::size_t>(s)] = inv;
    std::swap(B[static_cast<std::size_t>(r)], N[static_cast<std::size_t>(s)]);
  }

  bool run(int phase) {
    const int x = m + phase - 1;
    for (;;) {
      int s = -1;
      for (int j = 0; j <= n; ++j) {
        if (N[static_cast<std::size_t>(j)] == -phase) continue;
        if (s == -1 || std::make_pair(D[static_cast<std::size_t>(x)][static_cast<std::size_t>(j)], N[static_cast<std::size_t>(j)]) <
                           std::make_pair(D[static_cast<std::size_t>(x)][static_cast<std::size_t>(s)], N[static_cast<std::size_t>(s)]))
          s = j;
      }
      if (D[static_cast<std::size_t>(x)][static_cast<std::size_t>(s)] >= -eps) return true;
      int r = -1;
      for (int i = 0; i < m; ++i) {
        if (D[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] <= eps) continue;
        if (r == -1 ||
            std::make_pair(D[static_cast<std::size_t>(i)][static_cast<std::size_t>(n) + 1] / D[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)], B[static_cast<std::size_t>(i)]) <
                std::make_pair(D[static_cast<std::size_t>(r)][static_cast<std::size_t>(n) + 1] / D[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)], B[static_cast<std::size_t>(r)]))
          r = i;
      }
      if (r == -1) return false;
      pivot(r, s);
    }
  }

  double solve(std::vector<double>& x) {
    int r = 0;
    for (int i = 1; i < m; ++i)
      if (D[static_cast<std::size_t>(i)][static_cast<std::size_t>(n) + 1] < D[static_cast<std::size_t>(r)][static_cast<std::size_t>(n) + 1]) r = i;
    if (D[static_cast<std::size_t>(r)][static_cast<std::size_t>(n) + 1] < -eps) {
      pivot(r, n);
      if (!run(2) || D[static_cast<std::size_t>(m) + 1][static_cast<std::size_t>(n) + 1] < -eps) return -inf;
      for (int i = 0; i < m; ++i)
        if (B[static_cast<std::size_t>(i)] == -1) {
          int s = 0;
          for (int j = 1; j <= n; ++j)
            if (std::make_pair(D[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], N[static_cast<std::size_t>(j)]) <
                std::make_pair(D[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)], N[static_cast<std::size_t>(s)]))
              s = j;
          pivot(i, s);
        }
    }
    const bool ok = run(1);
    x.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < m; ++i)
      if (B[static_cast<std::size_t>(i)] < n) x[static_cast<std::size_t>(B[static_cast<std::size_t>(i)])] = D[static_cast<std::size_t>(i)][static_cast<std::size_t>(n) + 1];
    return ok ? D[static_cast<std::size_t>(m)][static_cast<std::size_t>(n) + 1] : inf;
  }
};

/** Reference value of the dual total-variation problem:
 *   max  sum_i m_i f_i div(v)_i   over  |v_i|_2 <= 1,  |div(v)| <= M on
 * support, zero adjoint flux on zero-weight cells.  Solved as a sequence of
 * LPs: free components split into positive parts and the per-cell Euclidean
 * balls approximated from outside by tangent cuts added at the violated
 * directions of the previous optimum.  The LP value decreases to the conic
 * value from above; iteration stops when the optimum is inside every ball. */
struct DualLPResult {
  double value = 0.0;            // LP value at the final cut set (upper side)
  double ball_violation = 0.0;   // max_i (|v_i| - 1) at the reported optimum
  int rounds = 0;
  std::vector<double> v;         // cell-major field over support dofs
};

inline DualLPResult dual_tv_lp(const gridbv::GridMeasure& mu, const std::vector<double>& f,
                               double M, double cut_tol = 1e-9, int max_rounds = 80) {
  const DenseOps ops = assemble(mu);
  const int d = ops.d;

  std::vector<int> cells;
  for (int i = 0; i < ops.n; ++i)
    if (ops.mass[static_cast<std::size_t>(i)] > 0.0) cells.push_back(i);
  const int nd = static_cast<int>(cells.size()) * d;

  // Objective over the support dofs; one column per dof of the dense rows.
  std::vector<double> cobj(static_cast<std::size_t>(nd), 0.0);
  std::vector<int> dof_col(static_cast<std::size_t>(ops.n * ops.d), -1);
  for (int s = 0; s < static_cast<int>(cells.size()); ++s)
    for (int k = 0; k < d; ++k) dof_col[static_cast<std::size_t>(cells[static_cast<std::size_t>(s)] * d + k)] = s * d + k;
  for (int i = 0; i < ops.n; ++i) {
    const double mf = ops.mass[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
    if (mf == 0.0) continue;
    for (int col = 0; col < ops.n * ops.d; ++col) {
      const int u = dof_col[static_cast<std::size_t>(col)];
      if (u >= 0) cobj[static_cast<std::size_t>(u)] += mf * ops.Div[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
    }
  }

  // Fixed rows: divergence box on support, flux equality (two inequalities)
  // on zero-weight cells that receive any flux.
  Mat rows;
  std::vector<double> rhs;
  auto add_row = [&](const std::vector<double>& r, double b) {
    double scale = 0.0;
    for (double x : r) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return;
    std::vector<double> rr(r);
    for (double& x : rr) x /= scale;
    rows.push_back(std::move(rr));
    rhs.push_back(b / scale);
  };
  for (int i : cells) {
    std::vector<double> r(static_cast<std::size_t>(nd), 0.0);
    for (int col = 0; col < ops.n * ops.d; ++col) {
      const int u = dof_col[static_cast<std::size_t>(col)];
      if (u >= 0) r[static_cast<std::size_t>(u)] = ops.Div[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
    }
    add_row(r, M);
    for (double& x : r) x = -x;
    add_row(r, M);
  }
  for (int j = 0; j < ops.n; ++j) {
    if (ops.mass[static_cast<std::size_t>(j)] > 0.0) continue;
    std::vector<double> r(static_cast<std::size_t>(nd), 0.0);
    bool any = false;
    for (int col = 0; col < ops.n * ops.d; ++col) {
      const int u = dof_col[static_cast<std::size_t>(col)];
      if (u >= 0 && ops.A[static_cast<std::size_t>(j)][static_cast<std::size_t>(col)] != 0.0) {
        r[static_cast<std::size_t>(u)] = ops.A[static_cast<std::size_t>(j)][static_cast<std::size_t>(col)];
        any = true;
      }
    }
    if (!any) continue;
    add_row(r, 0.0);
    for (double& x : r) x = -x;
    add_row(r, 0.0);
  }

  // Ball cuts, per support cell: dir . v_i <= 1.  Axis cuts to start.
  std::vector<std::pair<int, std::vector<double>>> cuts;
  for (int s = 0; s < static_cast<int>(cells.size()); ++s)
    for (int k = 0; k < d; ++k) {
      std::vector<double> dir(static_cast<std::size_t>(d), 0.0);
      dir[static_cast<std::size_t>(k)] = 1.0;
      cuts.emplace_back(s, dir);
      dir[static_cast<std::size_t>(k)] = -1.0;
      cuts.emplace_back(s, dir);
    }

  double obj_scale = 0.0;
  for (double x : cobj) obj_scale = std::max(obj_scale, std::abs(x));
  if (obj_scale == 0.0) obj_scale = 1.0;

  DualLPResult res;
  for (res.rounds = 1; res.rounds <= max_rounds; ++res.rounds) {
    const int base = static_cast<int>(rows.size());
    Mat A(rows);
    std::vector<double> b(rhs);
    A.resize(static_cast<std::size_t>(base) + cuts.size());
    b.resize(static_cast<std::size_t>(base) + cuts.size(), 1.0);
    for (std::size_t c = 0; c < cuts.size(); ++c) {
      std::vector<double> r(static_cast<std::size_t>(nd), 0.0);
      for (int k = 0; k < d; ++k) r[static_cast<std::size_t>(cuts[c].first * d + k)] = cuts[c].second[static_cast<std::size_t>(k)];
      A[static_cast<std::size_t>(base) + c] = std::move(r);
    }

    // Split u = p - q, p,q >= 0, and scale the objective to O(1).
    const int cols = 2 * nd;
    Mat As(A.size(), std::vector<double>(static_cast<std::size_t>(cols), 0.0));
    for (std::size_t r = 0; r < A.size(); ++r)
      for (int u = 0; u < nd; ++u) {
        As[r][static_cast<std::size_t>(u)] = A[r][static_cast<std::size_t>(u)];
        As[r][static_cast<std::size_t>(nd + u)] = -A[r][static_cast<std::size_t>(u)];
      }
    std::vector<double> cs(static_cast<std::size_t>(cols), 0.0);
    for (int u = 0; u < nd; ++u) {
      cs[static_cast<std::size_t>(u)] = cobj[static_cast<std::size_t>(u)] / obj_scale;
      cs[static_cast<std::size_t>(nd + u)] = -cobj[static_cast<std::size_t>(u)] / obj_scale;
    }

    Simplex lp(As, b, cs);
    std::vector<double> x;
    const double val = lp.solve(x);
    if (!std::isfinite(val)) throw std::runtime_error("dual_tv_lp: LP infeasible or unbounded");
    res.value = val * obj_scale;
    res.v.assign(static_cast<std::size_t>(nd), 0.0);
    for (int u = 0; u < nd; ++u) res.v[static_cast<std::size_t>(u)] = x[static_cast<std::size_t>(u)] - x[static_cast<std::size_t>(nd + u)];

    res.ball_violation = 0.0;
    bool added = false;
    for (int s = 0; s < static_cast<int>(cells.size()); ++s) {
      double norm2 = 0.0;
      for (int k = 0; k < d; ++k) norm2 += res.v[static_cast<std::size_t>(s * d + k)] * res.v[static_cast<std::size_t>(s * d + k)];
      const double norm = std::sqrt(norm2);
      res.ball_violation = std::max(res.ball_violation, norm - 1.0);
      if (norm > 1.0 + cut_tol) {
        std::vector<double> dir(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) dir[static_cast<std::size_t>(k)] = res.v[static_cast<std::size_t>(s * d + k)] / norm;
        cuts.emplace_back(s, std::move(dir));
        added = true;
      }
    }
    if (!added) return res;
  }
  throw std::runtime_error("dual_tv_lp: tangent cuts did not close");
}

/** Null space of the tangency constraints: the flux each zero-weight cell
 * receives, as rows over the support dofs.  Returns the kernel dimension and
 * an orthonormal basis (columns). */
struct KernelResult {
  int dofs = 0;
  int dim = 0;
  Eigen::MatrixXd basis;  // dofs x dim
};

inline KernelResult tangency_kernel(const gridbv::GridMeasure& mu) {
  const DenseOps ops = assemble(mu);
  const int d = ops.d;
  std::vector<int> cells;
  for (int i = 0; i < ops.n; ++i)
    if (ops.mass[static_cast<std::size_t>(i)] > 0.0) cells.push_back(i);
  const int nd = static_cast<int>(cells.size()) * d;

  std::vector<int> dof_col(static_cast<std::size_t>(ops.n * ops.d), -1);
  for (int s = 0; s < static_cast<int>(cells.size()); ++s)
    for (int k = 0; k < d; ++k) dof_col[static_cast<std::size_t>(cells[static_cast<std::size_t>(s)] * d + k)] = s * d + k;

  std::vector<std::vector<double>> trows;
  for (int j = 0; j < ops.n; ++j) {
    if (ops.mass[static_cast<std::size_t>(j)] > 0.0) continue;
    std::vector<double> r(static_cast<std::size_t>(nd), 0.0);
    bool any = false;
    for (int col = 0; col < ops.n * ops.d; ++col) {
      const int u = dof_col[static_cast<std::size_t>(col)];
      if (u >= 0 && ops.A[static_cast<std::size_t>(j)][static_cast<std::size_t>(col)] != 0.0) {
        r[static_cast<std::size_t>(u)] = ops.A[static_cast<std::size_t>(j)][static_cast<std::size_t>(col)];
        any = true;
      }
    }
    if (any) trows.push_back(std::move(r));
  }

  KernelResult out;
  out.dofs = nd;
  if (trows.empty()) {
    out.dim = nd;
    out.basis = Eigen::MatrixXd::Identity(nd, nd);
    return out;
  }
  Eigen::MatrixXd T(static_cast<Eigen::Index>(trows.size()), nd);
  for (std::size_t r = 0; r < trows.size(); ++r)
    for (int c = 0; c < nd; ++c) T(static_cast<Eigen::Index>(r), c) = trows[r][static_cast<std::size_t>(c)];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(T);
  lu.setThreshold(1e-10);
  Eigen::MatrixXd ker = lu.kernel();
  // FullPivLU reports a single zero column for a trivial kernel.
  if (ker.cols() == 1 && ker.col(0).norm() == 0.0) {
    out.dim = 0;
    out.basis.resize(nd, 0);
    return out;
  }
  out.dim = static_cast<int>(ker.cols());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ker);
  out.basis = qr.householderQ() * Eigen::MatrixXd::Identity(nd, out.dim);
  return out;
}

}  // namespace oracle
