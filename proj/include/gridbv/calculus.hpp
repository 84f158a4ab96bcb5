#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gridbv/grid.hpp"

namespace gridbv {

/** Forward-difference gradient, (Gf)_{i,k} = (f_{i+e_k} - f_i)/h.
 * Rows at the upper boundary of axis k are zero, so a constant flux
 * telescopes to boundary terms only and the adjoint below stays exact. */
inline GridVectorField grid_gradient(const GridFunction& f) {
  const GridMeasure& mu = *f.mu;
  GridVectorField g(f.mu, FieldDomain::AllCells);
  const double inv_h = 1.0 / mu.spacing();
  for (int i = 0; i < static_cast<int>(mu.size()); ++i)
    for (int k = 0; k < mu.dim(); ++k) {
      int j = mu.forward(i, k);
      if (j >= 0) g.at(i, k) = (f[j] - f[i]) * inv_h;
    }
  return g;
}

/** Adjoint flux a = G^T (W v) with W = diag(w_i h^d), defined on all cells:
 * sum_i (G phi)_i . v_i w_i h^d = sum_j phi_j a_j for every phi.
 * Cell i sends m_i v_{i,k}/h across its forward face in axis k; components
 * at the upper boundary of an axis multiply a missing face and drop out. */
inline std::vector<double> adjoint_flux(const GridVectorField& v) {
  const GridMeasure& mu = *v.mu;
  std::vector<double> a(mu.size(), 0.0);
  const double inv_h = 1.0 / mu.spacing();
  for (int i : mu.support()) {
    const double mi = mu.mass(i);
    for (int k = 0; k < mu.dim(); ++k) {
      int j = mu.forward(i, k);
      if (j < 0) continue;
      const double flux = mi * v.at(i, k) * inv_h;
      a[static_cast<std::size_t>(j)] += flux;
      a[static_cast<std::size_t>(i)] -= flux;
    }
  }
  return a;
}

struct DivergenceResult {
  GridFunction div;          // on support; zero elsewhere
  double tangency_residual;  // max over {w_j = 0} of |a_j|
};

/** Negative weighted adjoint of grid_gradient:
 * sum (G phi) . v dmu = -sum phi div dmu for all phi supported in {w > 0}.
 * The leftover adjoint flux on zero-weight cells is the tangency residual:
 * it vanishes exactly when v is tangent to the measure. */
inline DivergenceResult mu_divergence(const GridVectorField& v) {
  const GridMeasure& mu = *v.mu;
  std::vector<double> a = adjoint_flux(v);
  DivergenceResult r{GridFunction(v.mu), 0.0};
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    if (mu.in_support(i))
      r.div[i] = -a[static_cast<std::size_t>(i)] / mu.mass(i);
    else
      r.tangency_residual = std::max(r.tangency_residual, std::abs(a[static_cast<std::size_t>(i)]));
  }
  return r;
}

struct AdmissibilityCertificate {
  bool admissible = false;
  double sup_norm = 0.0;
  double tangency_residual = 0.0;
  double max_divergence = 0.0;
};

/** v is a legal competitor for the dual total-variation problem at level M:
 * |v| <= 1 on the support, no flux leaks into zero-weight cells, and the
 * divergence is bounded by M. */
inline AdmissibilityCertificate is_admissible(const GridVectorField& v, double M,
                                              double tol = 1e-9) {
  AdmissibilityCertificate c;
  c.sup_norm = sup_norm_on_support(v);
  DivergenceResult d = mu_divergence(v);
  c.tangency_residual = d.tangency_residual;
  for (int i : v.mu->support()) c.max_divergence = std::max(c.max_divergence, std::abs(d.div[i]));
  c.admissible = c.sup_norm <= 1.0 + tol && c.tangency_residual <= tol &&
                 c.max_divergence <= M + tol;
  return c;
}

/** Discrete mollifier: taps rho(|o| h / eps) on the lattice ball |o| h <= eps
 * with rho(t) = (1 - t^2)^3 clamped at zero, normalized to sum 1. */
struct MollifierKernel {
  double eps = 0.0;
  BallStencil stencil;
  std::vector<double> taps;  // one per stencil offset, sum == 1
};

inline MollifierKernel make_mollifier(const GridMeasure& mu, double eps) {
  if (eps < mu.spacing()) throw Error(Err::EpsTooSmall, "mollify: eps < h");
  MollifierKernel ker;
  ker.eps = eps;
  ker.stencil = make_ball_stencil(mu, eps);
  const int n = ker.stencil.count();
  ker.taps.resize(static_cast<std::size_t>(n));
  const double h = mu.spacing();
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    const int* o = ker.stencil.offset(a);
    double r2 = 0.0;
    for (int k = 0; k < mu.dim(); ++k) r2 += static_cast<double>(o[k]) * o[k];
    double t2 = r2 * h * h / (eps * eps);
    double rho = t2 < 1.0 ? (1.0 - t2) * (1.0 - t2) * (1.0 - t2) : 0.0;
    ker.taps[static_cast<std::size_t>(a)] = rho;
    total += rho;
  }
  for (double& t : ker.taps) t /= total;
  return ker;
}

/** Convolution of f against the mollifier over Lebesgue cell volume (not mu).
 * Taps falling outside the grid are renormalized away per cell, so f == 1
 * stays 1; the support still grows by at most ceil(eps/h) cells. */
inline GridFunction mollify(const GridFunction& f, double eps) {
  const GridMeasure& mu = *f.mu;
  MollifierKernel ker = make_mollifier(mu, eps);
  GridFunction out(f.mu);
  const int n = ker.stencil.count();
  std::vector<int> mi(static_cast<std::size_t>(mu.dim()));
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    std::vector<int> base = mu.unravel(i);
    double acc = 0.0, z = 0.0;
    for (int a = 0; a < n; ++a) {
      const int* o = ker.stencil.offset(a);
      bool inside = true;
      for (int k = 0; k < mu.dim(); ++k) {
        mi[static_cast<std::size_t>(k)] = base[static_cast<std::size_t>(k)] + o[k];
        if (mi[static_cast<std::size_t>(k)] < 0 ||
            mi[static_cast<std::size_t>(k)] >= mu.shape()[static_cast<std::size_t>(k)]) {
          inside = false;
          break;
        }
      }
      if (!inside) continue;
      const double t = ker.taps[static_cast<std::size_t>(a)];
      acc += t * f[mu.ravel(mi)];
      z += t;
    }
    out[i] = z > 0.0 ? acc / z : 0.0;
  }
  return out;
}

/** Largest pairwise slope |f_y - f_z| / |y - z| over cells of the r-ball
 * around each cell (the ball is clipped at the grid boundary).  This is the
 * discrete Lip(f; B_r(x)); it is monotone in r by inclusion. */
inline GridFunction local_lipschitz(const GridFunction& f, double r) {
  const GridMeasure& mu = *f.mu;
  const double h = mu.spacing();
  if (r < h * std::sqrt(static_cast<double>(mu.dim())) * (1.0 - 1e-12))
    throw Error(Err::RadiusTooSmall, "local_lipschitz: r < h sqrt(d)");
  BallStencil st = make_ball_stencil(mu, r);
  const int n = st.count();
  GridFunction out(f.mu);
  std::vector<int> members;
  std::vector<int> mi(static_cast<std::size_t>(mu.dim()));
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    std::vector<int> base = mu.unravel(i);
    members.clear();
    for (int a = 0; a < n; ++a) {
      const int* o = st.offset(a);
      bool inside = true;
      for (int k = 0; k < mu.dim(); ++k) {
        mi[static_cast<std::size_t>(k)] = base[static_cast<std::size_t>(k)] + o[k];
        if (mi[static_cast<std::size_t>(k)] < 0 ||
            mi[static_cast<std::size_t>(k)] >= mu.shape()[static_cast<std::size_t>(k)]) {
          inside = false;
          break;
        }
      }
      if (inside) members.push_back(mu.ravel(mi));
    }
    double best = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const int y = members[a], z = members[b];
        double d2 = 0.0;
        for (int k = 0; k < mu.dim(); ++k) {
          const double dk = static_cast<double>(mu.coord(y, k) - mu.coord(z, k));
          d2 += dk * dk;
        }
        best = std::max(best, std::abs(f[y] - f[z]) / (std::sqrt(d2) * h));
      }
    out[i] = best;
  }
  return out;
}

/** Stand-in for lip_a f = lim_{r->0} Lip(f; B_r(x)): the local Lipschitz
 * constant at the smallest radius whose stencil couples all axes. */
inline GridFunction asymptotic_lipschitz(const GridFunction& f, double delta = 1e-9) {
  const GridMeasure& mu = *f.mu;
  const double r0 = mu.spacing() * std::sqrt(static_cast<double>(mu.dim())) * (1.0 + delta);
  return local_lipschitz(f, r0);
}

}  // namespace gridbv
