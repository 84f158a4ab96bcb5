#pragma once

#include <cmath>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/grid.hpp"
#include "gridbv/tangent.hpp"
#include "gridbv/total_variation.hpp"

namespace gridbv {

struct SlopeOptions {
  std::vector<double> eps_schedule;  // empty: {4h, 3h, 2h}
  int stages = 8;                    // averaging rounds before giving up
  double trace_tol = 0.01;
};

struct SlopeEstimate {
  GridFunction slope;                 // per-cell density, zero off support
  double integral = 0.0;              // its mu integral
  bool stabilized = false;
  int stages_used = 0;                // averaging rounds applied
  std::vector<double> eps_used;
  std::vector<double> integral_trace;  // per eps, before averaging
  std::vector<double> cauchy_trace;    // L1 distance of the last pair, per stage
};

namespace detail {

inline GridFunction zero_off_support(GridFunction f) {
  const GridMeasure& mu = *f.mu;
  for (int i = 0; i < static_cast<int>(mu.size()); ++i)
    if (!mu.in_support(i)) f.values[static_cast<std::size_t>(i)] = 0.0;
  return f;
}

inline double mu_integral(const GridFunction& f) {
  double s = 0.0;
  for (int i : f.mu->support()) s += f.mu->mass(i) * f[i];
  return s;
}

/** Mollification widths are swept toward h; if the per-width densities are
 * not yet Cauchy in L1(mu), smooth the sequence by averaging each entry
 * over the trailing half of its prefix and test again, a bounded number of
 * times.  Plain Cesaro smoothing keeps the limit when one exists. */
inline SlopeEstimate stabilize(std::vector<GridFunction> seq, const SlopeOptions& opts,
                               std::vector<double> eps_used) {
  SlopeEstimate est;
  est.eps_used = std::move(eps_used);
  for (const GridFunction& g : seq) est.integral_trace.push_back(mu_integral(g));

  for (int stage = 0; stage <= opts.stages; ++stage) {
    const GridFunction& a = seq[seq.size() - 2];
    const GridFunction& b = seq[seq.size() - 1];
    GridFunction diff = b;
    for (std::size_t i = 0; i < diff.values.size(); ++i) diff.values[i] -= a.values[i];
    const double dist = l1_norm(diff);
    est.cauchy_trace.push_back(dist);
    if (dist <= opts.trace_tol * (1.0 + l1_norm(b))) {
      est.slope = b;
      est.integral = mu_integral(b);
      est.stabilized = true;
      est.stages_used = stage;
      return est;
    }
    if (stage == opts.stages) break;
    std::vector<GridFunction> next;
    for (std::size_t n = 0; n < seq.size(); ++n) {
      const std::size_t from = n / 2;
      GridFunction avg = seq[from];
      for (std::size_t k = from + 1; k <= n; ++k)
        for (std::size_t i = 0; i < avg.values.size(); ++i) avg.values[i] += seq[k].values[i];
      const double inv = 1.0 / static_cast<double>(n - from + 1);
      for (double& x : avg.values) x *= inv;
      next.push_back(std::move(avg));
    }
    seq = std::move(next);
  }
  throw Error(Err::NotStabilized, "relaxed_slope: densities did not become Cauchy in L1");
}

}  // namespace detail

/** Relaxed slope density of f: asymptotic Lipschitz constant of mollified
 * copies, stabilized over a decreasing width schedule. */
inline SlopeEstimate relaxed_slope(const GridFunction& f, const SlopeOptions& opts = {}) {
  const GridMeasure& mu = *f.mu;
  std::vector<double> eps = opts.eps_schedule;
  if (eps.empty()) eps = default_eps_schedule(mu.spacing());
  if (eps.size() < 2) throw Error(Err::MalformedSpec, "relaxed_slope: need at least two widths");
  std::vector<GridFunction> seq;
  for (double e : eps) seq.push_back(detail::zero_off_support(asymptotic_lipschitz(mollify(f, e))));
  return detail::stabilize(std::move(seq), opts, std::move(eps));
}

/** Tangential variant: the gradient of each mollified copy is projected
 * onto the fibers before taking its length, so directions the measure
 * cannot see contribute nothing. */
inline SlopeEstimate relaxed_slope(const GridFunction& f, const FiberField& fibers,
                                   const SlopeOptions& opts = {}) {
  const GridMeasure& mu = *f.mu;
  std::vector<double> eps = opts.eps_schedule;
  if (eps.empty()) eps = default_eps_schedule(mu.spacing());
  if (eps.size() < 2) throw Error(Err::MalformedSpec, "relaxed_slope: need at least two widths");
  std::vector<GridFunction> seq;
  for (double e : eps) {
    GridVectorField tg = tangential_gradient(mollify(f, e), fibers);
    GridFunction g(f.mu);
    for (int i : mu.support()) g.values[static_cast<std::size_t>(i)] = tg.norm(i);
    seq.push_back(std::move(g));
  }
  return detail::stabilize(std::move(seq), opts, std::move(eps));
}

struct W11Report {
  double l1 = 0.0;
  double slope_integral = 0.0;
  double total = 0.0;
  SlopeEstimate estimate;
};

inline W11Report w11_norm(const GridFunction& f, const SlopeOptions& opts = {}) {
  W11Report rep;
  rep.l1 = l1_norm(f);
  rep.estimate = relaxed_slope(f, opts);
  rep.slope_integral = rep.estimate.integral;
  rep.total = rep.l1 + rep.slope_integral;
  return rep;
}

inline W11Report w11_norm(const GridFunction& f, const FiberField& fibers,
                          const SlopeOptions& opts = {}) {
  W11Report rep;
  rep.l1 = l1_norm(f);
  rep.estimate = relaxed_slope(f, fibers, opts);
  rep.slope_integral = rep.estimate.integral;
  rep.total = rep.l1 + rep.slope_integral;
  return rep;
}

struct InclusionReport {
  bool ok = false;
  double tv = 0.0;
  double slope_integral = 0.0;
  double tol = 0.0;
};

/** A function with integrable relaxed slope has bounded variation, and its
 * total variation is dominated by the slope integral.  On the grid the
 * comparison holds up to a resolution term proportional to h times the
 * Lipschitz constant of f. */
inline InclusionReport w11_inclusion_check(const GridFunction& f,
                                           const std::vector<double>& M_schedule = {},
                                           const SlopeOptions& opts = {}, double incl_tol = -1.0) {
  InclusionReport rep;
  std::vector<double> Ms = M_schedule.empty() ? default_M_schedule() : M_schedule;
  rep.tv = tv_dual_sweep(f, Ms).value;
  rep.slope_integral = relaxed_slope(f, opts).integral;
  if (incl_tol < 0.0) {
    double lip = 0.0;
    GridFunction a = asymptotic_lipschitz(f);
    for (int i = 0; i < static_cast<int>(f.mu->size()); ++i) lip = std::max(lip, a[i]);
    incl_tol = 10.0 * f.mu->spacing() * lip;
  }
  rep.tol = incl_tol;
  rep.ok = rep.tv <= rep.slope_integral + rep.tol;
  return rep;
}

}  // namespace gridbv
