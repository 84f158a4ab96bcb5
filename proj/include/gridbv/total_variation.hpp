#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/grid.hpp"
#include "gridbv/pdhg.hpp"

namespace gridbv {

/** Axis-aligned cell-index box, inclusive on both ends.  Open regions are
 * finite unions of these; indices may stick out of the grid (membership just
 * never holds there). */
struct CellBox {
  std::vector<int> lo, hi;

  bool contains(const std::vector<int>& mi) const {
    for (std::size_t k = 0; k < mi.size(); ++k)
      if (mi[k] < lo[k] || mi[k] > hi[k]) return false;
    return true;
  }
  CellBox dilated(int t) const {
    CellBox b = *this;
    for (std::size_t k = 0; k < b.lo.size(); ++k) {
      b.lo[k] -= t;
      b.hi[k] += t;
    }
    return b;
  }
};

struct OpenRegion {
  std::vector<CellBox> boxes;

  bool contains(const std::vector<int>& mi) const {
    for (const CellBox& b : boxes)
      if (b.contains(mi)) return true;
    return false;
  }
};

inline OpenRegion whole_grid(const GridMeasure& mu) {
  CellBox b;
  b.lo.assign(static_cast<std::size_t>(mu.dim()), 0);
  b.hi.resize(static_cast<std::size_t>(mu.dim()));
  for (int k = 0; k < mu.dim(); ++k) b.hi[static_cast<std::size_t>(k)] = mu.shape()[static_cast<std::size_t>(k)] - 1;
  return OpenRegion{{b}};
}

inline std::vector<char> region_mask(const GridMeasure& mu, const OpenRegion& region) {
  std::vector<char> mask(mu.size(), 0);
  for (int i = 0; i < static_cast<int>(mu.size()); ++i)
    if (region.contains(mu.unravel(i))) mask[static_cast<std::size_t>(i)] = 1;
  return mask;
}

/** Cells whose whole closed l-inf neighborhood of the given margin lies
 * inside the grid and inside the region.  Fields supported on this mask
 * cannot push flux across the region boundary, so a localized value is a
 * genuine restriction of the global problem. */
inline std::vector<char> eroded_mask(const GridMeasure& mu, const OpenRegion& region, int margin = 1) {
  std::vector<char> in = region_mask(mu, region);
  std::vector<char> mask(mu.size(), 0);
  const int d = mu.dim();
  std::vector<int> off(static_cast<std::size_t>(d), -margin);
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    if (!in[static_cast<std::size_t>(i)]) continue;
    std::vector<int> mi = mu.unravel(i);
    std::fill(off.begin(), off.end(), -margin);
    bool ok = true;
    while (ok) {
      std::vector<int> nb(static_cast<std::size_t>(d));
      bool ingrid = true;
      for (int k = 0; k < d; ++k) {
        nb[static_cast<std::size_t>(k)] = mi[static_cast<std::size_t>(k)] + off[static_cast<std::size_t>(k)];
        if (nb[static_cast<std::size_t>(k)] < 0 ||
            nb[static_cast<std::size_t>(k)] >= mu.shape()[static_cast<std::size_t>(k)])
          ingrid = false;
      }
      if (!ingrid || !in[static_cast<std::size_t>(mu.ravel(nb))]) {
        ok = false;
        break;
      }
      int k = d - 1;
      while (k >= 0 && off[static_cast<std::size_t>(k)] == margin) off[static_cast<std::size_t>(k--)] = -margin;
      if (k < 0) break;
      ++off[static_cast<std::size_t>(k)];
    }
    mask[static_cast<std::size_t>(i)] = ok ? 1 : 0;
  }
  return mask;
}

struct TVReport {
  std::string formulation;  // "dual", "relax_lip", "relax_smooth", "derivation"
  double value = 0.0;
  bool converged = true;
  int iterations = 0;
  double gap = 0.0;
  std::vector<double> schedule;  // divergence bounds M or mollifier widths eps
  std::vector<double> trace;     // value per schedule entry
};

struct DualTVOptions {
  double gap_tol = 1e-6;
  int max_iter = 100000;
  int check_every = 250;
};

inline std::vector<double> default_M_schedule() { return {1, 2, 4, 8, 16, 32, 64}; }
inline std::vector<double> default_eps_schedule(double h) { return {4 * h, 3 * h, 2 * h}; }

namespace detail {

inline TVReport run_dual(const GridFunction& f, std::vector<char> mask,
                         const std::vector<double>& M_schedule, const DualTVOptions& opts) {
  DualWorkspace ws(f, std::move(mask));
  TVReport rep;
  rep.formulation = "dual";
  rep.schedule = M_schedule;
  for (double M : M_schedule) {
    DualWorkspace::Options o;
    o.M = M;
    o.gap_tol = opts.gap_tol;
    o.max_iter = opts.max_iter;
    o.check_every = opts.check_every;
    DualWorkspace::Result r = ws.solve(o);
    rep.trace.push_back(r.value);
    rep.value = r.value;
    rep.gap = r.gap;
    rep.iterations += r.iterations;
    // Each stage carries its own primal-dual certificate, valid regardless of
    // the warm start, so only the final stage speaks for the reported value.
    rep.converged = r.converged;
  }
  return rep;
}

}  // namespace detail

inline TVReport tv_dual(const GridFunction& f, double M, const DualTVOptions& opts = {}) {
  std::vector<char> all(f.mu->size(), 1);
  return detail::run_dual(f, std::move(all), {M}, opts);
}

/** Warm-started sweep over increasing divergence bounds (empty: the default
 * schedule); the trace is non-decreasing up to solver tolerance and the last
 * entry is the value. */
inline TVReport tv_dual_sweep(const GridFunction& f, const std::vector<double>& M_schedule,
                              const DualTVOptions& opts = {}) {
  std::vector<char> all(f.mu->size(), 1);
  return detail::run_dual(f, std::move(all), M_schedule.empty() ? default_M_schedule() : M_schedule, opts);
}

enum class RelaxMode { Lip, Smooth };

/** Mollify-then-integrate relaxations.  The schedule should decrease toward
 * h (empty: the default one); the reported value is the entry at the
 * sharpest width.  When a region is given the integrand is summed over cells
 * of the region only. */
inline TVReport tv_relaxed(const GridFunction& f, RelaxMode mode,
                           const std::vector<double>& eps_schedule = {},
                           const std::optional<OpenRegion>& region = std::nullopt) {
  const GridMeasure& mu = *f.mu;
  std::vector<char> mask(mu.size(), 1);
  if (region) mask = region_mask(mu, *region);
  TVReport rep;
  rep.formulation = mode == RelaxMode::Lip ? "relax_lip" : "relax_smooth";
  rep.schedule = eps_schedule.empty() ? default_eps_schedule(mu.spacing()) : eps_schedule;
  for (double eps : rep.schedule) {
    GridFunction fe = mollify(f, eps);
    double total = 0.0;
    if (mode == RelaxMode::Lip) {
      GridFunction lip = asymptotic_lipschitz(fe);
      for (int i : mu.support())
        if (mask[static_cast<std::size_t>(i)]) total += mu.mass(i) * lip[i];
    } else {
      GridVectorField g = grid_gradient(fe);
      for (int i : mu.support())
        if (mask[static_cast<std::size_t>(i)]) total += mu.mass(i) * g.norm(i);
    }
    rep.trace.push_back(total);
    rep.value = total;
  }
  return rep;
}

/** TV of f seen only through fields compactly supported in the region.
 * Cells at distance < 1 from the region boundary (or the grid edge) carry
 * no field components. */
inline TVReport tv_localized(const GridFunction& f, const OpenRegion& region, double M,
                             const DualTVOptions& opts = {}) {
  const GridMeasure& mu = *f.mu;
  std::vector<char> mask = eroded_mask(mu, region);
  bool any = false;
  for (int i : mu.support()) any = any || mask[static_cast<std::size_t>(i)];
  if (!any) throw Error(Err::EmptyRegion, "tv_localized: no active support cell in region");
  TVReport rep = detail::run_dual(f, std::move(mask), {M}, opts);
  return rep;
}

/** Localized TV on a shrinking family of dilations of one box, outermost
 * first.  Monotone in the region, so the trace decreases to the box value. */
inline TVReport tv_measure_on_box(const GridFunction& f, const CellBox& box, double M, int steps = 3,
                                  const DualTVOptions& opts = {}) {
  TVReport rep;
  rep.formulation = "dual";
  for (int t = steps; t >= 0; --t) {
    TVReport one = tv_localized(f, OpenRegion{{box.dilated(t)}}, M, opts);
    rep.schedule.push_back(static_cast<double>(t));
    rep.trace.push_back(one.value);
    rep.value = one.value;
    rep.gap = one.gap;
    rep.iterations += one.iterations;
    rep.converged = rep.converged && one.converged;
  }
  return rep;
}

struct MembershipReport {
  bool in_bv = false;
  double value = 0.0;  // saturated TV when in_bv, last trace entry otherwise
  TVReport report;
};

/** f has bounded variation when the divergence sweep saturates: the last
 * increment is small relative to the value.  Unbounded variation shows up
 * as a trace that keeps growing with M. */
inline MembershipReport bv_membership(const GridFunction& f, const std::vector<double>& M_schedule,
                                      double stab_tol = 0.01, const DualTVOptions& opts = {}) {
  if (M_schedule.size() < 2)
    throw Error(Err::MalformedSpec, "bv_membership: need at least two divergence bounds");
  TVReport rep = tv_dual_sweep(f, M_schedule, opts);
  MembershipReport out;
  const double last = rep.trace.back();
  const double prev = rep.trace[rep.trace.size() - 2];
  out.in_bv = (last - prev) <= stab_tol * (1.0 + std::abs(last));
  out.value = last;
  out.report = std::move(rep);
  return out;
}

}  // namespace gridbv
