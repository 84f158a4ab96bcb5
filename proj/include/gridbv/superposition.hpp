#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <utility>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/derivation.hpp"
#include "gridbv/grid.hpp"

namespace gridbv {

/** Directed cell-to-cell flux carried by a field: component k of the field
 * at cell i moves w_i h^{d-1} v_{i,k} across the face it shares with its
 * forward neighbor, oriented along the sign.  Node imbalance is
 * outflux - influx, which equals mass times mu-divergence cell by cell. */
struct FluxEdge {
  int from = 0, to = 0;
  int axis = 0;
  double weight = 0.0;  // > 0
};

struct FluxGraph {
  MeasurePtr mu;
  std::vector<FluxEdge> edges;
  std::vector<double> imbalance;  // per cell
  double total_flux = 0.0;
};

inline FluxGraph rasterize_flux(const GridVectorField& v, double tol = 1e-9) {
  const GridMeasure& mu = *v.mu;
  const int d = mu.dim();
  const double face = mu.cell_volume() / mu.spacing();  // h^{d-1}

  if (sup_norm_on_support(v) > 1.0 + tol)
    throw Error(Err::NotAdmissible, "rasterize_flux: field leaves the unit ball");

  FluxGraph g;
  g.mu = v.mu;
  g.imbalance.assign(mu.size(), 0.0);
  for (int i : mu.support()) {
    for (int k = 0; k < d; ++k) {
      int j = mu.forward(i, k);
      if (j < 0) continue;
      const double F = mu.weight(i) * face * v.at(i, k);
      if (F == 0.0) continue;
      FluxEdge e;
      e.axis = k;
      e.weight = std::abs(F);
      e.from = F > 0.0 ? i : j;
      e.to = F > 0.0 ? j : i;
      g.total_flux += e.weight;
      g.imbalance[static_cast<std::size_t>(e.from)] += e.weight;
      g.imbalance[static_cast<std::size_t>(e.to)] -= e.weight;
      g.edges.push_back(e);
    }
  }
  for (int i = 0; i < static_cast<int>(mu.size()); ++i)
    if (!mu.in_support(i) &&
        std::abs(g.imbalance[static_cast<std::size_t>(i)]) > tol * std::max(1.0, g.total_flux))
      throw Error(Err::NotAdmissible, "rasterize_flux: flux leaks onto zero-weight cells");
  return g;
}

enum class CurveKind { Path, Cycle };

struct CurvePiece {
  CurveKind kind = CurveKind::Path;
  std::vector<int> nodes;  // cell sequence; a cycle repeats its first node at the end
  double weight = 0.0;

  double length(const GridMeasure& mu) const {
    return mu.spacing() * static_cast<double>(nodes.size() - 1);
  }
};

struct Superposition {
  MeasurePtr mu;
  std::vector<CurvePiece> pieces;
  double undecomposed = 0.0;           // flux left below the dust threshold
  double conservation_residual = 0.0;  // sup over edges of |pieces + leftover - original|
};

namespace detail {

struct EdgeState {
  std::vector<FluxEdge> e;
  std::vector<std::vector<int>> out;  // edge ids per node, deterministic order

  explicit EdgeState(const FluxGraph& g, int n) : e(g.edges), out(static_cast<std::size_t>(n)) {
    std::vector<int> ids(e.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      const FluxEdge &ea = e[static_cast<std::size_t>(a)], &eb = e[static_cast<std::size_t>(b)];
      if (ea.to != eb.to) return ea.to < eb.to;
      return ea.axis < eb.axis;
    });
    for (int id : ids) out[static_cast<std::size_t>(e[static_cast<std::size_t>(id)].from)].push_back(id);
  }
};

/** Widest path from src to any node with deficit: maximize the minimum edge
 * weight along the way.  Ties go to the lower node index so runs are
 * reproducible. */
inline bool widest_path(const EdgeState& es, const std::vector<double>& surplus, int src,
                        double dust, std::vector<int>& path_edges) {
  const int n = static_cast<int>(es.out.size());
  std::vector<double> width(static_cast<std::size_t>(n), 0.0);
  std::vector<int> via(static_cast<std::size_t>(n), -1);
  width[static_cast<std::size_t>(src)] = std::numeric_limits<double>::infinity();
  std::priority_queue<std::pair<double, int>> pq;
  pq.push({width[static_cast<std::size_t>(src)], -src});
  while (!pq.empty()) {
    auto [w, negu] = pq.top();
    pq.pop();
    const int u = -negu;
    if (w < width[static_cast<std::size_t>(u)]) continue;
    if (u != src && surplus[static_cast<std::size_t>(u)] < -dust) {
      path_edges.clear();
      for (int cur = u; cur != src;) {
        const int id = via[static_cast<std::size_t>(cur)];
        path_edges.push_back(id);
        cur = es.e[static_cast<std::size_t>(id)].from;
      }
      std::reverse(path_edges.begin(), path_edges.end());
      return true;
    }
    for (int id : es.out[static_cast<std::size_t>(u)]) {
      const FluxEdge& ed = es.e[static_cast<std::size_t>(id)];
      if (ed.weight <= dust) continue;
      const double cand = std::min(w, ed.weight);
      if (cand > width[static_cast<std::size_t>(ed.to)]) {
        width[static_cast<std::size_t>(ed.to)] = cand;
        via[static_cast<std::size_t>(ed.to)] = id;
        pq.push({cand, -ed.to});
      }
    }
  }
  return false;
}

}  // namespace detail

/** Path/cycle form of a flux graph by greedy extraction.  Paths run from
 * surplus nodes to deficit nodes and carry the full bottleneck, so every
 * extraction retires an edge or an endpoint imbalance; once no imbalance is
 * left the remainder is a circulation and comes out as cycles.  Residual
 * flux below min_weight is abandoned and reported, not decomposed. */
inline Superposition decompose(const FluxGraph& g, double min_weight = -1.0) {
  const GridMeasure& mu = *g.mu;
  const int n = static_cast<int>(mu.size());
  if (min_weight < 0.0) min_weight = 1e-12 * g.total_flux;
  const double dust = std::max(min_weight, 1e-15 * std::max(g.total_flux, 1.0));

  double net = 0.0;
  for (double s : g.imbalance) net += s;
  if (std::abs(net) > dust)
    throw Error(Err::Inconsistent, "decompose: node imbalances do not cancel");

  detail::EdgeState es(g, n);
  std::vector<double> surplus = g.imbalance;
  Superposition sp;
  sp.mu = g.mu;

  for (int src = 0; src < n; ++src) {
    while (surplus[static_cast<std::size_t>(src)] > dust) {
      std::vector<int> path;
      if (!detail::widest_path(es, surplus, src, dust, path)) break;
      double lam = surplus[static_cast<std::size_t>(src)];
      const int dst = es.e[static_cast<std::size_t>(path.back())].to;
      lam = std::min(lam, -surplus[static_cast<std::size_t>(dst)]);
      for (int id : path) lam = std::min(lam, es.e[static_cast<std::size_t>(id)].weight);
      if (lam <= dust) break;

      CurvePiece piece;
      piece.kind = CurveKind::Path;
      piece.weight = lam;
      piece.nodes.push_back(src);
      for (int id : path) {
        double& w = es.e[static_cast<std::size_t>(id)].weight;
        w -= lam;
        if (w <= dust) w = 0.0;
        piece.nodes.push_back(es.e[static_cast<std::size_t>(id)].to);
      }
      surplus[static_cast<std::size_t>(src)] -= lam;
      surplus[static_cast<std::size_t>(dst)] += lam;
      if (std::abs(surplus[static_cast<std::size_t>(src)]) <= dust) surplus[static_cast<std::size_t>(src)] = 0.0;
      if (std::abs(surplus[static_cast<std::size_t>(dst)]) <= dust) surplus[static_cast<std::size_t>(dst)] = 0.0;
      sp.pieces.push_back(std::move(piece));
    }
  }

  // cycle phase: walk the lexicographically first live out-edge until a
  // node repeats; zero imbalance keeps the walk moving
  for (int start = 0; start < n; ++start) {
    for (;;) {
      bool live = false;
      for (int id : es.out[static_cast<std::size_t>(start)])
        live = live || es.e[static_cast<std::size_t>(id)].weight > dust;
      if (!live) break;

      std::vector<int> walk;
      std::vector<int> seen_at(static_cast<std::size_t>(n), -1);
      int cur = start;
      seen_at[static_cast<std::size_t>(cur)] = 0;
      int loop_from = -1;
      while (loop_from < 0) {
        int next_id = -1;
        for (int id : es.out[static_cast<std::size_t>(cur)])
          if (es.e[static_cast<std::size_t>(id)].weight > dust) {
            next_id = id;
            break;
          }
        if (next_id < 0) break;  // dust dead end
        walk.push_back(next_id);
        cur = es.e[static_cast<std::size_t>(next_id)].to;
        if (seen_at[static_cast<std::size_t>(cur)] >= 0)
          loop_from = seen_at[static_cast<std::size_t>(cur)];
        else
          seen_at[static_cast<std::size_t>(cur)] = static_cast<int>(walk.size());
      }
      if (loop_from < 0) break;

      std::vector<int> cyc(walk.begin() + loop_from, walk.end());
      double lam = std::numeric_limits<double>::infinity();
      for (int id : cyc) lam = std::min(lam, es.e[static_cast<std::size_t>(id)].weight);
      CurvePiece piece;
      piece.kind = CurveKind::Cycle;
      piece.weight = lam;
      piece.nodes.push_back(es.e[static_cast<std::size_t>(cyc.front())].from);
      for (int id : cyc) {
        double& w = es.e[static_cast<std::size_t>(id)].weight;
        w -= lam;
        if (w <= dust) w = 0.0;
        piece.nodes.push_back(es.e[static_cast<std::size_t>(id)].to);
      }
      sp.pieces.push_back(std::move(piece));
    }
  }

  // conservation: pieces plus leftover must rebuild the graph edge by edge
  std::map<std::pair<int, int>, double> rebuilt;
  for (const CurvePiece& p : sp.pieces)
    for (std::size_t s = 0; s + 1 < p.nodes.size(); ++s)
      rebuilt[{p.nodes[s], p.nodes[s + 1]}] += p.weight;
  for (std::size_t i = 0; i < es.e.size(); ++i) {
    sp.undecomposed += es.e[i].weight;
    rebuilt[{es.e[i].from, es.e[i].to}] += es.e[i].weight;
  }
  for (const FluxEdge& e : g.edges) {
    auto it = rebuilt.find({e.from, e.to});
    const double got = it == rebuilt.end() ? 0.0 : it->second;
    sp.conservation_residual = std::max(sp.conservation_residual, std::abs(got - e.weight));
    if (it != rebuilt.end()) rebuilt.erase(it);
  }
  for (const auto& kv : rebuilt)
    sp.conservation_residual = std::max(sp.conservation_residual, std::abs(kv.second));
  return sp;
}

struct MarginalReport {
  double err1 = 0.0;  // pairing marginal, max over dictionary pairs
  double err2 = 0.0;  // speed/mass marginal, max over dictionary pairs
};

/** The two sides the curve decomposition must reproduce, evaluated for each
 * dictionary pair (g, f).  Curve integrals are exact for piecewise-linear
 * interpolation along segments at constant speed: a segment from cell A to
 * cell B contributes (g_A+g_B)/2 (f_B-f_A) to the pairing side and
 * h (g_A+g_B)/2 to the speed side.  The field sides integrate g b(f) and
 * g |b| against mu; the modulus of a field derivation is its cellwise
 * Euclidean length. */
inline MarginalReport verify_marginals(const Superposition& sp, const Derivation& b,
                                       const std::vector<std::pair<GridFunction, GridFunction>>& test_dict) {
  const GridMeasure& mu = *sp.mu;
  const GridVectorField& v = b.action_field();
  MarginalReport rep;
  for (const auto& [g, f] : test_dict) {
    double field1 = 0.0, field2 = 0.0;
    GridFunction bf = apply(b, f);
    for (int i : mu.support()) {
      field1 += mu.mass(i) * g[i] * bf[i];
      field2 += mu.mass(i) * g[i] * v.norm(i);
    }
    double curve1 = 0.0, curve2 = 0.0;
    for (const CurvePiece& p : sp.pieces) {
      for (std::size_t s = 0; s + 1 < p.nodes.size(); ++s) {
        const int a = p.nodes[s], bnode = p.nodes[s + 1];
        const double gm = 0.5 * (g[a] + g[bnode]);
        curve1 += p.weight * gm * (f[bnode] - f[a]);
        curve2 += p.weight * gm * mu.spacing();
      }
    }
    rep.err1 = std::max(rep.err1, std::abs(field1 - curve1));
    rep.err2 = std::max(rep.err2, std::abs(field2 - curve2));
  }
  return rep;
}

}  // namespace gridbv
