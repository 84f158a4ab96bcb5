#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridbv/grid.hpp"

namespace gridbv {

/** Self-contained named test setups: a measure, a probe function whose
 * variation the four formulations are compared on, and (where the point of
 * the scenario is transport) a canonical admissible field.  Everything is
 * parameterized by the cells-per-side count so the same geometry exists at
 * coarse oracle sizes and at the working resolution. */
struct Scenario {
  std::string name;
  MeasurePtr mu;
  GridFunction f;
  std::optional<GridVectorField> field;
};

/** clamp((x_axis - a)/(b - a), 0, 1): the workhorse probe.  Flat collars on
 * both sides keep mollified copies honest near the domain boundary, and the
 * single slope makes every formulation's value elementary. */
inline GridFunction clamped_ramp(const MeasurePtr& mu, int axis, double a, double b) {
  GridFunction f(mu);
  for (int i = 0; i < static_cast<int>(mu->size()); ++i) {
    const double t = (mu->center(i, axis) - a) / (b - a);
    f.values[static_cast<std::size_t>(i)] = std::min(1.0, std::max(0.0, t));
  }
  return f;
}

namespace detail {

inline MeasurePtr square_measure(int n, const std::vector<double>& w) {
  return std::make_shared<GridMeasure>(std::vector<int>{n, n}, 1.0 / n,
                                       std::vector<double>{0.0, 0.0}, w);
}

inline std::vector<std::vector<int>> atom_cells(int n) {
  // interior at every size used; fixed in 1/32 units
  const std::vector<std::vector<int>> base = {{6, 7}, {12, 21}, {18, 9}, {25, 25}, {8, 28}};
  std::vector<std::vector<int>> out;
  for (const auto& c : base)
    out.push_back({c[0] * n / 32, std::min(c[1] * n / 32, n - 1)});
  return out;
}

inline bool in_unit_box(double x0, double x1, const double box[4]) {
  return x0 >= box[0] && x0 <= box[1] && x1 >= box[2] && x1 <= box[3];
}

}  // namespace detail

inline std::vector<std::string> scenario_names() {
  return {"uniform-square", "two-box",        "thin-strip", "thin-strip-soft",
          "atomic-cloud",   "atomic-cloud-soft", "plaquette", "1d-strip"};
}

/** The full-support five the formulation-equivalence suite runs on. */
inline std::vector<std::string> equivalence_scenario_names() {
  return {"uniform-square", "two-box", "plaquette", "thin-strip-soft", "atomic-cloud-soft"};
}

inline Scenario make_scenario(const std::string& name, int n = 32) {
  const double h = 1.0 / n;
  const double ramp_lo = 9.0 / 64.0, ramp_hi = 55.0 / 64.0;

  if (name == "1d-strip") {
    auto mu = std::make_shared<GridMeasure>(std::vector<int>{n}, h, std::vector<double>{0.0},
                                            std::vector<double>(static_cast<std::size_t>(n), 1.0));
    Scenario s{name, mu, GridFunction(mu), std::nullopt};
    for (int i = 0; i < n; ++i) s.f.values[static_cast<std::size_t>(i)] = mu->center(i, 0);
    GridVectorField v(mu, FieldDomain::SupportOnly);
    for (int i = 0; i + 1 < n; ++i) v.at(i, 0) = 1.0;
    s.field = std::move(v);
    return s;
  }

  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  std::vector<double> w(total, 1.0);

  if (name == "uniform-square") {
    auto mu = detail::square_measure(n, w);
    return {name, mu, clamped_ramp(mu, 1, ramp_lo, ramp_hi), std::nullopt};
  }

  if (name == "two-box") {
    // elevated weight on two separated blocks over a positive background
    static const double box1[4] = {0.1875, 0.4375, 0.15625, 0.40625};
    static const double box2[4] = {0.59375, 0.84375, 0.5625, 0.84375};
    auto mu0 = detail::square_measure(n, w);
    for (int i = 0; i < n * n; ++i) {
      const double x0 = mu0->center(i, 0), x1 = mu0->center(i, 1);
      if (detail::in_unit_box(x0, x1, box1) || detail::in_unit_box(x0, x1, box2))
        w[static_cast<std::size_t>(i)] = 5.0;
    }
    auto mu = detail::square_measure(n, w);
    return {name, mu, clamped_ramp(mu, 1, ramp_lo, ramp_hi), std::nullopt};
  }

  if (name == "thin-strip" || name == "thin-strip-soft") {
    const int row = n / 2;
    const bool soft = name == "thin-strip-soft";
    std::fill(w.begin(), w.end(), soft ? 0.2 : 0.0);
    for (int j = 0; j < n; ++j) w[static_cast<std::size_t>(row * n + j)] = 1.0;
    auto mu = detail::square_measure(n, w);
    Scenario s{name, mu, clamped_ramp(mu, 1, ramp_lo, ramp_hi), std::nullopt};
    if (!soft) {
      // unit flow along the strip wherever the forward in-strip neighbor exists
      GridVectorField v(mu, FieldDomain::SupportOnly);
      for (int j = 0; j + 1 < n; ++j) v.at(row * n + j, 1) = 1.0;
      s.field = std::move(v);
    }
    return s;
  }

  if (name == "atomic-cloud" || name == "atomic-cloud-soft") {
    const bool soft = name == "atomic-cloud-soft";
    std::fill(w.begin(), w.end(), soft ? 1.0 : 0.0);
    for (const auto& c : detail::atom_cells(n)) w[static_cast<std::size_t>(c[0] * n + c[1])] = 5.0;
    auto mu = detail::square_measure(n, w);
    return {name, mu, clamped_ramp(mu, 1, ramp_lo, ramp_hi), std::nullopt};
  }

  if (name == "plaquette") {
    auto mu = detail::square_measure(n, w);
    Scenario s{name, mu, clamped_ramp(mu, 0, ramp_lo, ramp_hi), std::nullopt};
    // unit-mass circulation around the four central cells
    const int c = n / 2 - 1;
    const double sq = 1.0 / std::sqrt(2.0);
    GridVectorField v(mu, FieldDomain::SupportOnly);
    v.at(c * n + c, 1) = sq;        // (c,c) -> (c,c+1)
    v.at(c * n + c, 0) = -sq;       // (c+1,c) -> (c,c)
    v.at(c * n + c + 1, 0) = sq;    // (c,c+1) -> (c+1,c+1)
    v.at((c + 1) * n + c, 1) = -sq; // (c+1,c+1) -> (c+1,c)
    s.field = std::move(v);
    return s;
  }

  throw Error(Err::MalformedSpec, "unknown scenario: " + name);
}

}  // namespace gridbv
