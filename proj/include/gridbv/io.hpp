#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridbv/calculus.hpp"
#include "gridbv/grid.hpp"
#include "gridbv/sobolev.hpp"
#include "gridbv/superposition.hpp"
#include "gridbv/tangent.hpp"
#include "gridbv/total_variation.hpp"

namespace gridbv {

using json = nlohmann::json;

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Err::MalformedSpec, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Err::MalformedSpec, "malformed JSON in " + path);
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Err::MalformedSpec, "cannot write " + path);
  out << content;
}

namespace detail {

inline std::vector<double> builtin_weights(const json& expr, const std::vector<int>& shape) {
  std::size_t total = 1;
  for (int s : shape) total *= static_cast<std::size_t>(s);
  const int d = static_cast<int>(shape.size());
  auto ravel = [&](const std::vector<int>& mi) {
    std::size_t idx = 0;
    for (int k = 0; k < d; ++k) idx = idx * static_cast<std::size_t>(shape[static_cast<std::size_t>(k)]) +
                                      static_cast<std::size_t>(mi[static_cast<std::size_t>(k)]);
    return idx;
  };
  const std::string name = expr.at("name").get<std::string>();
  std::vector<double> w(total, 0.0);
  if (name == "uniform") {
    std::fill(w.begin(), w.end(), expr.value("weight", 1.0));
  } else if (name == "strip") {
    // all cells whose coordinate along `axis` equals `index`
    const int axis = expr.at("axis").get<int>();
    const int index = expr.at("index").get<int>();
    const double wt = expr.value("weight", 1.0);
    std::vector<int> mi(static_cast<std::size_t>(d), 0);
    for (std::size_t i = 0; i < total; ++i) {
      if (mi[static_cast<std::size_t>(axis)] == index) w[ravel(mi)] = wt;
      int k = d - 1;
      while (k >= 0 && ++mi[static_cast<std::size_t>(k)] == shape[static_cast<std::size_t>(k)])
        mi[static_cast<std::size_t>(k--)] = 0;
    }
  } else if (name == "segment") {
    // run along `axis` from `from` to `to`, remaining coordinates in `at`
    const int axis = expr.at("axis").get<int>();
    const int from = expr.at("from").get<int>();
    const int to = expr.at("to").get<int>();
    const double wt = expr.value("weight", 1.0);
    std::vector<int> at = expr.at("at").get<std::vector<int>>();
    std::vector<int> mi(static_cast<std::size_t>(d));
    for (int pos = from; pos <= to; ++pos) {
      std::size_t a = 0;
      for (int k = 0; k < d; ++k)
        mi[static_cast<std::size_t>(k)] = k == axis ? pos : at[a++];
      w[ravel(mi)] = wt;
    }
  } else if (name == "atoms") {
    const double wt = expr.value("weight", 1.0);
    for (const auto& cell : expr.at("cells")) {
      std::vector<int> mi = cell.get<std::vector<int>>();
      w[ravel(mi)] = wt;
    }
  } else {
    throw Error(Err::MalformedSpec, "unknown weight_expr: " + name);
  }
  return w;
}

}  // namespace detail

inline MeasurePtr load_measure(const json& doc) {
  if (!doc.is_object()) throw Error(Err::MalformedSpec, "measure document must be an object");
  std::vector<int> shape = doc.at("shape").get<std::vector<int>>();
  if (doc.contains("dim") && doc.at("dim").get<int>() != static_cast<int>(shape.size()))
    throw Error(Err::MalformedSpec, "measure: dim does not match shape");
  const double spacing = doc.at("spacing").get<double>();
  std::vector<double> origin(shape.size(), 0.0);
  if (doc.contains("origin")) origin = doc.at("origin").get<std::vector<double>>();
  std::vector<double> weights;
  if (doc.contains("weights"))
    weights = doc.at("weights").get<std::vector<double>>();
  else if (doc.contains("weight_expr"))
    weights = detail::builtin_weights(doc.at("weight_expr"), shape);
  else
    throw Error(Err::MalformedSpec, "measure: need weights or weight_expr");
  return std::make_shared<GridMeasure>(shape, spacing, origin, weights);
}

inline GridFunction load_function(const json& doc, const MeasurePtr& mu) {
  GridFunction f(mu);
  if (doc.contains("values")) {
    std::vector<double> v = doc.at("values").get<std::vector<double>>();
    if (v.size() != mu->size()) throw Error(Err::MalformedSpec, "function: wrong value count");
    f.values = std::move(v);
    return f;
  }
  if (!doc.contains("expr")) throw Error(Err::MalformedSpec, "function: need values or expr");
  const json& e = doc.at("expr");
  const std::string name = e.at("name").get<std::string>();
  if (name == "coordinate") {
    const int axis = e.at("axis").get<int>();
    for (int i = 0; i < static_cast<int>(mu->size()); ++i)
      f.values[static_cast<std::size_t>(i)] = mu->center(i, axis);
  } else if (name == "indicator_halfspace") {
    const int axis = e.at("axis").get<int>();
    const double t = e.at("threshold").get<double>();
    for (int i = 0; i < static_cast<int>(mu->size()); ++i)
      f.values[static_cast<std::size_t>(i)] = mu->center(i, axis) >= t ? 1.0 : 0.0;
  } else if (name == "gaussian_bump") {
    std::vector<double> c = e.at("center").get<std::vector<double>>();
    const double width = e.at("width").get<double>();
    for (int i = 0; i < static_cast<int>(mu->size()); ++i) {
      double r2 = 0.0;
      for (int k = 0; k < mu->dim(); ++k) {
        const double t = mu->center(i, k) - c[static_cast<std::size_t>(k)];
        r2 += t * t;
      }
      f.values[static_cast<std::size_t>(i)] = std::exp(-r2 / (2.0 * width * width));
    }
  } else {
    throw Error(Err::MalformedSpec, "unknown function expr: " + name);
  }
  return f;
}

inline json measure_to_json(const GridMeasure& mu) {
  json doc;
  doc["dim"] = mu.dim();
  doc["shape"] = mu.shape();
  doc["spacing"] = mu.spacing();
  doc["origin"] = mu.origin();
  doc["weights"] = mu.weights();
  return doc;
}

// CSV floats are printed with %.17g: round-trip exact and byte-stable
inline std::string csv_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string cell_csv(const GridMeasure& mu, const GridFunction* f = nullptr,
                            const GridVectorField* v = nullptr,
                            const DivergenceResult* divres = nullptr) {
  std::ostringstream out;
  out << "index";
  for (int k = 0; k < mu.dim(); ++k) out << ",center" << k;
  out << ",w";
  if (f) out << ",f";
  if (v)
    for (int k = 0; k < mu.dim(); ++k) out << ",v" << k + 1;
  if (divres) out << ",div,residual";
  out << "\n";
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    out << i;
    for (int k = 0; k < mu.dim(); ++k) out << "," << csv_num(mu.center(i, k));
    out << "," << csv_num(mu.weight(i));
    if (f) out << "," << csv_num((*f)[i]);
    if (v)
      for (int k = 0; k < mu.dim(); ++k) out << "," << csv_num(v->at(i, k));
    if (divres) out << "," << csv_num(divres->div[i]) << "," << csv_num(divres->tangency_residual);
    out << "\n";
  }
  return out.str();
}

inline std::string fibers_csv(const FiberField& fib) {
  const GridMeasure& mu = *fib.mu;
  const int d = mu.dim();
  std::ostringstream out;
  out << "index,rank";
  for (int j = 0; j < d; ++j) out << ",sigma_" << j + 1;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) out << ",b" << r + 1 << c + 1;
  out << "\n";
  for (int i = 0; i < static_cast<int>(mu.size()); ++i) {
    out << i << "," << fib.rank[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) out << "," << csv_num(fib.sigma[static_cast<std::size_t>(i * d + j)]);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) out << "," << csv_num(fib.basis[static_cast<std::size_t>((i * d + c) * d + r)]);
    out << "\n";
  }
  return out.str();
}

inline std::string slope_csv(const SlopeEstimate& est) {
  std::ostringstream out;
  out << "index,slope\n";
  for (int i = 0; i < static_cast<int>(est.slope.mu->size()); ++i)
    out << i << "," << csv_num(est.slope[i]) << "\n";
  return out.str();
}

inline json curves_json(const Superposition& sp) {
  json arr = json::array();
  for (const CurvePiece& p : sp.pieces) {
    json c;
    c["kind"] = p.kind == CurveKind::Path ? "PATH" : "CYCLE";
    c["weight"] = p.weight;
    c["nodes"] = p.nodes;
    c["length"] = p.length(*sp.mu);
    arr.push_back(c);
  }
  return arr;
}

inline json tv_report_json(const TVReport& rep) {
  json j;
  j["formulation"] = rep.formulation;
  j["value"] = rep.value;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["trace"] = rep.trace;
  if (rep.formulation == "relax_lip" || rep.formulation == "relax_smooth") {
    j["eps_schedule"] = rep.schedule;
  } else {
    j["M_schedule"] = rep.schedule;
    j["gap"] = rep.gap;
  }
  return j;
}

inline json slope_report_json(const SlopeEstimate& est) {
  json j;
  j["integral"] = est.integral;
  j["stabilized"] = est.stabilized;
  j["stages_used"] = est.stages_used;
  j["eps_schedule"] = est.eps_used;
  j["integral_trace"] = est.integral_trace;
  j["cauchy_trace"] = est.cauchy_trace;
  return j;
}

}  // namespace gridbv
