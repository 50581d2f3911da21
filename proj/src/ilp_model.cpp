#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "celltrack/ilp.hpp"

namespace celltrack {

double clamp_probability(double p, double eps) {
  if (std::isnan(p)) return eps;
  return std::clamp(p, eps, 1.0 - eps);
}

double log_odds(double p) { return std::log(p / (1.0 - p)); }

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::GapReached: return "gap_reached";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

namespace {

double checked_weight(double p, const char* what) {
  if (!std::isfinite(p) || p <= 0.0 || p >= 1.0)
    throw Error(ErrorCode::InvalidProbability, fmt::format("{} probability {} outside (0,1)", what, p));
  return log_odds(p);
}

}  // namespace

IPModel build_model(const TrackingGraph& graph, const EventProbabilities& probs, const ModelOptions& options) {
  const int n = static_cast<int>(graph.vertices.size());
  const int m = static_cast<int>(graph.migrations.size());
  if (static_cast<int>(probs.migration.size()) != m || static_cast<int>(probs.division.size()) != n)
    throw Error(ErrorCode::ConfigInvalid, "probability vectors do not match the graph");

  IPModel model;
  model.num_vertices = n;
  model.num_migrations = m;
  model.mode = options.mode;
  model.weights.resize(m + 3 * n);
  model.vars.resize(static_cast<std::size_t>(m + 3 * n));

  for (int e = 0; e < m; ++e) {
    const auto& edge = graph.migrations[static_cast<std::size_t>(e)];
    model.weights(e) = checked_weight(probs.migration[static_cast<std::size_t>(e)], "migration");
    model.vars[static_cast<std::size_t>(e)] = {VarKind::Migration, edge.from, edge.to,
                                               fmt::format("mig_{}_{}", edge.from, edge.to)};
  }
  const double w_app = checked_weight(probs.priors.rho_a, "appearance");
  const double w_dis = checked_weight(probs.priors.rho_d, "disappearance");
  const double w_fixed = options.mode == ModelMode::FixedDivision
                             ? checked_weight(options.fixed_division, "fixed division")
                             : 0.0;
  for (int v = 0; v < n; ++v) {
    const int frame = graph.vertices[static_cast<std::size_t>(v)].frame;
    const bool first = options.free_boundary && frame == 1;
    const bool last = options.free_boundary && frame == graph.frames;
    model.weights(model.appear_var(v)) = first ? 0.0 : w_app;
    model.weights(model.divide_var(v)) = options.mode == ModelMode::FixedDivision
                                             ? w_fixed
                                             : checked_weight(probs.division[static_cast<std::size_t>(v)], "division");
    model.weights(model.disappear_var(v)) = last ? 0.0 : w_dis;
    model.vars[static_cast<std::size_t>(model.appear_var(v))] = {VarKind::Appear, -1, v, fmt::format("app_{}", v)};
    model.vars[static_cast<std::size_t>(model.divide_var(v))] = {VarKind::Divide, -1, v, fmt::format("div_{}", v)};
    model.vars[static_cast<std::size_t>(model.disappear_var(v))] = {VarKind::Disappear, v, -1, fmt::format("dis_{}", v)};
  }

  std::vector<std::vector<int>> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (int e = 0; e < m; ++e) {
    in[static_cast<std::size_t>(graph.migrations[static_cast<std::size_t>(e)].to)].push_back(e);
    out[static_cast<std::size_t>(graph.migrations[static_cast<std::size_t>(e)].from)].push_back(e);
  }

  std::vector<Eigen::Triplet<double>> trip;
  int row = 0;
  for (int v = 0; v < n; ++v, ++row) {
    for (int e : in[static_cast<std::size_t>(v)]) trip.emplace_back(row, e, 1.0);
    trip.emplace_back(row, model.appear_var(v), 1.0);
    trip.emplace_back(row, model.divide_var(v), 1.0);
    for (int e : out[static_cast<std::size_t>(v)]) trip.emplace_back(row, e, -1.0);
    trip.emplace_back(row, model.disappear_var(v), -1.0);
    model.rows.push_back({RowKind::Conservation, v, RowSense::Equal, 0.0, fmt::format("cons_{}", v)});
  }
  for (int v = 0; v < n; ++v, ++row) {
    for (int e : in[static_cast<std::size_t>(v)]) trip.emplace_back(row, e, 1.0);
    trip.emplace_back(row, model.appear_var(v), 1.0);
    trip.emplace_back(row, model.divide_var(v), -1.0);
    model.rows.push_back({RowKind::DivisionPrerequisite, v, RowSense::GreaterEqual, 0.0, fmt::format("pre_{}", v)});
  }
  if (options.mode != ModelMode::NoConflict) {
    for (std::size_t l = 0; l < graph.exclusion_sets.size(); ++l, ++row) {
      for (int v : graph.exclusion_sets[l]) {
        for (int e : in[static_cast<std::size_t>(v)]) trip.emplace_back(row, e, 1.0);
        trip.emplace_back(row, model.appear_var(v), 1.0);
      }
      model.rows.push_back({RowKind::Exclusion, static_cast<int>(l), RowSense::LessEqual, 1.0, fmt::format("excl_{}", l)});
    }
  }
  model.A.resize(row, m + 3 * n);
  model.A.setFromTriplets(trip.begin(), trip.end());
  model.A.makeCompressed();
  return model;
}

double objective_value(const IPModel& model, const Eigen::VectorXd& x) { return model.weights.dot(x); }

Violations check_solution(const IPModel& model, const Eigen::VectorXd& x, double tol) {
  Violations v;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) < -tol || x(i) > 1 + tol) ++v.bounds;
  const Eigen::VectorXd act = model.A * x;
  for (int r = 0; r < model.num_rows(); ++r) {
    const auto& info = model.rows[static_cast<std::size_t>(r)];
    const double a = act(r);
    switch (info.kind) {
      case RowKind::Conservation:
        if (std::abs(a - info.rhs) > tol) ++v.conservation;
        break;
      case RowKind::DivisionPrerequisite:
        if (a < info.rhs - tol) ++v.prerequisite;
        break;
      case RowKind::Exclusion:
        if (a > info.rhs + tol) ++v.exclusion;
        break;
    }
  }
  return v;
}

namespace {

void append_term(std::string& line, std::string& out, int& terms, double coef, const std::string& name, bool first) {
  const char* sign = coef < 0 ? "-" : "+";
  const double mag = std::abs(coef);
  std::string term = first && coef >= 0 ? "" : fmt::format("{} ", sign);
  term += mag == 1.0 ? name : fmt::format("{} {}", mag, name);
  if (terms > 0 && terms % 8 == 0) {
    out += line + "\n";
    line = "  ";
  } else if (!first) {
    line += " ";
  }
  line += term;
  ++terms;
}

}  // namespace

std::string export_lp(const IPModel& model) {
  std::string out = "\\ celltrack flow model\nMaximize\n";
  std::string line = " obj: ";
  int terms = 0;
  for (int j = 0; j < model.num_vars(); ++j) {
    // Every variable is listed, including zero weights.
    const double w = model.weights(j);
    const std::string& name = model.vars[static_cast<std::size_t>(j)].name;
    const char* sign = std::signbit(w) && w != 0.0 ? "-" : "+";
    std::string term = (terms == 0 && *sign == '+') ? "" : fmt::format("{} ", sign);
    term += fmt::format("{} {}", std::abs(w), name);
    if (terms > 0 && terms % 8 == 0) {
      out += line + "\n";
      line = "  ";
    } else if (terms > 0) {
      line += " ";
    }
    line += term;
    ++terms;
  }
  if (terms == 0) line += "0";
  out += line + "\nSubject To\n";
  for (int r = 0; r < model.num_rows(); ++r) {
    const auto& info = model.rows[static_cast<std::size_t>(r)];
    line = fmt::format(" {}: ", info.name);
    terms = 0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, r); it; ++it) {
      if (it.value() == 0.0) continue;
      append_term(line, out, terms, it.value(), model.vars[static_cast<std::size_t>(it.col())].name, terms == 0);
    }
    if (terms == 0) line += "0 " + (model.vars.empty() ? std::string("x") : model.vars.front().name);
    const char* op = info.sense == RowSense::Equal ? "=" : info.sense == RowSense::GreaterEqual ? ">=" : "<=";
    out += fmt::format("{} {} {}\n", line, op, info.rhs);
  }
  out += "Binaries\n";
  line = " ";
  terms = 0;
  for (int j = 0; j < model.num_vars(); ++j) {
    if (terms > 0 && terms % 8 == 0) {
      out += line + "\n";
      line = " ";
    } else if (terms > 0) {
      line += " ";
    }
    line += model.vars[static_cast<std::size_t>(j)].name;
    ++terms;
  }
  if (terms > 0) out += line + "\n";
  out += "End\n";
  return out;
}

nlohmann::json to_json(const IPModel& model, const FlowSolution& solution) {
  nlohmann::json j;
  j["status"] = to_string(solution.status);
  j["objective"] = solution.objective;
  j["bound"] = solution.bound;
  j["gap"] = solution.gap;
  j["nodes"] = solution.nodes;
  auto& values = j["values"] = nlohmann::json::object();
  for (int k = 0; k < model.num_vars() && k < solution.values.size(); ++k) {
    const double v = solution.values(k);
    const auto& name = model.vars[static_cast<std::size_t>(k)].name;
    if (std::abs(v - std::round(v)) < 1e-12)
      values[name] = static_cast<int>(std::round(v));
    else
      values[name] = v;
  }
  return j;
}

}  // namespace celltrack
