#pragma once

// Binary flow program over a TrackingGraph and the solvers for it.
//
// Variable layout: migration edges first (index = edge index), then three
// variables per vertex v: appear (s->v) at M+3v, divide (d->v) at M+3v+1,
// disappear (v->t) at M+3v+2. Row layout: one conservation row per vertex,
// one division-prerequisite row per vertex, then one exclusion row per set.

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "celltrack/graph.hpp"

namespace celltrack {

inline constexpr double kProbabilityEpsilon = 1e-4;

/// Clamps into [eps, 1-eps]; NaN maps to eps.
double clamp_probability(double p, double eps = kProbabilityEpsilon);

/// log(p / (1 - p)).
double log_odds(double p);

struct EventPriors {
  double rho_a = 0.01;  // appearance
  double rho_d = 0.01;  // disappearance
};

struct EventProbabilities {
  std::vector<double> migration;  // one per migration edge
  std::vector<double> division;   // one per vertex
  EventPriors priors;
};

enum class ModelMode { Full, NoConflict, FixedDivision };

struct ModelOptions {
  ModelMode mode = ModelMode::Full;
  double fixed_division = 0.05;  // p_d for FixedDivision
  // Appearance in frame 1 and disappearance in the last frame cost nothing:
  // cells present when the sequence starts or ends are not events.
  bool free_boundary = true;
};

enum class VarKind { Migration, Appear, Divide, Disappear };
enum class RowKind { Conservation, DivisionPrerequisite, Exclusion };
enum class RowSense { Equal, GreaterEqual, LessEqual };

struct VarInfo {
  VarKind kind = VarKind::Migration;
  int from = -1;  // vertex id, -1 for a terminal
  int to = -1;
  std::string name;
};

struct RowInfo {
  RowKind kind = RowKind::Conservation;
  int owner = 0;  // vertex id or exclusion-set index
  RowSense sense = RowSense::Equal;
  double rhs = 0;
  std::string name;
};

struct IPModel {
  int num_vertices = 0;
  int num_migrations = 0;
  ModelMode mode = ModelMode::Full;
  Eigen::VectorXd weights;
  std::vector<VarInfo> vars;
  std::vector<RowInfo> rows;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;

  int num_vars() const { return static_cast<int>(vars.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }
  int appear_var(int v) const { return num_migrations + 3 * v; }
  int divide_var(int v) const { return num_migrations + 3 * v + 1; }
  int disappear_var(int v) const { return num_migrations + 3 * v + 2; }
};

IPModel build_model(const TrackingGraph& graph, const EventProbabilities& probs, const ModelOptions& options = {});

enum class SolveStatus { Optimal, GapReached, Infeasible };
const char* to_string(SolveStatus s);

struct FlowSolution {
  Eigen::VectorXd values;
  double objective = 0;
  double bound = 0;  // best proven upper bound
  double gap = 0;    // (bound - objective) / max(1, |objective|)
  SolveStatus status = SolveStatus::Optimal;
  long nodes = 0;    // branch-and-bound nodes that were branched on
};

double objective_value(const IPModel& model, const Eigen::VectorXd& x);

struct Violations {
  int conservation = 0;
  int prerequisite = 0;
  int exclusion = 0;
  int bounds = 0;
  int total() const { return conservation + prerequisite + exclusion + bounds; }
};

Violations check_solution(const IPModel& model, const Eigen::VectorXd& x, double tol = 1e-9);

// Plain LP over box-bounded variables: maximize c'x subject to the rows of A
// with the given senses and lo <= x <= hi.
struct LpProblem {
  Eigen::SparseMatrix<double, Eigen::ColMajor> A;
  Eigen::VectorXd rhs;
  std::vector<RowSense> sense;
  Eigen::VectorXd c;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

// Final basis of a solve, reusable as a warm start for the same rows and
// columns under different bounds.
struct LpBasis {
  std::vector<signed char> state;  // per column: 0 basic, 1 at lower, 2 at upper
  std::vector<int> head;
  Eigen::VectorXd sign;
  bool empty() const { return head.empty(); }
};

struct LpResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = 0;
  long iterations = 0;
  LpBasis basis;
};

/// Bounded-variable revised primal simplex, two phases. Deterministic.
/// With a warm basis, a dual simplex first restores primal feasibility; the
/// solve falls back to a cold start if that basis is unusable.
LpResult simplex_maximize(const LpProblem& lp, const LpBasis* warm = nullptr);

FlowSolution solve_lp(const IPModel& model);
FlowSolution solve_bb(const IPModel& model, double rel_gap = 1e-3);
/// Exhaustive search over all binary assignments; subtrees are cut only when
/// a row can no longer be met. At most 25 variables.
FlowSolution brute_force(const IPModel& model);
FlowSolution round_lp(const IPModel& model);

/// Rounds half-up and repairs: while some row is violated, the first violated
/// row drops its lowest-weight active variable on the offending side.
Eigen::VectorXd round_and_repair(const IPModel& model, const Eigen::VectorXd& fractional);

std::string export_lp(const IPModel& model);

nlohmann::json to_json(const IPModel& model, const FlowSolution& solution);

}  // namespace celltrack
