#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <queue>

#include "celltrack/ilp.hpp"

namespace celltrack {

namespace {

// Variables coupled through rows; the flow program separates into blocks
// whose optima are independent.
struct Block {
  std::vector<int> vars;
  std::vector<int> rows;
};

std::vector<Block> decompose(const IPModel& model) {
  const int n = model.num_vars();
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  for (int r = 0; r < model.num_rows(); ++r) {
    int first = -1;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, r); it; ++it) {
      const int v = find(static_cast<int>(it.col()));
      if (first < 0) {
        first = v;
      } else if (v != first) {
        parent[static_cast<std::size_t>(std::max(v, first))] = std::min(v, first);
        first = std::min(v, first);
      }
    }
  }
  std::vector<int> block_of(static_cast<std::size_t>(n), -1);
  std::vector<Block> blocks;
  for (int v = 0; v < n; ++v) {
    const int root = find(v);
    if (block_of[static_cast<std::size_t>(root)] < 0) {
      block_of[static_cast<std::size_t>(root)] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[static_cast<std::size_t>(block_of[static_cast<std::size_t>(root)])].vars.push_back(v);
  }
  for (int r = 0; r < model.num_rows(); ++r) {
    Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, r);
    if (!it) continue;
    blocks[static_cast<std::size_t>(block_of[static_cast<std::size_t>(find(static_cast<int>(it.col())))])].rows.push_back(r);
  }
  return blocks;
}

LpProblem block_problem(const IPModel& model, const Block& block) {
  const int n = static_cast<int>(block.vars.size());
  const int m = static_cast<int>(block.rows.size());
  std::vector<int> local(static_cast<std::size_t>(model.num_vars()), -1);
  for (int k = 0; k < n; ++k) local[static_cast<std::size_t>(block.vars[static_cast<std::size_t>(k)])] = k;
  LpProblem lp;
  std::vector<Eigen::Triplet<double>> trip;
  lp.rhs.resize(m);
  for (int i = 0; i < m; ++i) {
    const int r = block.rows[static_cast<std::size_t>(i)];
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, r); it; ++it)
      trip.emplace_back(i, local[static_cast<std::size_t>(it.col())], it.value());
    lp.rhs(i) = model.rows[static_cast<std::size_t>(r)].rhs;
    lp.sense.push_back(model.rows[static_cast<std::size_t>(r)].sense);
  }
  lp.A.resize(m, n);
  lp.A.setFromTriplets(trip.begin(), trip.end());
  lp.A.makeCompressed();
  lp.c.resize(n);
  for (int k = 0; k < n; ++k) lp.c(k) = model.weights(block.vars[static_cast<std::size_t>(k)]);
  lp.lo = Eigen::VectorXd::Zero(n);
  lp.hi = Eigen::VectorXd::Ones(n);
  return lp;
}

double relative_gap(double bound, double incumbent) {
  return std::max(0.0, bound - incumbent) / std::max(1.0, std::abs(incumbent));
}

bool is_integral(const Eigen::VectorXd& x, double tol = 1e-6) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i) - std::round(x(i))) > tol) return false;
  return true;
}

struct BlockOutcome {
  Eigen::VectorXd x;
  double objective = 0;
  double bound = 0;
  long nodes = 0;
  bool exhausted = true;
};

// Best-first branch-and-bound on one block, seeded with a feasible incumbent.
BlockOutcome branch_and_bound(const LpProblem& root, const LpResult& root_lp, Eigen::VectorXd incumbent, double rel_gap) {
  struct Node {
    double bound;
    long seq;
    Eigen::VectorXd lo, hi;
    std::shared_ptr<const LpBasis> basis;
  };
  auto worse = [](const Node& a, const Node& b) { return a.bound < b.bound || (a.bound == b.bound && a.seq > b.seq); };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  BlockOutcome out;
  double inc_obj = root.c.dot(incumbent);
  long seq = 0;
  const long node_limit = 200000;

  auto accept_or_branch = [&](LpResult res, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    if (!res.feasible) return;
    if (res.objective <= inc_obj + 1e-9) return;
    if (is_integral(res.x)) {
      Eigen::VectorXd xi = res.x.array().round();
      const double obj = root.c.dot(xi);
      if (obj > inc_obj + 1e-12) {
        incumbent = xi;
        inc_obj = obj;
      }
      return;
    }
    int var = -1;
    double best = 2.0;
    for (Eigen::Index k = 0; k < res.x.size(); ++k) {
      const double frac = res.x(k) - std::floor(res.x(k));
      if (frac <= 1e-6 || frac >= 1 - 1e-6) continue;
      const double dist = std::abs(frac - 0.5);
      if (dist < best - 1e-12) {
        best = dist;
        var = static_cast<int>(k);
      }
    }
    ++out.nodes;
    auto basis = std::make_shared<const LpBasis>(std::move(res.basis));
    Node up{res.objective, seq++, lo, hi, basis};
    up.lo(var) = 1.0;
    Node down{res.objective, seq++, lo, hi, basis};
    down.hi(var) = 0.0;
    open.push(std::move(up));
    open.push(std::move(down));
  };

  accept_or_branch(root_lp, root.lo, root.hi);
  LpProblem lp = root;
  while (!open.empty()) {
    const double top = open.top().bound;
    if (top - inc_obj <= rel_gap * std::abs(inc_obj) + 1e-9) break;
    if (out.nodes >= node_limit) break;
    Node node = open.top();
    open.pop();
    lp.lo = node.lo;
    lp.hi = node.hi;
    LpResult res = simplex_maximize(lp, node.basis.get());
    // A warm dual simplex may report infeasibility on a tolerance edge; confirm from scratch.
    if (!res.feasible) res = simplex_maximize(lp);
    accept_or_branch(std::move(res), node.lo, node.hi);
  }
  out.x = incumbent;
  out.objective = inc_obj;
  out.bound = inc_obj;
  if (!open.empty()) {
    out.bound = std::max(inc_obj, open.top().bound);
    out.exhausted = false;
  }
  return out;
}

}  // namespace

FlowSolution solve_lp(const IPModel& model) {
  FlowSolution sol;
  sol.values = Eigen::VectorXd::Zero(model.num_vars());
  for (const auto& block : decompose(model)) {
    const LpResult res = simplex_maximize(block_problem(model, block));
    if (!res.feasible) {
      sol.status = SolveStatus::Infeasible;
      continue;
    }
    for (std::size_t k = 0; k < block.vars.size(); ++k) sol.values(block.vars[k]) = res.x(static_cast<Eigen::Index>(k));
  }
  sol.objective = objective_value(model, sol.values);
  sol.bound = sol.objective;
  return sol;
}

Eigen::VectorXd round_and_repair(const IPModel& model, const Eigen::VectorXd& fractional) {
  Eigen::VectorXd x = (fractional.array() >= 0.5 - 1e-9).cast<double>();
  for (int guard = 0; guard <= model.num_vars(); ++guard) {
    const Eigen::VectorXd act = model.A * x;
    int row = -1;
    double side = 0;  // sign of the coefficients whose variables must drop
    for (int r = 0; r < model.num_rows(); ++r) {
      const auto& info = model.rows[static_cast<std::size_t>(r)];
      const double a = act(r);
      if (a > info.rhs + 1e-9 && info.sense != RowSense::GreaterEqual) side = 1;
      else if (a < info.rhs - 1e-9 && info.sense != RowSense::LessEqual) side = -1;
      else continue;
      row = r;
      break;
    }
    if (row < 0) return x;
    int drop = -1;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, row); it; ++it) {
      const int v = static_cast<int>(it.col());
      if (x(v) < 0.5 || it.value() * side <= 0) continue;
      if (drop < 0 || model.weights(v) < model.weights(drop)) drop = v;
    }
    if (drop < 0) break;
    x(drop) = 0;
  }
  // Not reachable for flow models; all-zero flow is always feasible.
  return Eigen::VectorXd::Zero(model.num_vars());
}

FlowSolution round_lp(const IPModel& model) {
  const FlowSolution lp = solve_lp(model);
  FlowSolution sol;
  sol.values = round_and_repair(model, lp.values);
  sol.objective = objective_value(model, sol.values);
  sol.bound = lp.objective;
  sol.gap = relative_gap(sol.bound, sol.objective);
  sol.status = lp.status == SolveStatus::Infeasible ? SolveStatus::Infeasible : SolveStatus::GapReached;
  if (sol.gap == 0.0 && sol.status != SolveStatus::Infeasible) sol.status = SolveStatus::Optimal;
  return sol;
}

FlowSolution solve_bb(const IPModel& model, double rel_gap) {
  FlowSolution sol;
  sol.values = Eigen::VectorXd::Zero(model.num_vars());
  const FlowSolution lp = solve_lp(model);
  const Eigen::VectorXd seed = round_and_repair(model, lp.values);
  double bound = 0;
  bool exhausted = true;
  for (const auto& block : decompose(model)) {
    const LpProblem problem = block_problem(model, block);
    Eigen::VectorXd local_seed(static_cast<Eigen::Index>(block.vars.size()));
    for (std::size_t k = 0; k < block.vars.size(); ++k) local_seed(static_cast<Eigen::Index>(k)) = seed(block.vars[k]);
    LpResult root = simplex_maximize(problem);
    const BlockOutcome res = branch_and_bound(problem, root, local_seed, rel_gap);
    for (std::size_t k = 0; k < block.vars.size(); ++k) sol.values(block.vars[k]) = res.x(static_cast<Eigen::Index>(k));
    bound += res.bound;
    sol.nodes += res.nodes;
    exhausted = exhausted && res.exhausted;
  }
  sol.objective = objective_value(model, sol.values);
  sol.bound = std::max(bound, sol.objective);
  sol.gap = relative_gap(sol.bound, sol.objective);
  sol.status = exhausted || sol.gap == 0.0 ? SolveStatus::Optimal : SolveStatus::GapReached;
  if (lp.status == SolveStatus::Infeasible) sol.status = SolveStatus::Infeasible;
  return sol;
}

FlowSolution brute_force(const IPModel& model) {
  const int n = model.num_vars();
  if (n > 25) throw Error(ErrorCode::TooLarge, "brute force is limited to 25 variables");
  const int m = model.num_rows();
  std::vector<std::vector<std::pair<int, double>>> column(static_cast<std::size_t>(n));
  for (int r = 0; r < m; ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, r); it; ++it)
      column[static_cast<std::size_t>(it.col())].emplace_back(r, it.value());

  // Activity of the assigned variables plus the range the unassigned ones can
  // still add. A subtree is skipped only when some row cannot be satisfied by
  // any completion, so every feasible assignment is visited.
  std::vector<double> act(static_cast<std::size_t>(m), 0.0), lo(static_cast<std::size_t>(m), 0.0),
      hi(static_cast<std::size_t>(m), 0.0);
  for (int j = 0; j < n; ++j)
    for (const auto& [r, a] : column[static_cast<std::size_t>(j)]) (a < 0 ? lo : hi)[static_cast<std::size_t>(r)] += a;
  auto reachable = [&](int r) {
    const auto sr = static_cast<std::size_t>(r);
    const auto& info = model.rows[sr];
    const double min = act[sr] + lo[sr], max = act[sr] + hi[sr];
    switch (info.sense) {
      case RowSense::Equal: return min <= info.rhs + 1e-9 && max >= info.rhs - 1e-9;
      case RowSense::GreaterEqual: return max >= info.rhs - 1e-9;
      case RowSense::LessEqual: return min <= info.rhs + 1e-9;
    }
    return false;
  };
  for (int r = 0; r < m; ++r)
    if (!reachable(r)) {
      FlowSolution sol;
      sol.values = Eigen::VectorXd::Zero(n);
      sol.status = SolveStatus::Infeasible;
      return sol;
    }

  // Depth-first in variable order with the 0 branch first visits assignments
  // in lexicographic order, so keeping the first of equal objectives breaks
  // ties towards the smallest one.
  std::uint32_t mask = 0, best_mask = 0;
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  auto visit = [&](auto&& self, int j, double obj) -> void {
    if (j == n) {
      if (!found || obj > best + 1e-9) {
        best = obj;
        best_mask = mask;
        found = true;
      }
      return;
    }
    const auto& col = column[static_cast<std::size_t>(j)];
    for (const auto& [r, a] : col) (a < 0 ? lo : hi)[static_cast<std::size_t>(r)] -= a;
    for (int bit = 0; bit <= 1; ++bit) {
      if (bit) {
        mask |= 1u << j;
        for (const auto& [r, a] : col) act[static_cast<std::size_t>(r)] += a;
      }
      bool ok = true;
      for (const auto& [r, a] : col) ok = ok && reachable(r);
      if (ok) self(self, j + 1, obj + (bit ? model.weights(j) : 0.0));
      if (bit) {
        mask &= ~(1u << j);
        for (const auto& [r, a] : col) act[static_cast<std::size_t>(r)] -= a;
      }
    }
    for (const auto& [r, a] : col) (a < 0 ? lo : hi)[static_cast<std::size_t>(r)] += a;
  };
  visit(visit, 0, 0.0);

  FlowSolution sol;
  sol.values = Eigen::VectorXd::Zero(n);
  if (!found) {
    sol.status = SolveStatus::Infeasible;
    return sol;
  }
  for (int v = 0; v < n; ++v) sol.values(v) = (best_mask >> v) & 1u;
  sol.objective = objective_value(model, sol.values);
  sol.bound = sol.objective;
  return sol;
}

}  // namespace celltrack
