#include <doctest.h>

#include <random>

#include "celltrack/ilp.hpp"
#include "support/lp_parser.hpp"
#include "support/random_graph.hpp"

using namespace celltrack;

namespace {

TrackingGraph chain_graph(int length) {
  TrackingGraph g;
  g.frames = length;
  for (int v = 0; v < length; ++v) {
    Vertex vx;
    vx.id = v;
    vx.frame = v + 1;
    g.vertices.push_back(vx);
    g.exclusion_sets.push_back({v});
    if (v > 0) g.migrations.push_back({v - 1, v});
  }
  g.index();
  return g;
}

EventProbabilities uniform(const TrackingGraph& g, double mig, double div, double app, double dis) {
  EventProbabilities p;
  p.migration.assign(g.migrations.size(), mig);
  p.division.assign(g.vertices.size(), div);
  p.priors = {app, dis};
  return p;
}

}  // namespace

TEST_CASE("single vertex model has three variables and three rows") {
  const auto g = chain_graph(1);
  const auto model = build_model(g, uniform(g, 0.5, 0.5, 0.5, 0.5));
  CHECK(model.num_vars() == 3);
  CHECK(model.num_rows() == 3);
  CHECK(model.weights.isZero());
}

TEST_CASE("out-of-range probabilities are rejected") {
  const auto g = chain_graph(2);
  CHECK_THROWS_AS(build_model(g, uniform(g, 1.0, 0.5, 0.5, 0.5)), Error);
  CHECK_THROWS_AS(build_model(g, uniform(g, 0.5, 0.0, 0.5, 0.5)), Error);
  CHECK_THROWS_AS(build_model(g, uniform(g, 0.5, 0.5, std::nan(""), 0.5)), Error);
  ModelOptions fd{ModelMode::FixedDivision, 1.5};
  CHECK_THROWS_AS(build_model(g, uniform(g, 0.5, 0.5, 0.5, 0.5), fd), Error);
}

TEST_CASE("fixed division replaces every division weight") {
  const auto g = chain_graph(3);
  auto p = uniform(g, 0.9, 0.3, 0.1, 0.1);
  p.division = {1e-4, 0.9, 0.2};
  const auto model = build_model(g, p, {ModelMode::FixedDivision, 0.25});
  for (int v = 0; v < 3; ++v) CHECK(model.weights(model.divide_var(v)) == doctest::Approx(std::log(0.25 / 0.75)));
}

TEST_CASE("all negative weights give the zero flow") {
  const auto g = chain_graph(4);
  const auto model = build_model(g, uniform(g, 0.2, 0.1, 0.1, 0.1));
  for (const auto& sol : {solve_lp(model), solve_bb(model), brute_force(model)}) {
    CHECK(sol.values.isZero());
    CHECK(sol.objective == 0.0);
  }
}

TEST_CASE("profitable chain is selected end to end") {
  const auto g = chain_graph(3);
  const auto model = build_model(g, uniform(g, 0.99, 1e-4, 0.3, 0.3));
  const auto lp = solve_lp(model);
  // app_0 + 2 migrations + dis_2 beats the empty flow.
  CHECK(lp.values(0) == doctest::Approx(1.0));
  CHECK(lp.values(1) == doctest::Approx(1.0));
  CHECK(lp.values(model.appear_var(0)) == doctest::Approx(1.0));
  CHECK(lp.values(model.disappear_var(2)) == doctest::Approx(1.0));
  const auto bb = solve_bb(model);
  CHECK(bb.nodes == 0);
  CHECK(bb.objective == doctest::Approx(lp.objective));
}

TEST_CASE("three-variable chain matches the hand optimum") {
  const auto g = chain_graph(1);
  // app + dis = log(0.8/0.2) + log(0.3/0.7); division cannot pay off alone.
  const auto model = build_model(g, uniform(g, 0.5, 0.4, 0.8, 0.3), {ModelMode::Full, 0, false});
  const auto sol = brute_force(model);
  CHECK(sol.objective == doctest::Approx(std::log(4.0) + std::log(3.0 / 7.0)));
  CHECK(sol.values(model.divide_var(0)) == 0.0);
}

TEST_CASE("empty model") {
  TrackingGraph g;
  const auto model = build_model(g, {});
  CHECK(model.num_vars() == 0);
  CHECK(brute_force(model).objective == 0.0);
  CHECK(solve_bb(model).objective == 0.0);
  CHECK(export_lp(model).find("Binaries") != std::string::npos);
}

TEST_CASE("brute force refuses large models") {
  const auto g = chain_graph(9);
  const auto model = build_model(g, uniform(g, 0.5, 0.5, 0.5, 0.5));
  CHECK(model.num_vars() == 35);
  CHECK_THROWS_AS(brute_force(model), Error);
}

TEST_CASE("two-leaf hierarchy: conflicts allowed only without exclusion rows") {
  // Frame 1: root 0 with leaves 1 and 2. Everything but the root is profitable.
  TrackingGraph g;
  g.frames = 1;
  for (int v = 0; v < 3; ++v) {
    Vertex vx;
    vx.id = v;
    vx.frame = 1;
    g.vertices.push_back(vx);
  }
  g.exclusion_sets = {{0, 1}, {0, 2}};
  g.index();
  EventProbabilities p;
  p.division.assign(3, 1e-4);
  p.priors = {0.9, 0.9};
  const auto full = solve_bb(build_model(g, p, {ModelMode::Full, 0, false}));
  const auto nc_model = build_model(g, p, {ModelMode::NoConflict, 0, false});
  const auto nc = solve_bb(nc_model);
  const auto active = [&](const FlowSolution& s, int v) { return s.values(nc_model.appear_var(v)) > 0.5; };
  CHECK(active(full, 0) + active(full, 1) <= 1);
  CHECK(active(full, 0) + active(full, 2) <= 1);
  CHECK(active(nc, 1));
  CHECK(active(nc, 2));
  CHECK(nc.objective > full.objective);
}

TEST_CASE("rounding repair keeps one of two half-active conflicting leaves") {
  TrackingGraph g;
  g.frames = 1;
  for (int v = 0; v < 2; ++v) {
    Vertex vx;
    vx.id = v;
    vx.frame = 1;
    g.vertices.push_back(vx);
  }
  g.exclusion_sets = {{0, 1}};
  g.index();
  EventProbabilities p;
  p.division.assign(2, 1e-4);
  p.priors = {0.9, 0.9};
  const auto model = build_model(g, p);
  Eigen::VectorXd half = Eigen::VectorXd::Zero(model.num_vars());
  half(model.appear_var(0)) = half(model.appear_var(1)) = 0.5;
  half(model.disappear_var(0)) = half(model.disappear_var(1)) = 0.5;
  const Eigen::VectorXd x = round_and_repair(model, half);
  CHECK(check_solution(model, x).total() == 0);
  CHECK(x(model.appear_var(0)) + x(model.appear_var(1)) == 1.0);
}

TEST_CASE("solvers agree with exhaustive enumeration on random graphs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = testing::random_graph(rng, 8);
    const auto p = testing::random_probabilities(rng, g);
    for (auto mode : {ModelMode::Full, ModelMode::NoConflict}) {
      const auto model = build_model(g, p, {mode, 0.1});
      const auto exact = brute_force(model);
      const auto bb = solve_bb(model);
      const auto lp = solve_lp(model);
      const auto rounded = round_lp(model);
      CAPTURE(trial);
      CHECK(bb.objective == doctest::Approx(exact.objective).epsilon(1e-9));
      CHECK(lp.objective >= bb.objective - 1e-9);
      CHECK(bb.objective >= rounded.objective - 1e-9);
      CHECK(bb.gap <= 1e-3);
      CHECK(check_solution(model, bb.values).total() == 0);
      CHECK(check_solution(model, rounded.values).total() == 0);
      CHECK(check_solution(model, exact.values).total() == 0);
      CHECK(check_solution(model, lp.values, 1e-7).total() == 0);
      CHECK(objective_value(model, bb.values) == doctest::Approx(bb.objective).epsilon(1e-12));
    }
  }
}

TEST_CASE("brute force breaks ties towards the lexicographically smallest assignment") {
  // Two isolated vertices with zero-weight everything: the zero flow ties
  // with every other feasible flow.
  TrackingGraph g;
  g.frames = 1;
  Vertex vx;
  g.vertices.push_back(vx);
  g.exclusion_sets = {{0}};
  g.index();
  EventProbabilities p;
  p.division = {0.5};
  p.priors = {0.5, 0.5};
  const auto sol = brute_force(build_model(g, p));
  CHECK(sol.values.isZero());
}

TEST_CASE("exported LP text re-parses to the same program") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::random_graph(rng, 30, 300);
    const auto p = testing::random_probabilities(rng, g);
    for (auto mode : {ModelMode::Full, ModelMode::NoConflict}) {
      const auto model = build_model(g, p, {mode, 0.1});
      const auto parsed = testing::parse_lp(export_lp(model));
      CAPTURE(trial);
      CHECK(testing::lp_mismatch(model, parsed) == "");
    }
  }
}

TEST_CASE("the LP parser notices tampering") {
  std::mt19937_64 rng(5);
  const auto g = testing::random_graph(rng, 10, 60);
  const auto model = build_model(g, testing::random_probabilities(rng, g));
  std::string text = export_lp(model);
  const auto pos = text.find(" = 0");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 4, " >= 0");
  CHECK(testing::lp_mismatch(model, testing::parse_lp(text)) != "");
}

TEST_CASE("warm-started simplex matches a cold solve after bound changes") {
  std::mt19937_64 rng(31);
  int infeasible = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = testing::random_graph(rng, 30, 200);
    const auto model = build_model(g, testing::random_probabilities(rng, g));
    LpProblem lp;
    lp.A = model.A;
    lp.rhs.resize(model.num_rows());
    for (int r = 0; r < model.num_rows(); ++r) {
      lp.rhs(r) = model.rows[static_cast<std::size_t>(r)].rhs;
      lp.sense.push_back(model.rows[static_cast<std::size_t>(r)].sense);
    }
    lp.c = model.weights;
    lp.lo = Eigen::VectorXd::Zero(model.num_vars());
    lp.hi = Eigen::VectorXd::Ones(model.num_vars());
    const auto parent = simplex_maximize(lp);
    REQUIRE(parent.feasible);
    std::uniform_int_distribution<int> pick(0, model.num_vars() - 1);
    for (int k = 0; k < 4; ++k) {
      LpProblem child = lp;
      for (int f = 0; f <= k; ++f) {
        const int v = pick(rng);
        // Branching fixes a variable at 0 or 1.
        if (rng() & 1) child.lo(v) = 1.0;
        else child.hi(v) = 0.0;
        if (child.lo(v) > child.hi(v)) child.lo(v) = child.hi(v) = 0.0;
      }
      const auto cold = simplex_maximize(child);
      const auto warm = simplex_maximize(child, &parent.basis);
      CAPTURE(trial);
      CAPTURE(k);
      REQUIRE(warm.feasible == cold.feasible);
      if (!cold.feasible) {
        ++infeasible;
        continue;
      }
      CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-9));
      CHECK((warm.x.array() >= child.lo.array() - 1e-9).all());
      CHECK((warm.x.array() <= child.hi.array() + 1e-9).all());
      CHECK((model.A * warm.x - model.A * cold.x).cwiseAbs().maxCoeff() < 1.0 + 1e-9);
    }
  }
  CHECK(infeasible > 0);
}
