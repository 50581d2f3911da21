// Acceptance run: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "celltrack/metrics.hpp"
#include "celltrack/pipeline.hpp"
#include "celltrack/synth.hpp"
#include "support/lp_parser.hpp"
#include "support/random_graph.hpp"
#include "support/temp_dir.hpp"

using namespace celltrack;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Every flow produced below is checked against its model here.
struct Faithfulness {
  long solutions = 0;
  long violations = 0;
  std::string first;

  void record(const IPModel& model, const Eigen::VectorXd& x, const std::string& where) {
    ++solutions;
    const auto v = check_solution(model, x);
    if (v.total() > 0) {
      ++violations;
      if (first.empty())
        first = fmt::format("{}: cons {} pre {} excl {} bounds {}", where, v.conservation, v.prerequisite, v.exclusion,
                            v.bounds);
    }
  }
} faith;

// Dominance chain lp >= bb >= round_lp and the reported gap, per instance.
struct Dominance {
  long instances = 0;
  long failures = 0;
  double worst_gap = 0;
  std::string first;

  void check(const IPModel& model, const std::string& where, const FlowSolution* bb_in = nullptr) {
    const FlowSolution bb = bb_in ? *bb_in : solve_bb(model);
    const FlowSolution lp = solve_lp(model);
    const FlowSolution rounded = round_lp(model);
    faith.record(model, bb.values, where + " bb");
    faith.record(model, rounded.values, where + " round_lp");
    ++instances;
    worst_gap = std::max(worst_gap, bb.gap);
    const double tol = 1e-7 * (1 + std::abs(bb.objective));
    const bool ok = lp.objective >= bb.objective - tol && bb.objective >= rounded.objective - tol && bb.gap <= 1e-3;
    if (!ok) {
      ++failures;
      if (first.empty())
        first = fmt::format("{}: lp {:.6f} bb {:.6f} round {:.6f} gap {:.2e}", where, lp.objective, bb.objective,
                            rounded.objective, bb.gap);
    }
  }
} dominance;

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  const auto t0 = Clock::now();
  int agree = 0, largest = 0;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_graph(rng, 12, 25);
    const auto model = build_model(g, testing::random_probabilities(rng, g));
    largest = std::max(largest, model.num_vars());
    const auto exact = brute_force(model);
    const auto bb = solve_bb(model);
    faith.record(model, exact.values, "brute force");
    const double diff = std::abs(bb.objective - exact.objective);
    worst = std::max(worst, diff);
    agree += diff <= 1e-6;
    dominance.check(model, fmt::format("oracle instance {}", trial), &bb);
  }
  const double secs = seconds_since(t0);
  return {agree == 200 && secs < 10,
          fmt::format("{}/200 agree, max |diff| {:.1e}, up to {} variables, {:.2f}s", agree, worst, largest, secs)};
}

Outcome model_size_formulas() {
  std::mt19937_64 rng(99);
  int ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = testing::random_graph(rng, 60, 600);
    const auto size = model_size(g);
    const auto model = build_model(g, testing::random_probabilities(rng, g));
    const double N = static_cast<double>(size.vertices);
    const long vars = std::lround(N * (3 + size.mean_out_degree));
    ok += vars == model.num_vars() && size.exclusion_sets + 2 * size.vertices == model.num_rows();
  }
  return {ok == 50, fmt::format("{}/50 graphs with N(3+K) variables and C+2N constraints", ok)};
}

Outcome lp_dominance() {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = testing::random_graph(rng, 60, 600);
    const auto p = testing::random_probabilities(rng, g);
    for (auto mode : {ModelMode::Full, ModelMode::NoConflict, ModelMode::FixedDivision})
      dominance.check(build_model(g, p, {mode, 0.05}), fmt::format("random graph {}", trial));
  }
  return {dominance.failures == 0,
          fmt::format("{} instances, {} violations, worst gap {:.1e}{}", dominance.instances, dominance.failures,
                      dominance.worst_gap, dominance.first.empty() ? "" : "; first: " + dominance.first)};
}

EventModels train_on(SynthConfig base, int sequences) {
  TrainingSamples samples;
  std::vector<LineageForest> gts;
  for (int k = 0; k < sequences; ++k) {
    base.seed = 101 + static_cast<std::uint64_t>(k);
    base.division_prob = 0.06;
    const auto seq = generate(base);
    const auto s = extract_samples(seq.masks, seq.gt, TrackingConfig{});
    append(samples.migration, s.migration);
    append(samples.division, s.division);
    gts.push_back(seq.gt);
  }
  return train_models(samples, gts);
}

struct Scored {
  EventScores events;
  MotaScore mota;
  double seconds = 0;
};

Scored run_variant(const SynthSequence& seq, const EventModels& models, Ablation ablation, const std::string& tag) {
  TrackingConfig tc;
  tc.ablation = ablation;
  const auto run = track_sequence(seq.masks, models, tc);
  const auto model = build_model(run.graph, run.probs, model_options(tc, models));
  faith.record(model, run.solution.values, tag + " " + to_string(ablation));
  if (ablation == Ablation::Full) dominance.check(model, tag + " full", &run.solution);
  return {score_events(run.forest, seq.gt, seq.masks), score_mota(run.forest, seq.gt), run.seconds};
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const auto models = train_on(SynthConfig{}, 3);
  SynthConfig cfg;  // T=30, 8 cells, division 0.03, clumping 0.5
  cfg.seed = 1;
  const auto seq = generate(cfg);
  const auto s = run_variant(seq, models, Ablation::Full, "synthetic");
  const double secs = seconds_since(t0);
  const auto& d = s.events.division;
  const bool pass = s.mota.mota >= 0.99 && d.recall == 1.0 && d.precision >= 0.9 &&
                    s.events.detection.f_measure >= 0.95 && secs < 60;
  return {pass, fmt::format("MOTA {:.4f}, division R {:.3f} P {:.3f} ({} true), detection F {:.4f}, {:.1f}s incl. "
                            "training (tracking {:.2f}s)",
                            s.mota.mota, d.recall, d.precision, d.tp + d.fn, s.events.detection.f_measure, secs,
                            s.seconds)};
}

SynthConfig clumped_config() {
  SynthConfig c;
  c.initial_cells = 12;
  c.width = c.height = 256;
  c.clumping = 1.0;
  return c;
}

Outcome ablation_ordering() {
  const auto models = train_on(clumped_config(), 3);
  auto cfg = clumped_config();
  cfg.seed = 1;
  const auto seq = generate(cfg);
  const auto full = run_variant(seq, models, Ablation::Full, "clumped");
  const auto nc = run_variant(seq, models, Ablation::NoConflict, "clumped");
  const auto fd = run_variant(seq, models, Ablation::FixedDivision, "clumped");
  const auto bh = run_variant(seq, models, Ablation::BestHierarchy, "clumped");
  const auto lp = run_variant(seq, models, Ablation::LpRounding, "clumped");
  const bool nc_ok = nc.events.migration.precision < full.events.migration.precision &&
                     nc.events.detection.precision < full.events.detection.precision;
  const bool fd_ok = fd.events.division.f_measure < full.events.division.f_measure;
  const bool bh_ok = bh.events.detection.f_measure <= full.events.detection.f_measure;
  const bool lp_ok = std::abs(lp.mota.mota - full.mota.mota) <= 0.03;
  return {nc_ok && fd_ok && bh_ok && lp_ok,
          fmt::format("precision mig/det full {:.3f}/{:.3f} nc {:.3f}/{:.3f}; division F full {:.3f} fd {:.3f}; "
                      "detection F bh {:.3f}; MOTA full {:.4f} lp {:.4f}",
                      full.events.migration.precision, full.events.detection.precision,
                      nc.events.migration.precision, nc.events.detection.precision, full.events.division.f_measure,
                      fd.events.division.f_measure, bh.events.detection.f_measure, full.mota.mota, lp.mota.mota)};
}

Outcome constraint_faithfulness() {
  return {faith.violations == 0 && faith.solutions > 0,
          fmt::format("{} solver outputs, {} with violations{}", faith.solutions, faith.violations,
                      faith.first.empty() ? "" : "; first: " + faith.first)};
}

Outcome geometry_accuracy() {
  constexpr double pi = std::numbers::pi;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-50, 50), ax(2, 40), ang(0, pi), unit(0, 1);
  double fit_err = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const double a = ax(rng);
    const double b = a * (0.1 + 0.85 * unit(rng));
    const auto truth = make_ellipse(pos(rng), pos(rng), a, b, ang(rng));
    const auto fit = fit_ellipse(sample_boundary(truth, 50));
    const double dtheta = std::abs(normalize_angle(fit.theta - truth.theta + pi / 2) - pi / 2);
    fit_err = std::max({fit_err, (fit.center - truth.center).norm() / truth.a, std::abs(fit.a - truth.a) / truth.a,
                        std::abs(fit.b - truth.b) / truth.b, dtheta});
  }
  double perim_err = 0;
  for (double ratio = 1; ratio <= 10; ratio += 0.25) {
    const auto e = make_ellipse(0, 0, 10 * ratio, 10, 0);
    const int n = 20000;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::hypot(e.a * std::sin(2 * pi * i / n), e.b * std::cos(2 * pi * i / n));
    const double exact = sum * 2 * pi / n;
    perim_err = std::max(perim_err, std::abs(circumference(e) - exact) / exact);
  }
  double dist_err = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto e = make_ellipse(pos(rng) / 5, pos(rng) / 5, ax(rng), ax(rng), ang(rng));
    const Point2 p(pos(rng), pos(rng));
    double oracle = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 65536; ++i) oracle = std::min(oracle, (e.point_at(2 * pi * i / 65536) - p).norm());
    dist_err = std::max(dist_err, std::abs(point_ellipse_distance(p, e).distance - oracle));
  }
  return {fit_err <= 1e-6 && perim_err <= 1e-4 && dist_err <= 1e-3,
          fmt::format("fit rel err {:.1e}, circumference rel err {:.1e}, distance abs err {:.1e}", fit_err, perim_err,
                      dist_err)};
}

Outcome worked_exclusion_example() {
  HierarchyTree t;
  for (int i = 0; i < 10; ++i) t.nodes.push_back({.id = i});
  const std::vector<std::pair<char, std::string>> edges{{'a', "bc"}, {'b', "de"}, {'c', "f"},
                                                        {'d', "gh"}, {'e', "i"},  {'f', "j"}};
  for (const auto& [parent, kids] : edges)
    for (char c : kids) {
      t.nodes[static_cast<std::size_t>(parent - 'a')].children.push_back(c - 'a');
      t.nodes[static_cast<std::size_t>(c - 'a')].parent = parent - 'a';
    }
  t.root = 0;
  std::vector<std::string> got;
  for (const auto& s : exclusion_sets(t)) {
    std::string name;
    for (int id : s.members) name += static_cast<char>('a' + id);
    got.push_back(name);
  }
  const std::vector<std::string> want{"abdg", "abdh", "abei", "acfj"};
  std::string shown;
  for (const auto& s : got) shown += (shown.empty() ? "" : " ") + s;
  return {got == want, fmt::format("sets: {}", shown)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  testing::TempDir dir("determinism");
  SynthConfig cfg = clumped_config();
  cfg.frames = 15;
  cfg.seed = 3;
  write_sequence(generate(cfg), dir.path() / "seq");
  save_models(train_on(clumped_config(), 1), dir.path() / "models");
  const std::string cli = CELLTRACK_CLI;
  auto run = [&](const std::string& out, int workers) {
    const std::string cmd =
        fmt::format("CELLTRACK_WORKERS={} '{}' track -i '{}' --models '{}' -o '{}' 2>/dev/null", workers, cli,
                    (dir.path() / "seq" / "masks").string(), (dir.path() / "models").string(),
                    (dir.path() / out).string());
    return std::system(cmd.c_str()) == 0;
  };
  if (!run("a", 1) || !run("b", 1) || !run("c", 4)) return {false, "track command failed"};
  const auto a = slurp(dir.path() / "a" / "res_track.txt");
  const bool same = !a.empty() && a == slurp(dir.path() / "b" / "res_track.txt");
  const bool same_workers = a == slurp(dir.path() / "c" / "res_track.txt");
  return {same && same_workers, fmt::format("res_track.txt {} bytes, repeat identical: {}, 4 workers identical: {}",
                                            a.size(), same, same_workers)};
}

Outcome lp_round_trip() {
  std::mt19937_64 rng(10);
  int ok = 0;
  std::string first;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::random_graph(rng, 40, 400);
    const auto model = build_model(g, testing::random_probabilities(rng, g));
    const auto problem = testing::lp_mismatch(model, testing::parse_lp(export_lp(model)));
    ok += problem.empty();
    if (!problem.empty() && first.empty()) first = problem;
  }
  return {ok == 20, fmt::format("{}/20 models reconstructed exactly{}", ok, first.empty() ? "" : "; " + first)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // Criterion 2 summarizes the solver outputs gathered by the others, so it runs last.
  const std::vector<Criterion> order{
      {1, "oracle equivalence", oracle_equivalence},
      {3, "model-size formulas", model_size_formulas},
      {5, "synthetic end-to-end", synthetic_end_to_end},
      {6, "ablation ordering", ablation_ordering},
      {4, "LP dominance", lp_dominance},
      {7, "geometry accuracy", geometry_accuracy},
      {8, "exclusion-set worked example", worked_exclusion_example},
      {9, "determinism", determinism},
      {10, "LP export round-trip", lp_round_trip},
      {2, "constraint faithfulness", constraint_faithfulness},
  };
  std::vector<std::pair<int, std::string>> lines;
  bool all = true;
  for (const auto& c : order) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    lines.emplace_back(c.id, fmt::format("criterion {:>2} {} {}: {} [{:.1f}s]", c.id, o.pass ? "PASS" : "FAIL", c.name,
                                         o.detail, seconds_since(t0)));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [id, line] : lines) fmt::print("{}\n", line);
  return all ? 0 : 1;
}
