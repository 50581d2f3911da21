#include "celltrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include <fmt/format.h>

namespace celltrack {

namespace fs = std::filesystem;

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::Full;
  if (name == "cl") return Ablation::ClassifierOnly;
  if (name == "nc") return Ablation::NoConflict;
  if (name == "fd") return Ablation::FixedDivision;
  if (name == "bh") return Ablation::BestHierarchy;
  if (name == "lp") return Ablation::LpRounding;
  throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown mode '{}'", name));
}

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::ClassifierOnly: return "cl";
    case Ablation::NoConflict: return "nc";
    case Ablation::FixedDivision: return "fd";
    case Ablation::BestHierarchy: return "bh";
    case Ablation::LpRounding: return "lp";
  }
  return "?";
}

void save_models(const EventModels& models, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, fmt::format("cannot create {}", dir.string()));
  save_classifier(models.migration, dir / "migration_model.json");
  save_classifier(models.division, dir / "division_model.json");
  std::ofstream out(dir / "priors.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write priors.json");
  const nlohmann::json j = {{"rho_a", models.priors.rho_a},
                            {"rho_d", models.priors.rho_d},
                            {"division_rate", models.division_rate}};
  out << j.dump(2) << "\n";
}

EventModels load_models(const fs::path& dir) {
  EventModels m;
  m.migration = load_classifier(dir / "migration_model.json");
  m.division = load_classifier(dir / "division_model.json");
  if (m.migration.gbt.feature_names != migration_feature_names() ||
      m.division.gbt.feature_names != division_feature_names())
    throw Error(ErrorCode::ConfigInvalid, "model feature schema does not match this build");
  std::ifstream in(dir / "priors.json");
  if (!in) throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", (dir / "priors.json").string()));
  try {
    nlohmann::json j;
    in >> j;
    m.priors = {j.at("rho_a").get<double>(), j.at("rho_d").get<double>()};
    m.division_rate = j.at("division_rate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, fmt::format("malformed priors.json: {}", e.what()));
  }
  return m;
}

namespace {

// Exclusion-set indices per vertex.
std::vector<std::vector<int>> membership(const TrackingGraph& graph) {
  std::vector<std::vector<int>> sets(graph.vertices.size());
  for (std::size_t l = 0; l < graph.exclusion_sets.size(); ++l)
    for (int v : graph.exclusion_sets[l]) sets[static_cast<std::size_t>(v)].push_back(static_cast<int>(l));
  return sets;
}

bool share_set(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  return false;
}

}  // namespace

EventProbabilities score_graph(const TrackingGraph& graph, const EventModels& models) {
  EventProbabilities p;
  p.priors = {clamp_probability(models.priors.rho_a), clamp_probability(models.priors.rho_d)};
  p.migration.reserve(graph.migrations.size());
  for (const auto& e : graph.migrations) {
    const auto& vi = graph.vertices[static_cast<std::size_t>(e.from)];
    const auto& vj = graph.vertices[static_cast<std::size_t>(e.to)];
    p.migration.push_back(clamp_probability(
        models.migration.probability(migration_features(vi.ellipse, vj.ellipse, vi.fit_error, vj.fit_error))));
  }
  const auto sets = membership(graph);
  p.division.assign(graph.vertices.size(), clamp_probability(0.0));
  for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
    std::vector<int> succ;
    for (int e : graph.out_edges[v]) succ.push_back(graph.migrations[static_cast<std::size_t>(e)].to);
    if (succ.size() < 2) continue;
    std::vector<Ellipse> shapes;
    for (int s : succ) shapes.push_back(graph.vertices[static_cast<std::size_t>(s)].ellipse);
    const double score = division_score(graph.vertices[v].ellipse, shapes, models.division.gbt, [&](std::size_t k, std::size_t l) {
      return !share_set(sets[static_cast<std::size_t>(succ[k])], sets[static_cast<std::size_t>(succ[l])]);
    });
    if (score != kNoDivision) p.division[v] = clamp_probability(models.division.platt.probability(score));
  }
  return p;
}

Eigen::VectorXd classifier_only_flow(const TrackingGraph& graph, const EventProbabilities& probs) {
  const int n = static_cast<int>(graph.vertices.size());
  const int m = static_cast<int>(graph.migrations.size());
  std::vector<int> order;
  for (int e = 0; e < m; ++e)
    if (probs.migration[static_cast<std::size_t>(e)] > 0.5) order.push_back(e);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs.migration[static_cast<std::size_t>(a)] > probs.migration[static_cast<std::size_t>(b)];
  });
  const auto sets = membership(graph);
  std::vector<int> set_owner(graph.exclusion_sets.size(), -1);
  std::vector<int> outs(static_cast<std::size_t>(n), 0), ins(static_cast<std::size_t>(n), 0);
  auto can_activate = [&](int v) {
    for (int l : sets[static_cast<std::size_t>(v)])
      if (set_owner[static_cast<std::size_t>(l)] >= 0 && set_owner[static_cast<std::size_t>(l)] != v) return false;
    return true;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m + 3 * n);
  for (int e : order) {
    const int i = graph.migrations[static_cast<std::size_t>(e)].from, j = graph.migrations[static_cast<std::size_t>(e)].to;
    const int max_out = probs.division[static_cast<std::size_t>(i)] > 0.5 ? 2 : 1;
    if (outs[static_cast<std::size_t>(i)] >= max_out || ins[static_cast<std::size_t>(j)] > 0) continue;
    if (!can_activate(i) || !can_activate(j)) continue;
    x(e) = 1;
    ++outs[static_cast<std::size_t>(i)];
    ++ins[static_cast<std::size_t>(j)];
    for (int v : {i, j})
      for (int l : sets[static_cast<std::size_t>(v)]) set_owner[static_cast<std::size_t>(l)] = v;
  }
  for (int v = 0; v < n; ++v) {
    const auto sv = static_cast<std::size_t>(v);
    if (outs[sv] == 0 && ins[sv] == 0) continue;
    if (ins[sv] == 0) x(m + 3 * v) = 1;
    if (outs[sv] == 2) x(m + 3 * v + 1) = 1;
    if (outs[sv] == 0) x(m + 3 * v + 2) = 1;
  }
  return x;
}

ModelOptions model_options(const TrackingConfig& config, const EventModels& models) {
  ModelOptions options;
  if (config.ablation == Ablation::NoConflict) options.mode = ModelMode::NoConflict;
  if (config.ablation == Ablation::FixedDivision) {
    options.mode = ModelMode::FixedDivision;
    options.fixed_division = clamp_probability(config.fixed_division.value_or(models.division_rate));
  }
  return options;
}

TrackingGraph sequence_graph(std::span<const LabelMask> masks, const TrackingConfig& config) {
  const auto hyps = generate_sequence_hypotheses(masks, config.hypotheses, config.workers);
  TrackingGraph graph = build_graph(hyps, config.gate_distance);
  graph.frames = static_cast<int>(masks.size());
  return graph;
}

TrackingRun track_graph(TrackingGraph graph, const EventModels& models, const TrackingConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  TrackingRun run;
  if (config.ablation == Ablation::BestHierarchy) graph = best_hierarchy_filter(graph);
  run.graph = std::move(graph);
  run.size = model_size(run.graph);
  run.probs = score_graph(run.graph, models);

  const IPModel model = build_model(run.graph, run.probs, model_options(config, models));
  switch (config.ablation) {
    case Ablation::ClassifierOnly:
      run.solution.values = classifier_only_flow(run.graph, run.probs);
      run.solution.objective = run.solution.bound = objective_value(model, run.solution.values);
      break;
    case Ablation::LpRounding:
      run.solution = round_lp(model);
      break;
    default:
      run.solution = solve_bb(model, config.rel_gap);
      break;
  }
  run.forest = decode(run.solution.values, run.graph);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

TrackingRun track_sequence(std::span<const LabelMask> masks, const EventModels& models, const TrackingConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  TrackingGraph graph = sequence_graph(masks, config);
  TrackingRun run = track_graph(std::move(graph), models, config);
  run.forest.frames = static_cast<int>(masks.size());
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

void append(SampleTable& into, const SampleTable& more) {
  if (into.names.empty()) into.names = more.names;
  if (into.names != more.names) throw Error(ErrorCode::ConfigInvalid, "sample tables use different features");
  Eigen::MatrixXd X(into.X.rows() + more.X.rows(), static_cast<Eigen::Index>(into.names.size()));
  if (into.X.rows() > 0) X.topRows(into.X.rows()) = into.X;
  if (more.X.rows() > 0) X.bottomRows(more.X.rows()) = more.X;
  into.X = std::move(X);
  into.labels.insert(into.labels.end(), more.labels.begin(), more.labels.end());
}

namespace {

struct Match {
  int track = 0;  // 0 = unmatched
};

std::vector<Match> match_vertices(const TrackingGraph& graph, const LineageForest& gt) {
  std::map<int, std::vector<std::pair<int, const Ellipse*>>> cells;  // frame -> (track, ellipse)
  for (const auto& t : gt.tracks)
    for (const auto& p : t.points) cells[p.frame].push_back({t.id, &p.ellipse});
  std::map<int, std::vector<int>> by_frame;
  for (const auto& v : graph.vertices) by_frame[v.frame].push_back(v.id);

  std::vector<Match> match(graph.vertices.size());
  for (const auto& [frame, ids] : by_frame) {
    const auto it = cells.find(frame);
    if (it == cells.end()) continue;
    struct Cand {
      double iou;
      int vertex, track;
    };
    std::vector<Cand> cands;
    for (int v : ids)
      for (const auto& [track, e] : it->second) {
        const auto& ve = graph.vertices[static_cast<std::size_t>(v)].ellipse;
        if ((ve.center - e->center).norm() > ve.a + e->a) continue;
        const double iou = ellipse_overlap(ve, *e, 2);
        if (iou >= 0.5) cands.push_back({iou, v, track});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.iou != b.iou) return a.iou > b.iou;
      if (a.vertex != b.vertex) return a.vertex < b.vertex;
      return a.track < b.track;
    });
    std::map<int, bool> used;
    for (const auto& c : cands) {
      if (match[static_cast<std::size_t>(c.vertex)].track != 0 || used[c.track]) continue;
      match[static_cast<std::size_t>(c.vertex)].track = c.track;
      used[c.track] = true;
    }
  }
  return match;
}

}  // namespace

TrainingSamples extract_samples(std::span<const LabelMask> masks, const LineageForest& gt, const TrackingConfig& config) {
  const auto hyps = generate_sequence_hypotheses(masks, config.hypotheses, config.workers);
  TrackingGraph graph = build_graph(hyps, config.gate_distance);
  const auto match = match_vertices(graph, gt);
  auto track_of = [&](int v) { return match[static_cast<std::size_t>(v)].track; };

  TrainingSamples s;
  s.migration.names = migration_feature_names();
  s.division.names = division_feature_names();
  std::vector<Eigen::VectorXd> mig_rows, div_rows;
  for (const auto& e : graph.migrations) {
    const auto& vi = graph.vertices[static_cast<std::size_t>(e.from)];
    const auto& vj = graph.vertices[static_cast<std::size_t>(e.to)];
    const int a = track_of(e.from), b = track_of(e.to);
    bool positive = false;
    if (a != 0 && b != 0) {
      const Track* tb = gt.find(b);
      const Track* ta = gt.find(a);
      positive = a == b || (tb && ta && tb->parent == a && ta->end == vi.frame);
    }
    mig_rows.push_back(migration_features(vi.ellipse, vj.ellipse, vi.fit_error, vj.fit_error));
    s.migration.labels.push_back(positive ? 1 : -1);
  }

  const auto sets = membership(graph);
  for (const auto& v : graph.vertices) {
    std::vector<int> succ;
    for (int e : graph.out_edges[static_cast<std::size_t>(v.id)]) succ.push_back(graph.migrations[static_cast<std::size_t>(e)].to);
    const int p = track_of(v.id);
    const Track* parent = p != 0 ? gt.find(p) : nullptr;
    std::vector<int> kids;
    if (parent && parent->end == v.frame) kids = gt.children(p);
    for (std::size_t k = 0; k < succ.size(); ++k)
      for (std::size_t l = k + 1; l < succ.size(); ++l) {
        if (share_set(sets[static_cast<std::size_t>(succ[k])], sets[static_cast<std::size_t>(succ[l])])) continue;
        const int tk = track_of(succ[k]), tl = track_of(succ[l]);
        const bool positive = kids.size() == 2 && tk != 0 && tl != 0 && tk != tl &&
                              std::find(kids.begin(), kids.end(), tk) != kids.end() &&
                              std::find(kids.begin(), kids.end(), tl) != kids.end();
        div_rows.push_back(division_features(v.ellipse, graph.vertices[static_cast<std::size_t>(succ[k])].ellipse,
                                             graph.vertices[static_cast<std::size_t>(succ[l])].ellipse));
        s.division.labels.push_back(positive ? 1 : -1);
      }
  }
  auto to_matrix = [](const std::vector<Eigen::VectorXd>& rows, std::size_t cols) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return X;
  };
  s.migration.X = to_matrix(mig_rows, s.migration.names.size());
  s.division.X = to_matrix(div_rows, s.division.names.size());
  return s;
}

EventModels train_models(const TrainingSamples& samples, std::span<const LineageForest> gts, const GBTParams& params) {
  EventModels m;
  m.migration = train_classifier("migration", samples.migration.names, samples.migration.X, samples.migration.labels, params);
  m.division = train_classifier("division", samples.division.names, samples.division.X, samples.division.labels, params);
  m.priors = estimate_priors(gts);
  m.division_rate = division_rate(gts);
  return m;
}

std::vector<nlohmann::json> hypothesis_records(const FrameHypotheses& frame) {
  std::vector<nlohmann::json> out;
  for (const auto& comp : frame.components) {
    for (const auto& n : comp.tree.nodes) {
      if (!n.valid) continue;
      out.push_back({{"frame", frame.frame},
                     {"component", comp.component_id},
                     {"node_id", n.id},
                     {"parent_id", n.parent},
                     {"leaf", n.children.empty()},
                     {"cx", n.ellipse.cx()},
                     {"cy", n.ellipse.cy()},
                     {"a", n.ellipse.a},
                     {"b", n.ellipse.b},
                     {"theta", n.ellipse.theta},
                     {"fit_error", n.fit_error}});
    }
  }
  return out;
}

int default_workers() {
  if (const char* env = std::getenv("CELLTRACK_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
    throw Error(ErrorCode::ConfigInvalid, fmt::format("CELLTRACK_WORKERS='{}' is not a positive integer", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace celltrack
