// Command-line driver: hypotheses, train, track, eval, synth, export-lp.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "celltrack/error.hpp"
#include "celltrack/io.hpp"
#include "celltrack/metrics.hpp"
#include "celltrack/pipeline.hpp"
#include "celltrack/synth.hpp"

namespace fs = std::filesystem;
using namespace celltrack;

namespace {

struct HypothesisFlags {
  HypothesisConfig config;
  int workers = 1;

  void add(CLI::App* app) {
    app->add_option("--min-area", config.min_area, "smallest component kept (px)")->capture_default_str();
    app->add_option("--kappa-min", config.kappa_min, "curvature threshold for split points")->capture_default_str();
    app->add_option("--suppression-radius", config.suppression_radius)->capture_default_str();
    app->add_option("--sigma", config.smoothing_sigma, "contour smoothing")->capture_default_str();
    app->add_option("--max-leaves", config.max_leaves, "contourlet cap per component")->capture_default_str();
    app->add_option("--workers", workers, "threads for hypothesis generation (env CELLTRACK_WORKERS)");
  }
};

struct TrackFlags {
  HypothesisFlags hyp;
  std::string ablation = "full";
  double gate = 50;
  double gap = 1e-3;
  fs::path models;
  std::optional<double> rho_a, rho_d;

  void add(CLI::App* app, bool solver_options) {
    hyp.add(app);
    app->add_option("--models", models, "directory with migration/division models and priors")->required();
    app->add_option("--ablation", ablation, "full | cl | nc | fd[:p] | bh | lp")->capture_default_str();
    app->add_option("--gate", gate, "migration gate distance (px)")->capture_default_str();
    app->add_option("--rho-a", rho_a, "appearance prior, overrides priors.json");
    app->add_option("--rho-d", rho_d, "disappearance prior, overrides priors.json");
    if (solver_options) app->add_option("--gap", gap, "relative optimality gap")->capture_default_str();
  }

  TrackingConfig config() const {
    TrackingConfig c;
    c.hypotheses = hyp.config;
    c.workers = hyp.workers;
    c.gate_distance = gate;
    c.rel_gap = gap;
    if (ablation.rfind("fd:", 0) == 0) {
      c.ablation = Ablation::FixedDivision;
      try {
        std::size_t used = 0;
        c.fixed_division = std::stod(ablation.substr(3), &used);
        if (used != ablation.size() - 3) throw std::invalid_argument(ablation);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::ConfigInvalid, fmt::format("bad fixed division '{}'", ablation));
      }
    } else {
      c.ablation = parse_ablation(ablation);
    }
    if (gap < 0) throw Error(ErrorCode::ConfigInvalid, "gap must be non-negative");
    return c;
  }

  EventModels load() const {
    EventModels m = load_models(models);
    if (rho_a) m.priors.rho_a = *rho_a;
    if (rho_d) m.priors.rho_d = *rho_d;
    return m;
  }
};

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
}

void cmd_hypotheses(const fs::path& input, const fs::path& output, const HypothesisFlags& flags) {
  const auto masks = read_mask_sequence(input);
  const auto frames = generate_sequence_hypotheses(masks, flags.config, flags.workers);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  std::ofstream out(output);
  long count = 0;
  for (const auto& f : frames)
    for (const auto& rec : hypothesis_records(f)) {
      out << rec.dump() << '\n';
      ++count;
    }
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", output.string()));
  fmt::print(stderr, "{} hypotheses over {} frames\n", count, frames.size());
}

// Annotated sequences use the synth layout: masks/ plus gt/gt_track.txt.
void cmd_train(const std::vector<fs::path>& data, const fs::path& samples_dir, const fs::path& output,
               const HypothesisFlags& hyp, double gate, const GBTParams& params, std::optional<double> rho_a,
               std::optional<double> rho_d, std::optional<double> rate) {
  TrainingSamples samples;
  std::vector<LineageForest> gts;
  TrackingConfig config;
  config.hypotheses = hyp.config;
  config.workers = hyp.workers;
  config.gate_distance = gate;
  for (const auto& dir : data) {
    const auto masks = read_mask_sequence(dir / "masks");
    auto gt = read_tracks(dir / "gt", "gt_track.txt");
    gt.frames = static_cast<int>(masks.size());
    const auto s = extract_samples(masks, gt, config);
    append(samples.migration, s.migration);
    append(samples.division, s.division);
    gts.push_back(std::move(gt));
  }
  if (!samples_dir.empty()) {
    append(samples.migration, read_samples(samples_dir / "migration_samples.csv"));
    append(samples.division, read_samples(samples_dir / "division_samples.csv"));
  }
  if (gts.empty() && !(rho_a && rho_d && rate))
    throw Error(ErrorCode::ConfigInvalid, "without annotated data, --rho-a, --rho-d and --division-rate are required");
  if (samples.migration.labels.empty() || samples.division.labels.empty())
    throw Error(ErrorCode::EmptyInput, "no training samples");

  EventModels models;
  models.migration = train_classifier("migration", samples.migration.names, samples.migration.X,
                                      samples.migration.labels, params);
  models.division = train_classifier("division", samples.division.names, samples.division.X,
                                     samples.division.labels, params);
  if (!gts.empty()) {
    models.priors = estimate_priors(gts);
    models.division_rate = division_rate(gts);
  }
  if (rho_a) models.priors.rho_a = *rho_a;
  if (rho_d) models.priors.rho_d = *rho_d;
  if (rate) models.division_rate = *rate;
  save_models(models, output);
  write_samples(samples.migration, output / "migration_samples.csv");
  write_samples(samples.division, output / "division_samples.csv");
  fmt::print(stderr, "trained on {} migration and {} division samples\n", samples.migration.labels.size(),
             samples.division.labels.size());
}

void cmd_track(const fs::path& input, const fs::path& output, const TrackFlags& flags) {
  const auto masks = read_mask_sequence(input);
  const auto config = flags.config();
  const auto models = flags.load();
  const TrackingRun run = track_sequence(masks, models, config);
  fs::create_directories(output);
  write_tracks(run.forest, output);
  const nlohmann::json log = {
      {"ablation", to_string(config.ablation)},
      {"status", to_string(run.solution.status)},
      {"objective", run.solution.objective},
      {"bound", run.solution.bound},
      {"gap", run.solution.gap},
      {"nodes", run.solution.nodes},
      {"seconds", run.seconds},
      {"model_size",
       {{"vertices", run.size.vertices},
        {"migrations", run.graph.migrations.size()},
        {"exclusion_sets", run.size.exclusion_sets},
        {"mean_out_degree", run.size.mean_out_degree},
        {"variables", run.size.num_vars},
        {"constraints", run.size.num_constraints}}},
      {"tracks", run.forest.tracks.size()}};
  // Runtime varies between runs, so it is kept out of the track files.
  write_json(log, output / "solver_log.json");
  fmt::print(stderr, "{} tracks, objective {:.6f}, gap {:.2e}, {:.2f}s\n", run.forest.tracks.size(),
             run.solution.objective, run.solution.gap, run.seconds);
}

void cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& mask_dir, const std::string& pred_file,
              const std::string& gt_file, double radius, const fs::path& json_out) {
  const auto masks = read_mask_sequence(mask_dir);
  auto pred = read_tracks(pred_dir, pred_file);
  auto gt = read_tracks(gt_dir, gt_file);
  const int frames = static_cast<int>(masks.size());
  if (pred.frames > frames || gt.frames > frames)
    throw Error(ErrorCode::FrameMismatch, fmt::format("tracks reach frame {} but only {} masks", std::max(pred.frames, gt.frames), frames));
  pred.frames = gt.frames = frames;
  const auto events = score_events(pred, gt, masks);
  const auto mota = score_mota(pred, gt, radius);
  std::cout << format_table(events, mota);
  if (!json_out.empty()) write_json(to_json(events, mota), json_out);
}

void cmd_export_lp(const fs::path& input, const fs::path& output, const fs::path& graph_out, const TrackFlags& flags) {
  const auto masks = read_mask_sequence(input);
  const auto config = flags.config();
  if (config.ablation == Ablation::ClassifierOnly || config.ablation == Ablation::LpRounding)
    throw Error(ErrorCode::ConfigInvalid, "export-lp needs an integer-program variant (full, nc, fd, bh)");
  const auto models = flags.load();
  TrackingGraph graph = sequence_graph(masks, config);
  if (config.ablation == Ablation::BestHierarchy) graph = best_hierarchy_filter(graph);
  const IPModel model = build_model(graph, score_graph(graph, models), model_options(config, models));
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  std::ofstream out(output);
  out << export_lp(model);
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", output.string()));
  if (!graph_out.empty()) write_json(to_json(graph), graph_out);
  fmt::print(stderr, "{} variables, {} constraints\n", model.vars.size(), model.rows.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint detection and tracking of dividing cells from segmentation masks"};
  app.require_subcommand(1);
  app.fallthrough();
  // Keys go under a section named after the subcommand, e.g. [track] gate=40.
  app.set_config("--config", "", "TOML-style key=value file; flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  int env_workers = 1;
  try {
    env_workers = default_workers();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  auto* hyp_cmd = app.add_subcommand("hypotheses", "write ellipse hypotheses as JSON lines");
  fs::path hyp_in, hyp_out;
  HypothesisFlags hyp_flags;
  hyp_flags.workers = env_workers;
  hyp_cmd->add_option("-i,--input", hyp_in, "mask directory")->required();
  hyp_cmd->add_option("-o,--output", hyp_out, "output .jsonl")->required();
  hyp_flags.add(hyp_cmd);

  auto* train_cmd = app.add_subcommand("train", "train event classifiers and priors");
  std::vector<fs::path> train_data;
  fs::path train_samples, train_out;
  HypothesisFlags train_hyp;
  train_hyp.workers = env_workers;
  double train_gate = 50;
  GBTParams gbt;
  std::optional<double> train_rho_a, train_rho_d, train_rate;
  train_cmd->add_option("-d,--data", train_data, "annotated sequence dirs (masks/, gt/gt_track.txt)");
  train_cmd->add_option("-s,--samples", train_samples, "dir with migration_samples.csv and division_samples.csv");
  train_cmd->add_option("-o,--output", train_out, "model directory")->required();
  train_cmd->add_option("--gate", train_gate, "migration gate distance (px)")->capture_default_str();
  train_cmd->add_option("--rounds", gbt.rounds, "boosting rounds")->capture_default_str();
  train_cmd->add_option("--shrinkage", gbt.shrinkage)->capture_default_str();
  train_cmd->add_option("--rho-a", train_rho_a, "appearance prior");
  train_cmd->add_option("--rho-d", train_rho_d, "disappearance prior");
  train_cmd->add_option("--division-rate", train_rate, "division probability for the fd variant");
  train_hyp.add(train_cmd);

  auto* track_cmd = app.add_subcommand("track", "track a mask sequence");
  fs::path track_in, track_out;
  TrackFlags track_flags;
  track_flags.hyp.workers = env_workers;
  track_cmd->add_option("-i,--input", track_in, "mask directory")->required();
  track_cmd->add_option("-o,--output", track_out, "output directory")->required();
  track_flags.add(track_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval", "score predicted tracks against ground truth");
  fs::path eval_pred, eval_gt, eval_masks, eval_json;
  std::string pred_file = "res_track.txt", gt_file = "gt_track.txt";
  double radius = 15;
  eval_cmd->add_option("--pred", eval_pred, "prediction directory")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth directory")->required();
  eval_cmd->add_option("--masks", eval_masks, "input mask directory")->required();
  eval_cmd->add_option("--pred-file", pred_file)->capture_default_str();
  eval_cmd->add_option("--gt-file", gt_file)->capture_default_str();
  eval_cmd->add_option("--radius", radius, "MOTA match radius (px)")->capture_default_str();
  eval_cmd->add_option("--json", eval_json, "also write scores as JSON");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic sequence with ground truth");
  SynthConfig sc;
  fs::path synth_out;
  synth_cmd->add_option("-o,--output", synth_out, "output directory")->required();
  synth_cmd->add_option("--frames", sc.frames)->capture_default_str();
  synth_cmd->add_option("--width", sc.width)->capture_default_str();
  synth_cmd->add_option("--height", sc.height)->capture_default_str();
  synth_cmd->add_option("--cells", sc.initial_cells, "initial cell count")->capture_default_str();
  synth_cmd->add_option("--motion-sigma", sc.motion_sigma)->capture_default_str();
  synth_cmd->add_option("--division-prob", sc.division_prob)->capture_default_str();
  synth_cmd->add_option("--min-division-age", sc.min_division_age)->capture_default_str();
  synth_cmd->add_option("--disappearance-prob", sc.disappearance_prob)->capture_default_str();
  synth_cmd->add_option("--a-min", sc.a_min)->capture_default_str();
  synth_cmd->add_option("--a-max", sc.a_max)->capture_default_str();
  synth_cmd->add_option("--b-min", sc.b_min)->capture_default_str();
  synth_cmd->add_option("--b-max", sc.b_max)->capture_default_str();
  synth_cmd->add_option("--clumping", sc.clumping)->capture_default_str();
  synth_cmd->add_option("--seed", sc.seed)->capture_default_str();

  auto* lp_cmd = app.add_subcommand("export-lp", "write the flow program in CPLEX LP format");
  fs::path lp_in, lp_out, lp_graph;
  TrackFlags lp_flags;
  lp_flags.hyp.workers = env_workers;
  lp_cmd->add_option("-i,--input", lp_in, "mask directory")->required();
  lp_cmd->add_option("-o,--output", lp_out, "output .lp file")->required();
  lp_cmd->add_option("--graph", lp_graph, "also write the tracking graph as JSON");
  lp_flags.add(lp_cmd, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*hyp_cmd) cmd_hypotheses(hyp_in, hyp_out, hyp_flags);
    if (*train_cmd)
      cmd_train(train_data, train_samples, train_out, train_hyp, train_gate, gbt, train_rho_a, train_rho_d, train_rate);
    if (*track_cmd) cmd_track(track_in, track_out, track_flags);
    if (*eval_cmd) cmd_eval(eval_pred, eval_gt, eval_masks, pred_file, gt_file, radius, eval_json);
    if (*synth_cmd) {
      const auto seq = generate(sc);
      write_sequence(seq, synth_out);
      fmt::print(stderr, "{} frames, {} tracks\n", seq.masks.size(), seq.gt.tracks.size());
    }
    if (*lp_cmd) cmd_export_lp(lp_in, lp_out, lp_graph, lp_flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
