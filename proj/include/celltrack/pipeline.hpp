#pragma once

// End-to-end tracking: hypotheses -> graph -> event probabilities -> flow
// program -> lineage, with the ablation variants; plus training-sample
// extraction from annotated sequences.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "celltrack/events.hpp"
#include "celltrack/graph.hpp"
#include "celltrack/ilp.hpp"
#include "celltrack/lineage.hpp"

namespace celltrack {

enum class Ablation { Full, ClassifierOnly, NoConflict, FixedDivision, BestHierarchy, LpRounding };

/// "full", "cl", "nc", "fd", "bh" or "lp".
Ablation parse_ablation(std::string_view name);
const char* to_string(Ablation a);

struct EventModels {
  EventClassifier migration;
  EventClassifier division;
  EventPriors priors;
  double division_rate = 0.05;  // p_d for the fixed-division variant
};

/// migration_model.json, division_model.json and priors.json.
void save_models(const EventModels& models, const std::filesystem::path& dir);
EventModels load_models(const std::filesystem::path& dir);

struct TrackingConfig {
  HypothesisConfig hypotheses;
  double gate_distance = 50;
  Ablation ablation = Ablation::Full;
  std::optional<double> fixed_division;  // overrides the trained rate
  double rel_gap = 1e-3;
  int workers = 1;
};

struct TrackingRun {
  TrackingGraph graph;
  EventProbabilities probs;
  FlowSolution solution;
  ModelSize size;
  LineageForest forest;
  double seconds = 0;
};

EventProbabilities score_graph(const TrackingGraph& graph, const EventModels& models);

/// Greedy linking of migrations whose probability exceeds 0.5, most probable
/// first, respecting exclusion sets; a vertex takes a second successor only
/// when its division probability exceeds 0.5. Returns a feasible flow.
Eigen::VectorXd classifier_only_flow(const TrackingGraph& graph, const EventProbabilities& probs);

/// Flow-model options implied by the ablation.
ModelOptions model_options(const TrackingConfig& config, const EventModels& models);

/// Hypotheses and tracking graph of a mask sequence, unfiltered.
TrackingGraph sequence_graph(std::span<const LabelMask> masks, const TrackingConfig& config);

TrackingRun track_graph(TrackingGraph graph, const EventModels& models, const TrackingConfig& config);
TrackingRun track_sequence(std::span<const LabelMask> masks, const EventModels& models, const TrackingConfig& config);

struct TrainingSamples {
  SampleTable migration;
  SampleTable division;
};

/// Labels graph edges against an annotated lineage. Hypotheses are matched
/// one-to-one to annotated cells by greedy IoU >= 0.5.
TrainingSamples extract_samples(std::span<const LabelMask> masks, const LineageForest& gt,
                                const TrackingConfig& config);

void append(SampleTable& into, const SampleTable& more);

/// Trains both classifiers and estimates priors from the annotations.
EventModels train_models(const TrainingSamples& samples, std::span<const LineageForest> gts,
                         const GBTParams& params = {});

/// One JSON-lines record per valid hierarchy node: frame, component, node_id,
/// parent_id, leaf, cx, cy, a, b, theta, fit_error.
std::vector<nlohmann::json> hypothesis_records(const FrameHypotheses& frame);

/// Worker count from CELLTRACK_WORKERS, else the hardware concurrency.
int default_workers();

}  // namespace celltrack
