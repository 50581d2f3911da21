#pragma once

// Event probabilities for the flow objective: geometric features, boosted
// decision stumps, Platt calibration and event-rate priors.

#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "celltrack/ilp.hpp"
#include "celltrack/lineage.hpp"

namespace celltrack {

inline constexpr int kFeatureSchemaVersion = 1;

const std::vector<std::string>& migration_feature_names();
const std::vector<std::string>& division_feature_names();

Eigen::VectorXd migration_features(const Ellipse& ei, const Ellipse& ej, double fit_i, double fit_j);
Eigen::VectorXd division_features(const Ellipse& ej, const Ellipse& ek, const Ellipse& el);

struct Stump {
  int feature = 0;
  double threshold = 0;  // x <= threshold goes left
  double left = 0;
  double right = 0;
};

struct GBTModel {
  double base_score = 0;
  double shrinkage = 0.1;
  std::vector<Stump> stumps;  // leaf values already include shrinkage
  std::vector<std::string> feature_names;

  double score(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct GBTParams {
  int rounds = 100;
  double shrinkage = 0.1;
  int depth = 1;
};

/// Logistic-loss boosting over stumps with Newton leaf values. Rows of X are
/// samples; labels are +1 / -1. The optional history receives the training
/// loss before the first round and after every round.
GBTModel train_gbt(const Eigen::MatrixXd& X, std::span<const int> labels, const GBTParams& params = {},
                   std::vector<double>* loss_history = nullptr);

struct PlattScaler {
  double A = -1;
  double B = 0;
  double probability(double score) const;
};

PlattScaler fit_platt(std::span<const double> scores, std::span<const int> labels);

struct EventClassifier {
  std::string kind;
  GBTModel gbt;
  PlattScaler platt;
  double probability(const Eigen::Ref<const Eigen::VectorXd>& x) const { return platt.probability(gbt.score(x)); }
};

/// Trains the boosted model, then fits the sigmoid on its training scores.
EventClassifier train_classifier(const std::string& kind, const std::vector<std::string>& names,
                                 const Eigen::MatrixXd& X, std::span<const int> labels, const GBTParams& params = {});

inline constexpr double kNoDivision = -std::numeric_limits<double>::infinity();

/// Best division score over unordered successor pairs (k, l) accepted by
/// `allowed`; kNoDivision when there is no such pair.
double division_score(const Ellipse& ej, std::span<const Ellipse> successors, const GBTModel& model,
                      const std::function<bool(std::size_t, std::size_t)>& allowed = {});

/// Relative frequencies in a ground-truth lineage: births away from frame 1
/// that do not come from a division, and deaths away from the last frame
/// without children, each over the number of within-track frame transitions.
EventPriors estimate_priors(const LineageForest& gt);
/// Counts pooled over several annotated sequences.
EventPriors estimate_priors(std::span<const LineageForest> gts);

/// Divisions per within-track transition, clamped like a probability.
double division_rate(const LineageForest& gt);
double division_rate(std::span<const LineageForest> gts);

nlohmann::json to_json(const EventClassifier& model);
EventClassifier classifier_from_json(const nlohmann::json& j);
void save_classifier(const EventClassifier& model, const std::filesystem::path& path);
EventClassifier load_classifier(const std::filesystem::path& path);

struct SampleTable {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  std::vector<int> labels;
};

/// CSV with header `label,<feature>...`; labels are 1 or -1.
void write_samples(const SampleTable& table, const std::filesystem::path& path);
SampleTable read_samples(const std::filesystem::path& path);

}  // namespace celltrack
