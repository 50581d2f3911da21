#pragma once

// Event-level precision / recall / F for detection, migration and division,
// with events lifted to connected components, plus MOTA.

#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "celltrack/hypothesis.hpp"
#include "celltrack/lineage.hpp"

namespace celltrack {

struct ClassScore {
  long tp = 0, fp = 0, fn = 0;
  double recall = 1, precision = 1, f_measure = 1;
};

/// Rates from counts. A rate with an empty denominator is 1 when the class
/// has no errors at all and 0 otherwise.
ClassScore make_score(long tp, long fp, long fn);

struct EventScores {
  ClassScore detection;
  ClassScore migration;
  ClassScore division;
};

struct MotaScore {
  long fn = 0, fp = 0, ids = 0, gt = 0;
  double mota = 1;
};

EventScores score_events(const LineageForest& pred, const LineageForest& gt, std::span<const LabelMask> masks);

MotaScore score_mota(const LineageForest& pred, const LineageForest& gt, double match_radius = 15.0);

nlohmann::json to_json(const EventScores& events, const MotaScore& mota);
std::string format_table(const EventScores& events, const MotaScore& mota);

}  // namespace celltrack
