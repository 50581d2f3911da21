#pragma once

// Tracks with binary parentage, decoded from unit flows and serialized as
// `L B E P` track files plus per-frame ellipse CSVs.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "celltrack/graph.hpp"

namespace celltrack {

struct TrackPoint {
  int frame = 0;
  int vertex = -1;  // -1 when read from files
  Ellipse ellipse;
};

struct Track {
  int id = 0;
  int begin = 0;
  int end = 0;
  int parent = 0;  // 0 = none
  std::vector<TrackPoint> points;  // one per frame, begin..end
};

struct LineageForest {
  int frames = 0;
  std::vector<Track> tracks;  // ascending id

  const Track* find(int id) const;
  std::vector<int> children(int id) const;
};

/// Empty string when the forest satisfies the lineage invariants, otherwise
/// a description of the first violation.
std::string lineage_problem(const LineageForest& forest);

/// Walks unit flows of a binary solution. Tracks are numbered by
/// (start frame, first vertex id). A division vertex with fewer than two
/// migration outflows is treated as an ordinary continuation; merging flows
/// (only possible without exclusion rows) end every incoming track but the
/// lowest-numbered one before the merge vertex.
LineageForest decode(const Eigen::VectorXd& flow, const TrackingGraph& graph);

/// Inverse of decode for forests whose tracks follow graph vertices.
Eigen::VectorXd encode(const LineageForest& forest, const TrackingGraph& graph);

void write_tracks(const LineageForest& forest, const std::filesystem::path& out_dir,
                  const std::string& track_file = "res_track.txt");

/// Reads a track file and the ellipse CSVs beside it. The frame count is the
/// number of ellipse CSVs, or the largest end frame if there are none.
LineageForest read_tracks(const std::filesystem::path& dir, const std::string& track_file = "res_track.txt");

}  // namespace celltrack
