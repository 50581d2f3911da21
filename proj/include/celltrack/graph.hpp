#pragma once

// Spatio-temporal hypothesis graph: one vertex per fitted hierarchy node,
// migration edges between consecutive frames, implicit source / sink /
// division terminals (every vertex owns one edge to or from each), and the
// exclusion sets of all hierarchies.

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "celltrack/hypothesis.hpp"

namespace celltrack {

struct Vertex {
  int id = 0;
  int frame = 0;
  Ellipse ellipse;
  int component_id = 0;
  int tree_index = 0;  // into TrackingGraph::trees
  int node_id = 0;     // node of that tree
  double fit_error = 0;
  Point2 component_centroid = Point2::Zero();
};

struct MigrationEdge {
  int from = 0;
  int to = 0;
};

struct GraphTree {
  HierarchyTree tree;
  Point2 centroid = Point2::Zero();
  std::vector<int> vertex_of_node;  // -1 for nodes without a vertex
};

struct TrackingGraph {
  int frames = 0;
  std::vector<Vertex> vertices;
  std::vector<MigrationEdge> migrations;  // sorted by (from, to)
  std::vector<std::vector<int>> exclusion_sets;
  std::vector<GraphTree> trees;

  // Migration edge indices per vertex; rebuilt by index().
  std::vector<std::vector<int>> out_edges;
  std::vector<std::vector<int>> in_edges;

  void index();
  std::size_t num_vertices() const { return vertices.size(); }
};

struct ModelSize {
  long vertices = 0;        // N
  long exclusion_sets = 0;  // C
  double mean_out_degree = 0;  // K = |E'| / N
  long num_vars = 0;
  long num_constraints = 0;
};

/// Vertices are numbered by (frame, component, node). A migration edge joins
/// every pair of vertices in consecutive frames whose components' centroids
/// lie within gate_distance of each other.
TrackingGraph build_graph(std::span<const FrameHypotheses> frames, double gate_distance);

/// Keeps, per hierarchy, the dendrogram level with the lowest mean fit error.
/// Surviving vertices get singleton exclusion sets.
TrackingGraph best_hierarchy_filter(const TrackingGraph& graph);

ModelSize model_size(const TrackingGraph& graph);

nlohmann::json to_json(const TrackingGraph& graph);

}  // namespace celltrack
