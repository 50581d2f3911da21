#pragma once

// Per-frame detection hypotheses: connected components of a label mask,
// their outer contours, curvature-based contourlets, and the agglomerative
// hierarchy of ellipses fitted to contourlet clusters.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "celltrack/geometry.hpp"

namespace celltrack {

/// Row-major label image: rows = height, cols = width, 0 = background.
using LabelMask = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Pixel = Eigen::Vector2i;  // (x, y)

struct Component {
  int id = 0;
  std::uint16_t label = 0;
  std::vector<Pixel> pixels;  // raster order
  Point2 centroid = Point2::Zero();

  int area() const { return static_cast<int>(pixels.size()); }
};

struct Contour {
  int component_id = 0;
  std::vector<Point2> points;  // closed, counter-clockwise in (x, y)
};

struct Contourlet {
  std::vector<Point2> points;  // open, contiguous along the parent contour
};

/// Contourlet indices forming one cluster.
using Cluster = std::vector<int>;

struct HierarchyNode {
  int id = 0;
  Ellipse ellipse;
  bool valid = true;  // false when no ellipse could be fitted to the cluster
  Cluster cluster;
  std::vector<int> children;  // 0 or 2 from build_hierarchy
  int parent = -1;
  double fit_error = 0;
};

/// Binary merge tree. Leaves come first (one per contourlet, in contour
/// order) followed by internal nodes in merge order; the root is last.
struct HierarchyTree {
  int frame = 0;
  int component_id = 0;
  int root = 0;
  std::vector<HierarchyNode> nodes;
  std::vector<Contourlet> contourlets;

  std::size_t num_leaves() const;
};

struct ExclusionSet {
  std::vector<int> members;  // node ids, root first, leaf last
};

struct HypothesisConfig {
  int min_area = 20;
  int suppression_radius = 7;
  double kappa_min = 0.15;
  double smoothing_sigma = 2.0;
  int max_leaves = 8;
};

/// 8-connected components of the foreground. A mask whose foreground carries
/// more than one distinct label is treated as an instance mask: each label
/// value is then its own component. Components below min_area are dropped.
std::vector<Component> connected_components(const LabelMask& mask, int min_area = 20);

/// Moore-neighbour trace of the outer boundary of a component.
Contour trace_contour(const Component& component);

/// Signed curvature of the Gaussian-smoothed closed contour at every point.
std::vector<double> contour_curvature(const Contour& contour, double sigma = 2.0);

/// Iterative non-maximum suppression over |curvature|. Returns indices sorted
/// along the contour. max_count < 0 means unbounded.
std::vector<int> curvature_split_points(const Contour& contour, int suppression_radius = 7,
                                        double kappa_min = 0.15, double sigma = 2.0, int max_count = -1);

std::vector<Contourlet> split_contourlets(const Contour& contour, std::span<const int> splits);

/// Merging criterion between clusters ci and cj of the given contourlets:
/// [sum over contourlets in ci u cj of h + sum over the rest of g] * c(e) *
/// sqrt(1 / (1 + ec(e)^2)) with e fitted to ci u cj. +inf when e is degenerate.
double cluster_distance(std::span<const Contourlet> contourlets, const Cluster& ci, const Cluster& cj);

/// Merges contourlets that are too short (<7 points) or cannot be fitted into
/// a cyclic neighbour, and caps the count at max_leaves.
std::vector<Contourlet> prepare_contourlets(std::vector<Contourlet> contourlets, int max_leaves);

HierarchyTree build_hierarchy(std::vector<Contourlet> contourlets, int frame, int component_id,
                              int max_leaves = 8);

/// One set per leaf: the node ids on its root-to-leaf path. Accepts any
/// rooted tree (unary links included).
std::vector<ExclusionSet> exclusion_sets(const HierarchyTree& tree);

/// Node sets of every dendrogram level: level m holds the clusters present
/// after m merges. Only meaningful for trees produced by build_hierarchy.
std::vector<std::vector<int>> level_cuts(const HierarchyTree& tree);

struct ComponentHierarchy {
  int component_id = 0;
  Point2 centroid = Point2::Zero();
  int area = 0;
  HierarchyTree tree;
};

struct FrameHypotheses {
  int frame = 0;
  std::vector<ComponentHierarchy> components;
};

/// Full per-frame pipeline. Components with no fittable ellipse are skipped.
FrameHypotheses generate_frame_hypotheses(const LabelMask& mask, int frame, const HypothesisConfig& config = {});

/// Runs generate_frame_hypotheses over a sequence (frame t+1 for masks[t]).
/// Uses up to `workers` threads; output order never depends on scheduling.
std::vector<FrameHypotheses> generate_sequence_hypotheses(std::span<const LabelMask> masks,
                                                          const HypothesisConfig& config = {}, int workers = 1);

}  // namespace celltrack
