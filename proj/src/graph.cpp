#include "celltrack/graph.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace celltrack {

void TrackingGraph::index() {
  out_edges.assign(vertices.size(), {});
  in_edges.assign(vertices.size(), {});
  for (std::size_t e = 0; e < migrations.size(); ++e) {
    out_edges[static_cast<std::size_t>(migrations[e].from)].push_back(static_cast<int>(e));
    in_edges[static_cast<std::size_t>(migrations[e].to)].push_back(static_cast<int>(e));
  }
}

TrackingGraph build_graph(std::span<const FrameHypotheses> frames, double gate_distance) {
  if (!(gate_distance > 0)) throw Error(ErrorCode::ConfigInvalid, "gate distance must be positive");
  std::vector<const FrameHypotheses*> ordered;
  for (const auto& f : frames) ordered.push_back(&f);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->frame < b->frame; });

  TrackingGraph g;
  for (const auto* f : ordered) {
    g.frames = std::max(g.frames, f->frame);
    for (const auto& comp : f->components) {
      GraphTree gt;
      gt.tree = comp.tree;
      gt.tree.frame = f->frame;
      gt.centroid = comp.centroid;
      gt.vertex_of_node.assign(comp.tree.nodes.size(), -1);
      const int tree_index = static_cast<int>(g.trees.size());
      for (const auto& node : comp.tree.nodes) {
        if (!node.valid) continue;
        Vertex v;
        v.id = static_cast<int>(g.vertices.size());
        v.frame = f->frame;
        v.ellipse = node.ellipse;
        v.component_id = comp.component_id;
        v.tree_index = tree_index;
        v.node_id = node.id;
        v.fit_error = node.fit_error;
        v.component_centroid = comp.centroid;
        gt.vertex_of_node[static_cast<std::size_t>(node.id)] = v.id;
        g.vertices.push_back(v);
      }
      for (const auto& set : exclusion_sets(comp.tree)) {
        std::vector<int> members;
        for (int node : set.members)
          if (int v = gt.vertex_of_node[static_cast<std::size_t>(node)]; v >= 0) members.push_back(v);
        if (!members.empty()) g.exclusion_sets.push_back(std::move(members));
      }
      g.trees.push_back(std::move(gt));
    }
  }

  std::map<int, std::vector<int>> by_frame;
  for (const auto& v : g.vertices) by_frame[v.frame].push_back(v.id);
  const double gate2 = gate_distance * gate_distance;
  for (const auto& [frame, ids] : by_frame) {
    const auto next = by_frame.find(frame + 1);
    if (next == by_frame.end()) continue;
    for (int i : ids) {
      const auto& vi = g.vertices[static_cast<std::size_t>(i)];
      for (int j : next->second) {
        const auto& vj = g.vertices[static_cast<std::size_t>(j)];
        if ((vi.component_centroid - vj.component_centroid).squaredNorm() <= gate2) g.migrations.push_back({i, j});
      }
    }
  }
  g.index();
  return g;
}

TrackingGraph best_hierarchy_filter(const TrackingGraph& graph) {
  std::vector<bool> keep(graph.vertices.size(), false);
  for (const auto& gt : graph.trees) {
    const auto cuts = level_cuts(gt.tree);
    double best = std::numeric_limits<double>::infinity();
    const std::vector<int>* chosen = nullptr;
    for (const auto& cut : cuts) {
      double sum = 0;
      bool usable = true;
      for (int node : cut) {
        if (gt.vertex_of_node[static_cast<std::size_t>(node)] < 0) {
          usable = false;
          break;
        }
        sum += gt.tree.nodes[static_cast<std::size_t>(node)].fit_error;
      }
      if (!usable || cut.empty()) continue;
      const double mean = sum / static_cast<double>(cut.size());
      // Ties go to the coarser level (fewer clusters).
      if (mean <= best) {
        best = mean;
        chosen = &cut;
      }
    }
    if (!chosen) continue;
    for (int node : *chosen) keep[static_cast<std::size_t>(gt.vertex_of_node[static_cast<std::size_t>(node)])] = true;
  }

  TrackingGraph out;
  out.frames = graph.frames;
  std::vector<int> remap(graph.vertices.size(), -1);
  for (const auto& v : graph.vertices) {
    if (!keep[static_cast<std::size_t>(v.id)]) continue;
    Vertex nv = v;
    nv.id = static_cast<int>(out.vertices.size());
    remap[static_cast<std::size_t>(v.id)] = nv.id;
    out.vertices.push_back(nv);
    out.exclusion_sets.push_back({nv.id});
  }
  for (const auto& e : graph.migrations) {
    const int a = remap[static_cast<std::size_t>(e.from)], b = remap[static_cast<std::size_t>(e.to)];
    if (a >= 0 && b >= 0) out.migrations.push_back({a, b});
  }
  out.trees = graph.trees;
  for (auto& gt : out.trees)
    for (int& v : gt.vertex_of_node) v = v >= 0 ? remap[static_cast<std::size_t>(v)] : -1;
  out.index();
  return out;
}

ModelSize model_size(const TrackingGraph& graph) {
  ModelSize s;
  s.vertices = static_cast<long>(graph.vertices.size());
  s.exclusion_sets = static_cast<long>(graph.exclusion_sets.size());
  s.mean_out_degree = s.vertices > 0 ? static_cast<double>(graph.migrations.size()) / static_cast<double>(s.vertices) : 0.0;
  s.num_vars = 3 * s.vertices + static_cast<long>(graph.migrations.size());
  s.num_constraints = s.exclusion_sets + 2 * s.vertices;
  return s;
}

nlohmann::json to_json(const TrackingGraph& graph) {
  nlohmann::json j;
  j["frames"] = graph.frames;
  auto& vs = j["vertices"] = nlohmann::json::array();
  for (const auto& v : graph.vertices) {
    vs.push_back({{"id", v.id},
                  {"frame", v.frame},
                  {"component", v.component_id},
                  {"node", v.node_id},
                  {"cx", v.ellipse.cx()},
                  {"cy", v.ellipse.cy()},
                  {"a", v.ellipse.a},
                  {"b", v.ellipse.b},
                  {"theta", v.ellipse.theta},
                  {"fit_error", v.fit_error}});
  }
  auto& es = j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.migrations) es.push_back({e.from, e.to});
  j["exclusion_sets"] = graph.exclusion_sets;
  return j;
}

}  // namespace celltrack
