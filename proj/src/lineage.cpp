#include "celltrack/lineage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "celltrack/error.hpp"

namespace celltrack {

namespace fs = std::filesystem;

const Track* LineageForest::find(int id) const {
  auto it = std::lower_bound(tracks.begin(), tracks.end(), id, [](const Track& t, int v) { return t.id < v; });
  if (it != tracks.end() && it->id == id) return &*it;
  for (const auto& t : tracks)
    if (t.id == id) return &t;
  return nullptr;
}

std::vector<int> LineageForest::children(int id) const {
  std::vector<int> out;
  for (const auto& t : tracks)
    if (t.parent == id) out.push_back(t.id);
  return out;
}

std::string lineage_problem(const LineageForest& forest) {
  std::map<int, int> child_count;
  for (const auto& t : forest.tracks) {
    if (t.begin > t.end) return fmt::format("track {} ends before it begins", t.id);
    if (static_cast<int>(t.points.size()) != t.end - t.begin + 1)
      return fmt::format("track {} does not cover frames {}..{}", t.id, t.begin, t.end);
    for (std::size_t k = 0; k < t.points.size(); ++k)
      if (t.points[k].frame != t.begin + static_cast<int>(k)) return fmt::format("track {} skips a frame", t.id);
    if (t.parent != 0) {
      const Track* p = forest.find(t.parent);
      if (!p) return fmt::format("track {} has unknown parent {}", t.id, t.parent);
      if (p->end != t.begin - 1) return fmt::format("track {} does not start right after parent {}", t.id, t.parent);
      ++child_count[t.parent];
    }
  }
  for (const auto& [parent, n] : child_count)
    if (n != 2) return fmt::format("track {} has {} children", parent, n);
  return {};
}

LineageForest decode(const Eigen::VectorXd& flow, const TrackingGraph& graph) {
  const int n = static_cast<int>(graph.vertices.size());
  const int m = static_cast<int>(graph.migrations.size());
  if (flow.size() != m + 3 * n) throw Error(ErrorCode::InfeasibleFlow, "flow vector does not match the graph");
  auto on = [&](int k) { return flow(k) > 0.5; };

  for (int v = 0; v < n; ++v) {
    int in = on(m + 3 * v) + on(m + 3 * v + 1), out = on(m + 3 * v + 2), activation = on(m + 3 * v);
    for (int e : graph.in_edges[static_cast<std::size_t>(v)]) {
      in += on(e);
      activation += on(e);
    }
    for (int e : graph.out_edges[static_cast<std::size_t>(v)]) out += on(e);
    if (in != out) throw Error(ErrorCode::InfeasibleFlow, fmt::format("flow not conserved at vertex {}", v));
    if (on(m + 3 * v + 1) && activation == 0)
      throw Error(ErrorCode::InfeasibleFlow, fmt::format("division without a cell at vertex {}", v));
  }

  // Working tracks keyed by creation order; renumbered at the end.
  std::vector<Track> work;
  std::vector<std::vector<int>> arriving(static_cast<std::size_t>(n));
  auto start = [&](int v, int parent) {
    Track t;
    t.parent = parent;
    t.begin = graph.vertices[static_cast<std::size_t>(v)].frame;
    work.push_back(std::move(t));
    arriving[static_cast<std::size_t>(v)].push_back(static_cast<int>(work.size()) - 1);
  };

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) order[static_cast<std::size_t>(v)] = v;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return graph.vertices[static_cast<std::size_t>(a)].frame < graph.vertices[static_cast<std::size_t>(b)].frame;
  });
  // Appearances are known up front; migrations are propagated frame by frame.
  for (int v : order)
    if (on(m + 3 * v)) start(v, -1);

  for (int v : order) {
    auto& incoming = arriving[static_cast<std::size_t>(v)];
    if (incoming.empty()) continue;
    std::sort(incoming.begin(), incoming.end());
    const int primary = incoming.front();
    const auto& vx = graph.vertices[static_cast<std::size_t>(v)];
    work[static_cast<std::size_t>(primary)].points.push_back({vx.frame, v, vx.ellipse});

    std::vector<int> outs;
    for (int e : graph.out_edges[static_cast<std::size_t>(v)])
      if (on(e)) outs.push_back(graph.migrations[static_cast<std::size_t>(e)].to);
    std::sort(outs.begin(), outs.end());

    if (on(m + 3 * v + 1) && outs.size() >= 2) {
      for (int w : outs) start(w, primary);
      continue;
    }
    for (std::size_t k = 0; k < outs.size(); ++k) {
      if (k == 0)
        arriving[static_cast<std::size_t>(outs[k])].push_back(primary);
      else
        start(outs[k], -1);
    }
  }

  for (auto& t : work) {
    if (t.points.empty()) continue;
    t.begin = t.points.front().frame;
    t.end = t.points.back().frame;
  }
  std::vector<int> idx;
  for (std::size_t k = 0; k < work.size(); ++k)
    if (!work[k].points.empty()) idx.push_back(static_cast<int>(k));
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const auto& ta = work[static_cast<std::size_t>(a)];
    const auto& tb = work[static_cast<std::size_t>(b)];
    if (ta.begin != tb.begin) return ta.begin < tb.begin;
    return ta.points.front().vertex < tb.points.front().vertex;
  });
  std::vector<int> label(work.size(), 0);
  for (std::size_t k = 0; k < idx.size(); ++k) label[static_cast<std::size_t>(idx[k])] = static_cast<int>(k) + 1;

  LineageForest forest;
  forest.frames = graph.frames;
  for (int k : idx) {
    Track t = std::move(work[static_cast<std::size_t>(k)]);
    t.id = label[static_cast<std::size_t>(k)];
    t.parent = t.parent >= 0 ? label[static_cast<std::size_t>(t.parent)] : 0;
    forest.tracks.push_back(std::move(t));
  }
  return forest;
}

Eigen::VectorXd encode(const LineageForest& forest, const TrackingGraph& graph) {
  const int n = static_cast<int>(graph.vertices.size());
  const int m = static_cast<int>(graph.migrations.size());
  std::map<std::pair<int, int>, int> edge;
  for (int e = 0; e < m; ++e) edge[{graph.migrations[static_cast<std::size_t>(e)].from, graph.migrations[static_cast<std::size_t>(e)].to}] = e;
  auto edge_of = [&](int a, int b) {
    auto it = edge.find({a, b});
    if (it == edge.end()) throw Error(ErrorCode::InfeasibleFlow, fmt::format("no migration edge {} -> {}", a, b));
    return it->second;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(m + 3 * n);
  for (const auto& t : forest.tracks) {
    if (t.points.empty()) continue;
    const int first = t.points.front().vertex;
    if (first < 0) throw Error(ErrorCode::InfeasibleFlow, "track point without a graph vertex");
    if (t.parent == 0) {
      x(m + 3 * first) = 1;
    } else {
      const Track* p = forest.find(t.parent);
      if (!p || p->points.empty()) throw Error(ErrorCode::InfeasibleFlow, "missing parent track");
      const int last = p->points.back().vertex;
      x(edge_of(last, first)) = 1;
      x(m + 3 * last + 1) = 1;
    }
    for (std::size_t k = 1; k < t.points.size(); ++k) x(edge_of(t.points[k - 1].vertex, t.points[k].vertex)) = 1;
    if (forest.children(t.id).empty()) x(m + 3 * t.points.back().vertex + 2) = 1;
  }
  return x;
}

void write_tracks(const LineageForest& forest, const fs::path& out_dir, const std::string& track_file) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, fmt::format("cannot create {}", out_dir.string()));
  std::vector<const Track*> sorted;
  for (const auto& t : forest.tracks) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::ofstream tf(out_dir / track_file, std::ios::binary);
  if (!tf) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", (out_dir / track_file).string()));
  for (const Track* t : sorted) tf << fmt::format("{} {} {} {}\n", t->id, t->begin, t->end, t->parent);
  if (!tf) throw Error(ErrorCode::IoFailure, "track file write failed");

  int frames = forest.frames;
  for (const auto& t : forest.tracks) frames = std::max(frames, t.end);
  for (int f = 1; f <= frames; ++f) {
    const auto path = out_dir / fmt::format("ellipses_t{:04d}.csv", f);
    std::ofstream cf(path, std::ios::binary);
    if (!cf) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
    cf << "track,cx,cy,a,b,theta\n";
    for (const Track* t : sorted) {
      if (f < t->begin || f > t->end) continue;
      const auto& e = t->points[static_cast<std::size_t>(f - t->begin)].ellipse;
      cf << fmt::format("{},{},{},{},{},{}\n", t->id, e.cx(), e.cy(), e.a, e.b, e.theta);
    }
    if (!cf) throw Error(ErrorCode::IoFailure, "ellipse file write failed");
  }
}

LineageForest read_tracks(const fs::path& dir, const std::string& track_file) {
  std::ifstream tf(dir / track_file);
  if (!tf) throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", (dir / track_file).string()));
  LineageForest forest;
  std::string line;
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Track t;
    if (!(ss >> t.id >> t.begin >> t.end >> t.parent) || t.begin > t.end || t.id <= 0)
      throw Error(ErrorCode::IoFailure, fmt::format("malformed track line '{}'", line));
    for (int f = t.begin; f <= t.end; ++f) t.points.push_back({f, -1, Ellipse{}});
    forest.tracks.push_back(std::move(t));
  }
  std::sort(forest.tracks.begin(), forest.tracks.end(), [](const Track& a, const Track& b) { return a.id < b.id; });

  int csv_frames = 0;
  for (int f = 1;; ++f) {
    const auto path = dir / fmt::format("ellipses_t{:04d}.csv", f);
    if (!fs::exists(path)) break;
    csv_frames = f;
    std::ifstream cf(path);
    std::getline(cf, line);  // header
    while (std::getline(cf, line)) {
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ss(line);
      int id;
      double cx, cy, a, b, theta;
      if (!(ss >> id >> cx >> cy >> a >> b >> theta))
        throw Error(ErrorCode::IoFailure, fmt::format("malformed ellipse row in {}", path.string()));
      auto it = std::lower_bound(forest.tracks.begin(), forest.tracks.end(), id,
                                 [](const Track& t, int v) { return t.id < v; });
      if (it == forest.tracks.end() || it->id != id || f < it->begin || f > it->end)
        throw Error(ErrorCode::IoFailure, fmt::format("ellipse row for unknown track {} in frame {}", id, f));
      auto& e = it->points[static_cast<std::size_t>(f - it->begin)].ellipse;
      e.center = Point2(cx, cy);
      e.a = a;
      e.b = b;
      e.theta = theta;
    }
  }
  forest.frames = csv_frames;
  for (const auto& t : forest.tracks) forest.frames = std::max(forest.frames, t.end);
  return forest;
}

}  // namespace celltrack
