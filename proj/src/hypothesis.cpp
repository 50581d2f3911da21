#include "celltrack/hypothesis.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

namespace celltrack {

namespace {

// Clockwise on screen, starting west.
const std::array<Pixel, 8> kMoore = {
    Pixel(-1, 0), Pixel(-1, -1), Pixel(0, -1), Pixel(1, -1),
    Pixel(1, 0),  Pixel(1, 1),   Pixel(0, 1),  Pixel(-1, 1),
};

bool raster_less(const Pixel& p, const Pixel& q) { return p.y() != q.y() ? p.y() < q.y() : p.x() < q.x(); }

std::vector<std::vector<Pixel>> flood_fill(const LabelMask& mask, auto&& same_region) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> seen =
      Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(h, w);
  std::vector<std::vector<Pixel>> regions;
  std::vector<Pixel> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask(y, x) == 0 || seen(y, x)) continue;
      std::vector<Pixel> region;
      stack.assign(1, Pixel(x, y));
      seen(y, x) = 1;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        region.push_back(p);
        for (const Pixel& d : kMoore) {
          const Pixel q = p + d;
          if (q.x() < 0 || q.y() < 0 || q.x() >= w || q.y() >= h) continue;
          if (seen(q.y(), q.x()) || mask(q.y(), q.x()) == 0) continue;
          if (!same_region(mask(p.y(), p.x()), mask(q.y(), q.x()))) continue;
          seen(q.y(), q.x()) = 1;
          stack.push_back(q);
        }
      }
      std::sort(region.begin(), region.end(), raster_less);
      regions.push_back(std::move(region));
    }
  }
  return regions;
}

double shoelace(const std::vector<Point2>& pts) {
  double s = 0;
  for (std::size_t i = 0, n = pts.size(); i < n; ++i) {
    const Point2& p = pts[i];
    const Point2& q = pts[(i + 1) % n];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return s / 2;
}

std::vector<Point2> gather(std::span<const Contourlet> contourlets, const Cluster& cluster) {
  std::vector<Point2> pts;
  for (int idx : cluster) {
    const auto& c = contourlets[static_cast<std::size_t>(idx)].points;
    pts.insert(pts.end(), c.begin(), c.end());
  }
  return pts;
}

struct FitResult {
  Ellipse ellipse;
  bool ok = false;
};

FitResult try_fit(std::span<const Point2> pts, double max_axis) {
  FitResult r;
  if (pts.size() < 7) return r;
  try {
    r.ellipse = fit_ellipse<double>(pts);
    r.ok = r.ellipse.a <= max_axis;
  } catch (const Error&) {
    r.ok = false;
  }
  return r;
}

double regularized_distance(std::span<const Contourlet> contourlets, const Cluster& merged, const Ellipse& e) {
  std::vector<bool> in_merged(contourlets.size(), false);
  for (int idx : merged) in_merged[static_cast<std::size_t>(idx)] = true;
  double evidence = 0;
  for (std::size_t l = 0; l < contourlets.size(); ++l) {
    const auto& pts = contourlets[l].points;
    if (pts.empty()) continue;
    evidence += in_merged[l] ? hausdorff_to_ellipse<double>(pts, e, HausdorffMode::Full)
                             : hausdorff_to_ellipse<double>(pts, e, HausdorffMode::InsideOnly);
  }
  const double ec = eccentricity(e);
  return evidence * circumference(e) * std::sqrt(1.0 / (1.0 + ec * ec));
}

Cluster merge_clusters(const Cluster& a, const Cluster& b) {
  Cluster out(a);
  out.insert(out.end(), b.begin(), b.end());
  std::sort(out.begin(), out.end());
  return out;
}

double cluster_distance_impl(std::span<const Contourlet> contourlets, const Cluster& merged, double max_axis) {
  const auto pts = gather(contourlets, merged);
  const auto fit = try_fit(pts, max_axis);
  if (!fit.ok) return std::numeric_limits<double>::infinity();
  return regularized_distance(contourlets, merged, fit.ellipse);
}

}  // namespace

std::size_t HierarchyTree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const HierarchyNode& n) { return n.children.empty(); }));
}

std::vector<Component> connected_components(const LabelMask& mask, int min_area) {
  std::set<std::uint16_t> labels;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    if (mask.data()[i] != 0) labels.insert(mask.data()[i]);

  std::vector<std::vector<Pixel>> regions;
  if (labels.size() <= 1) {
    regions = flood_fill(mask, [](std::uint16_t, std::uint16_t) { return true; });
  } else {
    std::map<std::uint16_t, std::vector<Pixel>> by_label;
    for (int y = 0; y < mask.rows(); ++y)
      for (int x = 0; x < mask.cols(); ++x)
        if (mask(y, x) != 0) by_label[mask(y, x)].emplace_back(x, y);
    for (auto& [label, px] : by_label) regions.push_back(std::move(px));
    std::sort(regions.begin(), regions.end(),
              [](const auto& a, const auto& b) { return raster_less(a.front(), b.front()); });
  }

  std::vector<Component> out;
  for (auto& region : regions) {
    if (static_cast<int>(region.size()) < min_area) continue;
    Component c;
    c.id = static_cast<int>(out.size());
    c.label = mask(region.front().y(), region.front().x());
    Point2 sum = Point2::Zero();
    for (const Pixel& p : region) sum += p.cast<double>();
    c.centroid = sum / static_cast<double>(region.size());
    c.pixels = std::move(region);
    out.push_back(std::move(c));
  }
  return out;
}

Contour trace_contour(const Component& component) {
  Contour contour;
  contour.component_id = component.id;
  if (component.pixels.empty()) return contour;

  Pixel lo = component.pixels.front(), hi = component.pixels.front();
  for (const Pixel& p : component.pixels) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Pixel origin = lo - Pixel(1, 1);
  const int w = hi.x() - lo.x() + 3, h = hi.y() - lo.y() + 3;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(w * h), 0);
  auto at = [&](const Pixel& p) -> std::uint8_t& { return grid[static_cast<std::size_t>(p.y() * w + p.x())]; };
  for (const Pixel& p : component.pixels) at(p - origin) = 1;

  const Pixel start = *std::min_element(component.pixels.begin(), component.pixels.end(), raster_less) - origin;
  std::vector<Pixel> trace{start};
  constexpr int kStartBacktrack = 0;  // west of the first raster pixel is background
  Pixel cur = start;
  int back = kStartBacktrack;
  const std::size_t cap = 4 * component.pixels.size() + 16;
  while (trace.size() < cap) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (at(cur + kMoore[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const Pixel next = cur + kMoore[found];
    const Pixel prev = cur + kMoore[(found + 7) % 8];
    const Pixel rel = prev - next;
    back = static_cast<int>(std::find(kMoore.begin(), kMoore.end(), rel) - kMoore.begin());
    cur = next;
    if (cur == start && back == kStartBacktrack) break;
    trace.push_back(cur);
  }

  std::set<std::pair<int, int>> seen;
  for (const Pixel& p : trace) {
    if (!seen.insert({p.x(), p.y()}).second) continue;
    contour.points.emplace_back(p.x() + origin.x(), p.y() + origin.y());
  }
  if (shoelace(contour.points) < 0) std::reverse(contour.points.begin(), contour.points.end());
  return contour;
}

std::vector<double> contour_curvature(const Contour& contour, double sigma) {
  const auto n = static_cast<int>(contour.points.size());
  std::vector<double> kappa(static_cast<std::size_t>(n), 0.0);
  if (n < 3) return kappa;

  // Smoothing and differences run over consecutive boundary pixels (steps of
  // 1 or sqrt(2) px). The curvature formula is invariant to the speed of the
  // parameterization, so no explicit arc-length normalization is needed.
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = sigma > 0 ? std::exp(-0.5 * k * k / (sigma * sigma)) : (k == 0 ? 1.0 : 0.0);
    kernel[static_cast<std::size_t>(k + radius)] = v;
    norm += v;
  }
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  std::vector<Point2> smooth(static_cast<std::size_t>(n), Point2::Zero());
  for (int i = 0; i < n; ++i) {
    Point2 acc = Point2::Zero();
    for (int k = -radius; k <= radius; ++k)
      acc += kernel[static_cast<std::size_t>(k + radius)] * contour.points[static_cast<std::size_t>(wrap(i + k))];
    smooth[static_cast<std::size_t>(i)] = acc / norm;
  }
  for (int i = 0; i < n; ++i) {
    const Point2& pm = smooth[static_cast<std::size_t>(wrap(i - 1))];
    const Point2& p0 = smooth[static_cast<std::size_t>(i)];
    const Point2& pp = smooth[static_cast<std::size_t>(wrap(i + 1))];
    const Point2 d1 = (pp - pm) / 2;
    const Point2 d2 = pp - 2 * p0 + pm;
    const double speed = d1.norm();
    kappa[static_cast<std::size_t>(i)] =
        speed > 0 ? (d1.x() * d2.y() - d1.y() * d2.x()) / (speed * speed * speed) : 0.0;
  }
  return kappa;
}

std::vector<int> curvature_split_points(const Contour& contour, int suppression_radius, double kappa_min,
                                        double sigma, int max_count) {
  const auto n = static_cast<int>(contour.points.size());
  std::vector<int> picks;
  if (n < 3 * suppression_radius || n < 3) return picks;
  const auto kappa = contour_curvature(contour, sigma);
  std::vector<bool> suppressed(static_cast<std::size_t>(n), false);
  while (max_count < 0 || static_cast<int>(picks.size()) < max_count) {
    int best = -1;
    double best_mag = kappa_min;
    for (int i = 0; i < n; ++i) {
      const double mag = std::abs(kappa[static_cast<std::size_t>(i)]);
      if (!suppressed[static_cast<std::size_t>(i)] && mag > best_mag) {
        best_mag = mag;
        best = i;
      }
    }
    if (best < 0) break;
    picks.push_back(best);
    for (int k = -suppression_radius; k <= suppression_radius; ++k)
      suppressed[static_cast<std::size_t>(((best + k) % n + n) % n)] = true;
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

std::vector<Contourlet> split_contourlets(const Contour& contour, std::span<const int> splits) {
  std::vector<Contourlet> out;
  const auto n = static_cast<int>(contour.points.size());
  if (splits.empty()) {
    out.push_back({contour.points});
    return out;
  }
  const auto k = splits.size();
  for (std::size_t i = 0; i < k; ++i) {
    const int begin = splits[i];
    const int end = i + 1 < k ? splits[i + 1] : splits[0] + n;
    Contourlet c;
    for (int j = begin; j < end; ++j) c.points.push_back(contour.points[static_cast<std::size_t>(j % n)]);
    out.push_back(std::move(c));
  }
  return out;
}

double cluster_distance(std::span<const Contourlet> contourlets, const Cluster& ci, const Cluster& cj) {
  return cluster_distance_impl(contourlets, merge_clusters(ci, cj), std::numeric_limits<double>::infinity());
}

namespace {

std::vector<Contourlet> prepare_impl(std::vector<Contourlet> cs, int max_leaves, double max_axis) {
  auto fittable = [&](const Contourlet& c) { return try_fit(c.points, max_axis).ok; };
  while (cs.size() > 1) {
    const auto n = cs.size();
    std::size_t target = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (cs[i].points.size() < 7 || !fittable(cs[i])) {
        target = i;
        break;
      }
    }
    if (target == n) {
      if (max_leaves <= 0 || static_cast<int>(n) <= max_leaves) break;
      target = static_cast<std::size_t>(
          std::min_element(cs.begin(), cs.end(),
                           [](const Contourlet& a, const Contourlet& b) { return a.points.size() < b.points.size(); }) -
          cs.begin());
    }
    const std::size_t prev = (target + n - 1) % n, next = (target + 1) % n;
    const bool use_prev = cs[prev].points.size() < cs[next].points.size();
    const std::size_t first = use_prev ? prev : target;
    const std::size_t second = use_prev ? target : next;
    Contourlet merged;
    merged.points = cs[first].points;
    merged.points.insert(merged.points.end(), cs[second].points.begin(), cs[second].points.end());
    // `second` follows `first` cyclically; when it wraps to index 0 the merged
    // contourlet takes the front slot so the list stays in contour order.
    if (second < first) {
      cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(first));
      cs[second] = std::move(merged);
    } else {
      cs[first] = std::move(merged);
      cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(second));
    }
  }
  return cs;
}

HierarchyTree build_impl(std::vector<Contourlet> contourlets, int frame, int component_id, int max_leaves,
                         double max_axis) {
  std::size_t total = 0;
  for (const auto& c : contourlets) total += c.points.size();
  if (contourlets.empty() || total < 7)
    throw Error(ErrorCode::DegenerateComponent, "component has fewer than 7 contour points");

  HierarchyTree tree;
  tree.frame = frame;
  tree.component_id = component_id;
  tree.contourlets = prepare_impl(std::move(contourlets), max_leaves, max_axis);
  const auto& cs = tree.contourlets;
  const auto k = static_cast<int>(cs.size());

  auto make_node = [&](Cluster cluster, std::vector<int> children) {
    HierarchyNode node;
    node.id = static_cast<int>(tree.nodes.size());
    const auto pts = gather(cs, cluster);
    const auto fit = try_fit(pts, max_axis);
    node.valid = fit.ok;
    if (fit.ok) {
      node.ellipse = fit.ellipse;
      node.fit_error = mean_boundary_distance<double>(pts, fit.ellipse);
    } else {
      node.fit_error = std::numeric_limits<double>::infinity();
    }
    node.cluster = std::move(cluster);
    node.children = std::move(children);
    for (int c : node.children) tree.nodes[static_cast<std::size_t>(c)].parent = node.id;
    tree.nodes.push_back(std::move(node));
    return tree.nodes.back().id;
  };

  for (int i = 0; i < k; ++i) make_node({i}, {});

  std::unordered_map<std::uint64_t, double> cache;
  auto key = [](const Cluster& c) {
    std::uint64_t m = 0;
    for (int i : c) m |= std::uint64_t{1} << static_cast<unsigned>(i);
    return m;
  };
  std::vector<int> active(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) active[static_cast<std::size_t>(i)] = i;
  while (active.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bp = 0, bq = 1;
    for (std::size_t p = 0; p < active.size(); ++p) {
      for (std::size_t q = p + 1; q < active.size(); ++q) {
        const Cluster merged = merge_clusters(tree.nodes[static_cast<std::size_t>(active[p])].cluster,
                                              tree.nodes[static_cast<std::size_t>(active[q])].cluster);
        const auto mk = k <= 64 ? key(merged) : 0;
        double d;
        if (auto it = cache.find(mk); k <= 64 && it != cache.end()) {
          d = it->second;
        } else {
          d = cluster_distance_impl(cs, merged, max_axis);
          if (k <= 64) cache.emplace(mk, d);
        }
        if (d < best) {
          best = d;
          bp = p;
          bq = q;
        }
      }
    }
    const int left = active[bp], right = active[bq];
    const int id = make_node(merge_clusters(tree.nodes[static_cast<std::size_t>(left)].cluster,
                                            tree.nodes[static_cast<std::size_t>(right)].cluster),
                             {left, right});
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bq));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bp));
    active.push_back(id);
  }
  tree.root = active.front();
  if (!tree.nodes[static_cast<std::size_t>(tree.root)].valid)
    throw Error(ErrorCode::DegenerateComponent, "no ellipse can be fitted to the whole component");
  return tree;
}

}  // namespace

std::vector<Contourlet> prepare_contourlets(std::vector<Contourlet> contourlets, int max_leaves) {
  return prepare_impl(std::move(contourlets), max_leaves, std::numeric_limits<double>::infinity());
}

HierarchyTree build_hierarchy(std::vector<Contourlet> contourlets, int frame, int component_id, int max_leaves) {
  return build_impl(std::move(contourlets), frame, component_id, max_leaves,
                    std::numeric_limits<double>::infinity());
}

std::vector<ExclusionSet> exclusion_sets(const HierarchyTree& tree) {
  std::vector<ExclusionSet> out;
  std::vector<int> path;
  auto walk = [&](auto&& self, int id) -> void {
    path.push_back(id);
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.children.empty()) {
      out.push_back({path});
    } else {
      for (int c : node.children) self(self, c);
    }
    path.pop_back();
  };
  if (!tree.nodes.empty()) walk(walk, tree.root);
  return out;
}

std::vector<std::vector<int>> level_cuts(const HierarchyTree& tree) {
  std::vector<int> current;
  std::vector<int> internal;
  for (const auto& n : tree.nodes) (n.children.empty() ? current : internal).push_back(n.id);
  std::vector<std::vector<int>> cuts{current};
  for (int id : internal) {
    const auto& children = tree.nodes[static_cast<std::size_t>(id)].children;
    std::erase_if(current, [&](int x) { return std::find(children.begin(), children.end(), x) != children.end(); });
    current.push_back(id);
    std::vector<int> sorted(current);
    std::sort(sorted.begin(), sorted.end());
    cuts.push_back(sorted);
  }
  return cuts;
}

FrameHypotheses generate_frame_hypotheses(const LabelMask& mask, int frame, const HypothesisConfig& config) {
  FrameHypotheses out;
  out.frame = frame;
  for (const auto& comp : connected_components(mask, config.min_area)) {
    const Contour contour = trace_contour(comp);
    if (contour.points.size() < 7) continue;
    const auto splits = curvature_split_points(contour, config.suppression_radius, config.kappa_min,
                                               config.smoothing_sigma, config.max_leaves);
    auto pieces = split_contourlets(contour, splits);
    Pixel lo = comp.pixels.front(), hi = comp.pixels.front();
    for (const Pixel& p : comp.pixels) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    // A cell cannot be larger than the component that contains it.
    const double max_axis = (hi - lo).cast<double>().norm() + 2.0;
    try {
      ComponentHierarchy ch;
      ch.component_id = comp.id;
      ch.centroid = comp.centroid;
      ch.area = comp.area();
      ch.tree = build_impl(std::move(pieces), frame, comp.id, config.max_leaves, max_axis);
      out.components.push_back(std::move(ch));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateComponent) throw;
    }
  }
  return out;
}

std::vector<FrameHypotheses> generate_sequence_hypotheses(std::span<const LabelMask> masks,
                                                          const HypothesisConfig& config, int workers) {
  std::vector<FrameHypotheses> out(masks.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t t = next++; t < masks.size(); t = next++) {
      try {
        out[t] = generate_frame_hypotheses(masks[t], static_cast<int>(t) + 1, config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(masks.size())));
  if (n == 1) {
    work();
    if (failure) std::rethrow_exception(failure);
    return out;
  }
  std::vector<std::jthread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(work);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace celltrack
