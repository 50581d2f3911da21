#include "celltrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <fmt/format.h>

namespace celltrack {

ClassScore make_score(long tp, long fp, long fn) {
  ClassScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  const bool clean = fp == 0 && fn == 0;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : (clean ? 1.0 : 0.0);
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : (clean ? 1.0 : 0.0);
  s.f_measure = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

namespace {

template <class Key>
ClassScore match_multisets(const std::map<Key, long>& pred, const std::map<Key, long>& gt) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [k, n] : pred) {
    auto it = gt.find(k);
    const long g = it == gt.end() ? 0 : it->second;
    tp += std::min(n, g);
    fp += std::max(0L, n - g);
  }
  for (const auto& [k, g] : gt) {
    auto it = pred.find(k);
    const long n = it == pred.end() ? 0 : it->second;
    fn += std::max(0L, g - n);
  }
  return make_score(tp, fp, fn);
}

// Component lookup per frame: pixel -> component id.
struct FrameIndex {
  LabelMask owner;  // component id + 1, 0 for background
  int at(const Point2& p) const {
    const long x = std::lround(p.x()), y = std::lround(p.y());
    if (x < 0 || y < 0 || x >= owner.cols() || y >= owner.rows()) return -1;
    return static_cast<int>(owner(y, x)) - 1;
  }
};

struct Lifted {
  std::map<std::pair<int, int>, long> detection;             // (frame, comp)
  std::map<std::tuple<int, int, int>, long> migration;       // (frame, comp, next comp)
  std::map<std::tuple<int, int, int, int>, long> division;   // (frame, comp, daughter comps sorted)
};

Lifted lift(const LineageForest& forest, const std::vector<FrameIndex>& frames) {
  Lifted out;
  auto comp = [&](int frame, const Point2& p) {
    if (frame < 1 || frame > static_cast<int>(frames.size())) return -1;
    return frames[static_cast<std::size_t>(frame - 1)].at(p);
  };
  for (const auto& t : forest.tracks) {
    for (std::size_t k = 0; k < t.points.size(); ++k) {
      const auto& pt = t.points[k];
      ++out.detection[{pt.frame, comp(pt.frame, pt.ellipse.center)}];
      if (k + 1 < t.points.size()) {
        const auto& nx = t.points[k + 1];
        ++out.migration[{pt.frame, comp(pt.frame, pt.ellipse.center), comp(nx.frame, nx.ellipse.center)}];
      }
    }
    const auto kids = forest.children(t.id);
    if (kids.size() == 2 && !t.points.empty()) {
      const Track* a = forest.find(kids[0]);
      const Track* b = forest.find(kids[1]);
      if (a && b && !a->points.empty() && !b->points.empty()) {
        int ca = comp(a->begin, a->points.front().ellipse.center);
        int cb = comp(b->begin, b->points.front().ellipse.center);
        if (ca > cb) std::swap(ca, cb);
        ++out.division[{t.end, comp(t.end, t.points.back().ellipse.center), ca, cb}];
      }
    }
  }
  return out;
}

}  // namespace

EventScores score_events(const LineageForest& pred, const LineageForest& gt, std::span<const LabelMask> masks) {
  if (pred.frames != gt.frames || static_cast<int>(masks.size()) != gt.frames)
    throw Error(ErrorCode::FrameMismatch,
                fmt::format("frame counts differ: pred {}, gt {}, masks {}", pred.frames, gt.frames, masks.size()));
  std::vector<FrameIndex> frames;
  for (const auto& mask : masks) {
    FrameIndex fi;
    fi.owner = LabelMask::Zero(mask.rows(), mask.cols());
    for (const auto& c : connected_components(mask, 1))
      for (const auto& px : c.pixels) fi.owner(px.y(), px.x()) = static_cast<std::uint16_t>(c.id + 1);
    frames.push_back(std::move(fi));
  }
  const Lifted p = lift(pred, frames), g = lift(gt, frames);

  EventScores s;
  // Detection: cells counted per (frame, component); background hits are
  // never correct.
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [k, n] : p.detection) {
    auto it = g.detection.find(k);
    const long m = (it == g.detection.end() || k.second < 0) ? 0 : it->second;
    tp += std::min(n, m);
    fp += n - std::min(n, m);
  }
  for (const auto& [k, m] : g.detection) {
    auto it = p.detection.find(k);
    const long n = (it == p.detection.end() || k.second < 0) ? 0 : it->second;
    fn += m - std::min(n, m);
  }
  s.detection = make_score(tp, fp, fn);
  s.migration = match_multisets(p.migration, g.migration);
  s.division = match_multisets(p.division, g.division);
  return s;
}

MotaScore score_mota(const LineageForest& pred, const LineageForest& gt, double match_radius) {
  struct Obj {
    int id;
    Point2 c;
  };
  const int frames = std::max({pred.frames, gt.frames, 0});
  std::vector<std::vector<Obj>> P(static_cast<std::size_t>(frames + 1)), G(static_cast<std::size_t>(frames + 1));
  auto fill = [](const LineageForest& f, std::vector<std::vector<Obj>>& dst) {
    for (const auto& t : f.tracks)
      for (const auto& pt : t.points) {
        if (pt.frame < 0) continue;
        if (pt.frame >= static_cast<int>(dst.size())) dst.resize(static_cast<std::size_t>(pt.frame + 1));
        dst[static_cast<std::size_t>(pt.frame)].push_back({t.id, pt.ellipse.center});
      }
  };
  fill(pred, P);
  fill(gt, G);
  P.resize(std::max(P.size(), G.size()));
  G.resize(P.size());

  MotaScore s;
  std::map<int, int> identity;  // gt id -> last matched pred id
  const double r2 = match_radius * match_radius;
  for (std::size_t f = 0; f < G.size(); ++f) {
    auto& gs = G[f];
    auto& ps = P[f];
    std::sort(gs.begin(), gs.end(), [](const Obj& a, const Obj& b) { return a.id < b.id; });
    std::sort(ps.begin(), ps.end(), [](const Obj& a, const Obj& b) { return a.id < b.id; });
    struct Cand {
      double d2;
      std::size_t gi, pi;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < gs.size(); ++i)
      for (std::size_t j = 0; j < ps.size(); ++j) {
        const double d2 = (gs[i].c - ps[j].c).squaredNorm();
        if (d2 <= r2) cands.push_back({d2, i, j});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return std::tie(a.d2, a.gi, a.pi) < std::tie(b.d2, b.gi, b.pi);
    });
    std::vector<bool> gm(gs.size(), false), pm(ps.size(), false);
    long matched = 0;
    for (const auto& c : cands) {
      if (gm[c.gi] || pm[c.pi]) continue;
      gm[c.gi] = pm[c.pi] = true;
      ++matched;
      const int gid = gs[c.gi].id, pid = ps[c.pi].id;
      auto it = identity.find(gid);
      if (it != identity.end() && it->second != pid) ++s.ids;
      identity[gid] = pid;
    }
    s.gt += static_cast<long>(gs.size());
    s.fn += static_cast<long>(gs.size()) - matched;
    s.fp += static_cast<long>(ps.size()) - matched;
  }
  s.mota = s.gt > 0 ? 1.0 - static_cast<double>(s.fn + s.fp + s.ids) / static_cast<double>(s.gt)
                    : (s.fp == 0 ? 1.0 : 0.0);
  return s;
}

nlohmann::json to_json(const EventScores& events, const MotaScore& mota) {
  auto cls = [](const ClassScore& c) {
    return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
                          {"recall", c.recall}, {"precision", c.precision}, {"f_measure", c.f_measure}};
  };
  return {{"detection", cls(events.detection)},
          {"migration", cls(events.migration)},
          {"division", cls(events.division)},
          {"mota", {{"mota", mota.mota}, {"fn", mota.fn}, {"fp", mota.fp}, {"ids", mota.ids}, {"gt", mota.gt}}}};
}

std::string format_table(const EventScores& events, const MotaScore& mota) {
  std::string out = fmt::format("{:<10} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}\n", "event", "recall", "precision",
                                "F", "tp", "fp", "fn");
  auto row = [&](const char* name, const ClassScore& c) {
    out += fmt::format("{:<10} {:>8.4f} {:>8.4f} {:>8.4f} {:>6} {:>6} {:>6}\n", name, c.recall, c.precision,
                       c.f_measure, c.tp, c.fp, c.fn);
  };
  row("division", events.division);
  row("detection", events.detection);
  row("migration", events.migration);
  out += fmt::format("MOTA {:.4f} (fn {}, fp {}, ids {}, gt {})\n", mota.mota, mota.fn, mota.fp, mota.ids, mota.gt);
  return out;
}

}  // namespace celltrack
