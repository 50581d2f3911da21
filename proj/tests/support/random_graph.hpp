#pragma once

#include <random>

#include "celltrack/graph.hpp"
#include "celltrack/ilp.hpp"

namespace celltrack::testing {

/// Small tracking graph with 1..max_vertices vertices over 1..4 frames and
/// hierarchy-shaped exclusion sets. Migration edges are added while the
/// variable count stays within max_vars.
inline TrackingGraph random_graph(std::mt19937_64& rng, int max_vertices, int max_vars = 25) {
  std::uniform_int_distribution<int> nv(1, max_vertices), nf(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TrackingGraph g;
  const int n = std::min(nv(rng), max_vars / 3);
  g.frames = nf(rng);
  std::vector<int> frames(static_cast<std::size_t>(n));
  for (auto& f : frames) f = std::uniform_int_distribution<int>(1, g.frames)(rng);
  std::sort(frames.begin(), frames.end());
  for (int v = 0; v < n; ++v) {
    Vertex vx;
    vx.id = v;
    vx.frame = frames[static_cast<std::size_t>(v)];
    vx.ellipse = make_ellipse(10.0 * v, 0.0, 5.0, 4.0, 0.0);
    g.vertices.push_back(vx);
  }
  // Hierarchy shapes inside one frame: singleton, pair (root + one child), or
  // triple (root + two children).
  for (int v = 0; v < n;) {
    int same = 1;
    while (v + same < n && frames[static_cast<std::size_t>(v + same)] == frames[static_cast<std::size_t>(v)] && same < 3)
      ++same;
    const int size = std::uniform_int_distribution<int>(1, same)(rng);
    if (size == 1) {
      g.exclusion_sets.push_back({v});
    } else if (size == 2) {
      g.exclusion_sets.push_back({v, v + 1});
    } else {
      g.exclusion_sets.push_back({v, v + 1});
      g.exclusion_sets.push_back({v, v + 2});
    }
    v += size;
  }
  int vars = 3 * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (frames[static_cast<std::size_t>(j)] == frames[static_cast<std::size_t>(i)] + 1 && u(rng) < 0.7 &&
          vars < max_vars) {
        g.migrations.push_back({i, j});
        ++vars;
      }
  g.index();
  return g;
}

inline EventProbabilities random_probabilities(std::mt19937_64& rng, const TrackingGraph& g) {
  std::uniform_real_distribution<double> u(0.02, 0.98), prior(0.01, 0.4);
  EventProbabilities p;
  for (std::size_t e = 0; e < g.migrations.size(); ++e) p.migration.push_back(u(rng));
  for (std::size_t v = 0; v < g.vertices.size(); ++v) p.division.push_back(u(rng) < 0.5 ? 1e-4 : u(rng));
  p.priors = {prior(rng), prior(rng)};
  return p;
}

}  // namespace celltrack::testing
