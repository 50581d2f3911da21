#include "celltrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "celltrack/io.hpp"

namespace celltrack {

namespace fs = std::filesystem;

void validate(const SynthConfig& c) {
  auto prob = [](double p) { return p >= 0 && p <= 1; };
  if (c.frames < 2 || c.width < 16 || c.height < 16 || c.initial_cells < 0 || c.min_division_age < 0 || !(c.motion_sigma >= 0) ||
      !prob(c.division_prob) || !prob(c.disappearance_prob) || !prob(c.clumping) || !(c.a_min > 0) ||
      !(c.b_min > 0) || c.a_min > c.a_max || c.b_min > c.b_max || c.b_max > c.a_min)
    throw Error(ErrorCode::ConfigInvalid, "invalid synthetic sequence configuration");
}

void render_ellipse(LabelMask& mask, const Ellipse& e, std::uint16_t value) {
  const Point2 h = e.half_extent();
  const long x0 = std::max(0L, static_cast<long>(std::floor(e.cx() - h.x())));
  const long x1 = std::min(static_cast<long>(mask.cols()) - 1, static_cast<long>(std::ceil(e.cx() + h.x())));
  const long y0 = std::max(0L, static_cast<long>(std::floor(e.cy() - h.y())));
  const long y1 = std::min(static_cast<long>(mask.rows()) - 1, static_cast<long>(std::ceil(e.cy() + h.y())));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x)
      if (e.level(Point2(static_cast<double>(x), static_cast<double>(y))) <= 1.0) mask(y, x) = value;
}

namespace {

struct Cell {
  int track = 0;
  int age = 0;
  Ellipse shape;
  double target_a = 0, target_b = 0;
};

double radius(const Cell& c) { return 0.5 * (c.shape.a + c.shape.b); }

}  // namespace

SynthSequence generate(const SynthConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SynthSequence seq;
  seq.gt.frames = config.frames;
  std::vector<Cell> alive;
  int next_track = 1;
  auto new_track = [&](int parent, int begin) {
    Track t;
    t.id = next_track++;
    t.parent = parent;
    t.begin = begin;
    t.end = begin;
    seq.gt.tracks.push_back(t);
    return t.id;
  };
  const double margin = config.a_max + 4;

  for (int k = 0; k < config.initial_cells; ++k) {
    Cell c;
    c.target_a = uniform(config.a_min, config.a_max);
    c.target_b = uniform(config.b_min, config.b_max);
    Point2 p;
    // Rejection sampling keeps initial cells apart when there is room.
    for (int attempt = 0; attempt < 200; ++attempt) {
      p = Point2(uniform(margin, config.width - margin), uniform(margin, config.height - margin));
      bool free = true;
      for (const auto& o : alive)
        if ((o.shape.center - p).norm() < 2.2 * config.a_max) free = false;
      if (free) break;
    }
    c.shape = make_ellipse(p.x(), p.y(), c.target_a, c.target_b, uniform(0, std::numbers::pi));
    c.track = new_track(0, 1);
    c.age = config.min_division_age;
    alive.push_back(c);
  }

  auto record = [&](int frame) {
    LabelMask mask = LabelMask::Zero(config.height, config.width);
    LabelMask labels = LabelMask::Zero(config.height, config.width);
    for (const auto& c : alive) {
      render_ellipse(mask, c.shape, 255);
      render_ellipse(labels, c.shape, static_cast<std::uint16_t>(c.track));
      auto& t = seq.gt.tracks[static_cast<std::size_t>(c.track - 1)];
      t.end = frame;
      t.points.push_back({frame, -1, c.shape});
    }
    seq.masks.push_back(std::move(mask));
    seq.labels.push_back(std::move(labels));
  };
  record(1);

  for (int frame = 2; frame <= config.frames; ++frame) {
    std::vector<Cell> next;
    for (const auto& c : alive) {
      const double u_death = unit(rng), u_div = unit(rng);
      if (u_death < config.disappearance_prob) continue;
      const bool eligible = c.age >= config.min_division_age;
      seq.division_trials += eligible;
      if (eligible && u_div < config.division_prob) {
        // Half-area round daughters at +-a/2 along the major axis.
        const double r = std::sqrt(c.shape.a * c.shape.b / 2.0);
        const Point2 axis(std::cos(c.shape.theta), std::sin(c.shape.theta));
        for (double side : {-1.0, 1.0}) {
          Cell d;
          const Point2 p = c.shape.center + side * 0.5 * c.shape.a * axis;
          d.shape = make_ellipse(p.x(), p.y(), r, r * 0.999, c.shape.theta + std::numbers::pi / 2);
          d.target_a = uniform(config.a_min, config.a_max);
          d.target_b = uniform(config.b_min, config.b_max);
          d.track = new_track(c.track, frame);
          next.push_back(d);
        }
        continue;
      }
      Cell m = c;
      ++m.age;
      m.shape.center += config.motion_sigma * Point2(gauss(rng), gauss(rng));
      m.shape.theta = normalize_angle(m.shape.theta + 0.05 * gauss(rng));
      m.shape.a += 0.3 * (m.target_a - m.shape.a);
      m.shape.b += 0.3 * (m.target_b - m.shape.b);
      if (m.shape.b > m.shape.a) std::swap(m.shape.a, m.shape.b);
      next.push_back(m);
    }

    // Pairwise attraction towards contact and repulsion from deep overlap.
    std::vector<Point2> shift(next.size(), Point2::Zero());
    for (std::size_t i = 0; i < next.size(); ++i)
      for (std::size_t j = i + 1; j < next.size(); ++j) {
        Point2 d = next[j].shape.center - next[i].shape.center;
        const double dist = std::max(d.norm(), 1e-9);
        d /= dist;
        const double contact = radius(next[i]) + radius(next[j]);
        double move = 0;
        if (dist < contact - 3.0) {
          move = -0.5 * (contact - 3.0 - dist);
        } else if (dist < 1.5 * contact) {
          move = 0.25 * config.clumping * (dist - (contact - 2.0));
        }
        shift[i] += move * d;
        shift[j] -= move * d;
      }
    for (std::size_t i = 0; i < next.size(); ++i) {
      auto& p = next[i].shape.center;
      p += shift[i];
      for (int axis = 0; axis < 2; ++axis) {
        const double hi = (axis == 0 ? config.width : config.height) - margin;
        if (p(axis) < margin) p(axis) = 2 * margin - p(axis);
        if (p(axis) > hi) p(axis) = 2 * hi - p(axis);
        p(axis) = std::clamp(p(axis), margin, std::max(margin, hi));
      }
    }
    alive = std::move(next);
    record(frame);
  }
  return seq;
}

void write_sequence(const SynthSequence& seq, const fs::path& out_dir) {
  std::error_code ec;
  for (const char* sub : {"masks", "labels", "gt"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw Error(ErrorCode::IoFailure, fmt::format("cannot create {}", (out_dir / sub).string()));
  }
  for (std::size_t t = 0; t < seq.masks.size(); ++t) {
    write_pgm(seq.masks[t], out_dir / "masks" / fmt::format("mask_t{:04d}.pgm", t + 1));
    write_pgm(seq.labels[t], out_dir / "labels" / fmt::format("label_t{:04d}.pgm", t + 1));
  }
  write_tracks(seq.gt, out_dir / "gt", "gt_track.txt");
}

}  // namespace celltrack
