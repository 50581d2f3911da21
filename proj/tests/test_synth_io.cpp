#include <doctest.h>

#include <cmath>
#include <fstream>

#include "celltrack/error.hpp"
#include "celltrack/io.hpp"
#include "celltrack/synth.hpp"
#include "support/temp_dir.hpp"

using namespace celltrack;

namespace {

int live_cells(const LineageForest& f, int frame) {
  int n = 0;
  for (const auto& t : f.tracks) n += t.begin <= frame && frame <= t.end;
  return n;
}

}  // namespace

TEST_CASE("synthetic ground truth is a valid lineage") {
  SynthConfig cfg;
  cfg.division_prob = 0.05;
  cfg.disappearance_prob = 0.01;
  cfg.seed = 9;
  const auto seq = generate(cfg);
  CHECK(seq.masks.size() == 30);
  CHECK(seq.labels.size() == 30);
  CHECK(seq.gt.frames == 30);
  CHECK(lineage_problem(seq.gt).empty());
  for (int t = 0; t < 30; ++t) {
    const auto comps = connected_components(seq.masks[static_cast<std::size_t>(t)], 1);
    CHECK(static_cast<int>(comps.size()) <= live_cells(seq.gt, t + 1));
    CHECK(seq.masks[static_cast<std::size_t>(t)].rows() == cfg.height);
    CHECK(seq.masks[static_cast<std::size_t>(t)].cols() == cfg.width);
  }
}

TEST_CASE("without division or disappearance the track count is constant") {
  SynthConfig cfg;
  cfg.division_prob = 0;
  cfg.seed = 3;
  const auto seq = generate(cfg);
  CHECK(seq.gt.tracks.size() == static_cast<std::size_t>(cfg.initial_cells));
  for (int t = 1; t <= cfg.frames; ++t) CHECK(live_cells(seq.gt, t) == cfg.initial_cells);
}

TEST_CASE("generation is fully determined by the seed") {
  SynthConfig cfg;
  cfg.seed = 42;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  for (std::size_t t = 0; t < a.masks.size(); ++t) CHECK((a.masks[t] == b.masks[t]).all());
  cfg.seed = 43;
  const auto c = generate(cfg);
  bool differs = false;
  for (std::size_t t = 0; t < a.masks.size(); ++t) differs |= !(a.masks[t] == c.masks[t]).all();
  CHECK(differs);
}

TEST_CASE("division count is consistent with the binomial expectation") {
  SynthConfig cfg;
  cfg.frames = 50;
  cfg.initial_cells = 10;
  cfg.division_prob = 0.05;
  cfg.width = cfg.height = 600;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const auto seq = generate(cfg);
    long divisions = 0;
    for (const auto& t : seq.gt.tracks) divisions += t.parent != 0;
    divisions /= 2;
    const double n = static_cast<double>(seq.division_trials);
    const double mean = n * cfg.division_prob;
    const double sd = std::sqrt(n * cfg.division_prob * (1 - cfg.division_prob));
    CAPTURE(seed);
    CHECK(std::abs(static_cast<double>(divisions) - mean) <= 3 * sd);
  }
}

TEST_CASE("daughters sit along the mother's major axis with half its area") {
  SynthConfig cfg;
  cfg.division_prob = 0.2;
  cfg.min_division_age = 1;
  cfg.motion_sigma = 0;
  cfg.clumping = 0;
  cfg.seed = 5;
  const auto seq = generate(cfg);
  int checked = 0;
  for (const auto& t : seq.gt.tracks) {
    if (t.parent == 0) continue;
    const auto* mother = seq.gt.find(t.parent);
    REQUIRE(mother != nullptr);
    const auto& m = mother->points.back().ellipse;
    const auto& d = t.points.front().ellipse;
    CHECK(d.area() == doctest::Approx(m.area() / 2).epsilon(0.05));
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("invalid synth configs are rejected") {
  SynthConfig cfg;
  cfg.frames = 1;
  CHECK_THROWS_AS(generate(cfg), Error);
  cfg = {};
  cfg.division_prob = 1.5;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.a_min = 20;
  cfg.a_max = 10;
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("rendering sets pixel centres inside the ellipse") {
  LabelMask m = LabelMask::Zero(30, 40);
  const auto e = make_ellipse(20, 15, 8, 5, 0.3);
  render_ellipse(m, e, 7);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) CHECK((m(y, x) == 7) == e.contains(Point2(x, y)));
}

TEST_CASE("pgm round-trip at 8 and 16 bits") {
  testing::TempDir dir("pgm");
  LabelMask small = LabelMask::Zero(5, 7);
  small(1, 2) = 255;
  small(4, 6) = 9;
  write_pgm(small, dir.path() / "a.pgm");
  CHECK((read_pgm(dir.path() / "a.pgm") == small).all());
  CHECK(std::filesystem::file_size(dir.path() / "a.pgm") < 5 * 7 + 30);
  LabelMask wide = small;
  wide(0, 0) = 40000;
  write_pgm(wide, dir.path() / "b.pgm");
  CHECK((read_pgm(dir.path() / "b.pgm") == wide).all());
}

TEST_CASE("malformed and missing masks") {
  testing::TempDir dir("badpgm");
  std::ofstream(dir.path() / "x.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
  CHECK_THROWS_AS(read_pgm(dir.path() / "x.pgm"), Error);
  std::ofstream(dir.path() / "y.pgm", std::ios::binary) << "P5\n4 4\n255\n" << std::string(3, '\0');
  CHECK_THROWS_AS(read_pgm(dir.path() / "y.pgm"), Error);
  CHECK_THROWS_AS(read_pgm(dir.path() / "none.pgm"), Error);
  testing::TempDir empty("emptydir");
  CHECK_THROWS_AS(list_masks(empty.path()), Error);
  CHECK_THROWS_AS(list_masks(empty.path() / "missing"), Error);
}

TEST_CASE("written sequences read back") {
  SynthConfig cfg;
  cfg.frames = 4;
  cfg.seed = 8;
  const auto seq = generate(cfg);
  testing::TempDir dir("seq");
  write_sequence(seq, dir.path());
  const auto masks = read_mask_sequence(dir.path() / "masks");
  REQUIRE(masks.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK((masks[t] == seq.masks[t]).all());
  const auto gt = read_tracks(dir.path() / "gt", "gt_track.txt");
  CHECK(gt.tracks.size() == seq.gt.tracks.size());
  CHECK(list_masks(dir.path() / "labels").size() == 4);
}
