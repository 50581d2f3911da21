#include <doctest.h>

#include "celltrack/metrics.hpp"
#include "celltrack/synth.hpp"

using namespace celltrack;

namespace {

const Ellipse kA = make_ellipse(20, 20, 8, 6, 0);
const Ellipse kB = make_ellipse(70, 20, 8, 6, 0);

std::vector<LabelMask> two_disc_masks(int frames) {
  LabelMask m = LabelMask::Zero(40, 100);
  render_ellipse(m, kA, 255);
  render_ellipse(m, kB, 255);
  return std::vector<LabelMask>(static_cast<std::size_t>(frames), m);
}

Track track(int id, int parent, int begin, std::initializer_list<Ellipse> cells) {
  Track t;
  t.id = id;
  t.parent = parent;
  t.begin = begin;
  int k = begin;
  for (const auto& e : cells) t.points.push_back({k++, -1, e});
  t.end = k - 1;
  return t;
}

LineageForest forest(int frames, std::vector<Track> tracks) { return {frames, std::move(tracks)}; }

}  // namespace

TEST_CASE("rates with empty denominators") {
  const auto none = make_score(0, 0, 0);
  CHECK(none.recall == 1);
  CHECK(none.precision == 1);
  CHECK(none.f_measure == 1);
  const auto only_fp = make_score(0, 3, 0);
  CHECK(only_fp.recall == 0);
  CHECK(only_fp.precision == 0);
  CHECK(only_fp.f_measure == 0);
  const auto s = make_score(6, 2, 4);
  CHECK(s.recall == doctest::Approx(0.6));
  CHECK(s.precision == doctest::Approx(0.75));
  CHECK(s.f_measure == doctest::Approx(2 * 0.6 * 0.75 / 1.35));
}

TEST_CASE("identical lineages score perfectly") {
  SynthConfig cfg;
  cfg.frames = 20;
  cfg.division_prob = 0.08;
  cfg.seed = 4;
  const auto seq = generate(cfg);
  const auto ev = score_events(seq.gt, seq.gt, seq.masks);
  for (const auto* c : {&ev.detection, &ev.migration, &ev.division}) {
    CHECK(c->fp == 0);
    CHECK(c->fn == 0);
    CHECK(c->f_measure == 1);
  }
  CHECK(ev.division.tp > 0);
  const auto mota = score_mota(seq.gt, seq.gt);
  CHECK(mota.mota == 1);
  CHECK(mota.ids == 0);
}

TEST_CASE("a truncated track loses one detection and one migration") {
  const auto masks = two_disc_masks(3);
  const auto gt = forest(3, {track(1, 0, 1, {kA, kA, kA}), track(2, 0, 1, {kB, kB, kB})});
  const auto pred = forest(3, {track(1, 0, 1, {kA, kA, kA}), track(2, 0, 1, {kB, kB})});
  const auto ev = score_events(pred, gt, masks);
  CHECK(ev.detection.tp == 5);
  CHECK(ev.detection.fn == 1);
  CHECK(ev.detection.fp == 0);
  CHECK(ev.migration.tp == 3);
  CHECK(ev.migration.fn == 1);
  CHECK(ev.division.f_measure == 1);
  const auto mota = score_mota(pred, gt);
  CHECK(mota.fn == 1);
  CHECK(mota.gt == 6);
  CHECK(mota.mota == doctest::Approx(1 - 1.0 / 6));
}

TEST_CASE("swapped identities cost migrations and identity switches") {
  const auto masks = two_disc_masks(3);
  const auto gt = forest(3, {track(1, 0, 1, {kA, kA, kA}), track(2, 0, 1, {kB, kB, kB})});
  const auto pred = forest(3, {track(1, 0, 1, {kA, kB, kB}), track(2, 0, 1, {kB, kA, kA})});
  const auto ev = score_events(pred, gt, masks);
  CHECK(ev.detection.f_measure == 1);
  CHECK(ev.migration.tp == 2);
  CHECK(ev.migration.fp == 2);
  CHECK(ev.migration.fn == 2);
  const auto mota = score_mota(pred, gt);
  CHECK(mota.ids == 2);
  CHECK(mota.mota == doctest::Approx(1 - 2.0 / 6));
}

TEST_CASE("divisions are matched on component level") {
  const auto masks = two_disc_masks(2);
  LabelMask m0 = LabelMask::Zero(40, 100);
  render_ellipse(m0, kA, 255);
  std::vector<LabelMask> seq{m0, masks[1]};
  const auto gt = forest(2, {track(1, 0, 1, {kA}), track(2, 1, 2, {kA}), track(3, 1, 2, {kB})});
  const auto ev_same = score_events(gt, gt, seq);
  CHECK(ev_same.division.tp == 1);
  // Missing division: the mother simply continues into A.
  const auto pred = forest(2, {track(1, 0, 1, {kA, kA}), track(2, 0, 2, {kB})});
  const auto ev = score_events(pred, gt, seq);
  CHECK(ev.division.fn == 1);
  CHECK(ev.division.tp == 0);
  CHECK(ev.division.recall == 0);
  CHECK(ev.detection.f_measure == 1);
}

TEST_CASE("frame counts must agree") {
  const auto masks = two_disc_masks(3);
  const auto gt = forest(3, {track(1, 0, 1, {kA, kA, kA})});
  const auto pred = forest(2, {track(1, 0, 1, {kA, kA})});
  CHECK_THROWS_AS(score_events(pred, gt, masks), Error);
}

TEST_CASE("score reports") {
  const auto masks = two_disc_masks(3);
  const auto gt = forest(3, {track(1, 0, 1, {kA, kA, kA}), track(2, 0, 1, {kB, kB, kB})});
  const auto ev = score_events(gt, gt, masks);
  const auto mota = score_mota(gt, gt);
  const auto j = to_json(ev, mota);
  CHECK(j.at("detection").at("f_measure") == 1.0);
  CHECK(j.at("mota").at("mota") == 1.0);
  CHECK(format_table(ev, mota).find("migration") != std::string::npos);
}
