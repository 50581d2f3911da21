#pragma once

// Synthetic sequences of moving, dividing, clumping ellipses with their
// ground-truth lineage.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "celltrack/hypothesis.hpp"
#include "celltrack/lineage.hpp"

namespace celltrack {

struct SynthConfig {
  int frames = 30;
  int width = 320;
  int height = 320;
  int initial_cells = 8;
  double motion_sigma = 1.5;      // px per frame
  double division_prob = 0.03;    // per eligible cell per frame
  int min_division_age = 8;       // frames a daughter lives before it may divide
  double disappearance_prob = 0;  // per cell per frame
  double a_min = 16, a_max = 19;
  double b_min = 14, b_max = 16;
  double clumping = 0.5;          // attraction strength in [0, 1]
  std::uint64_t seed = 1;
};

void validate(const SynthConfig& config);

struct SynthSequence {
  std::vector<LabelMask> masks;   // binary: 255 inside any cell
  std::vector<LabelMask> labels;  // per-cell track ids (later cells on top)
  LineageForest gt;               // track points carry the generating ellipses
  long division_trials = 0;       // cell-frames that were eligible to divide
};

/// Fully determined by config.seed.
SynthSequence generate(const SynthConfig& config);

/// Draws the filled ellipse into mask with the given value; pixel centres
/// inside the ellipse are set.
void render_ellipse(LabelMask& mask, const Ellipse& e, std::uint16_t value);

/// masks/mask_tNNNN.pgm, labels/label_tNNNN.pgm, gt/gt_track.txt and the gt
/// ellipse CSVs.
void write_sequence(const SynthSequence& seq, const std::filesystem::path& out_dir);

}  // namespace celltrack
