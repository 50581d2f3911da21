#pragma once

// Binary PGM (P5) masks, 8 or 16 bit.

#include <filesystem>
#include <vector>

#include "celltrack/hypothesis.hpp"

namespace celltrack {

LabelMask read_pgm(const std::filesystem::path& path);

/// Writes 8-bit when every value fits, 16-bit big-endian otherwise.
void write_pgm(const LabelMask& mask, const std::filesystem::path& path);

/// All *.pgm files of a directory in lexicographic order. Fails with
/// IoFailure when the directory is missing or holds no masks.
std::vector<std::filesystem::path> list_masks(const std::filesystem::path& dir);

std::vector<LabelMask> read_mask_sequence(const std::filesystem::path& dir);

}  // namespace celltrack
