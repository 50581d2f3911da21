#include "celltrack/io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <fmt/format.h>

namespace celltrack {

namespace fs = std::filesystem;

namespace {

// Next header token, skipping whitespace and comments.
bool header_token(std::istream& in, long& value) {
  int c;
  while ((c = in.peek()) != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else {
      break;
    }
  }
  return static_cast<bool>(in >> value);
}

}  // namespace

LabelMask read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", path.string()));
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') throw Error(ErrorCode::BadMask, fmt::format("{}: not a binary PGM", path.string()));
  long w = 0, h = 0, maxval = 0;
  if (!header_token(in, w) || !header_token(in, h) || !header_token(in, maxval) || w <= 0 || h <= 0 || maxval <= 0 ||
      maxval > 65535)
    throw Error(ErrorCode::BadMask, fmt::format("{}: malformed PGM header", path.string()));
  in.get();  // single whitespace before the raster
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * bytes));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error(ErrorCode::BadMask, fmt::format("{}: truncated raster", path.string()));
  LabelMask mask(h, w);
  for (long i = 0; i < w * h; ++i) {
    const std::size_t k = static_cast<std::size_t>(i * bytes);
    mask.data()[i] = bytes == 2 ? static_cast<std::uint16_t>((raw[k] << 8) | raw[k + 1]) : raw[k];
  }
  return mask;
}

void write_pgm(const LabelMask& mask, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
  const int maxval = mask.size() > 0 && mask.maxCoeff() > 255 ? 65535 : 255;
  out << fmt::format("P5\n{} {}\n{}\n", mask.cols(), mask.rows(), maxval);
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(mask.size()) * (maxval > 255 ? 2 : 1));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const std::uint16_t v = mask.data()[i];
    if (maxval > 255) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("write failed: {}", path.string()));
}

std::vector<fs::path> list_masks(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoFailure, fmt::format("{} is not a directory", dir.string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::IoFailure, fmt::format("no .pgm masks in {}", dir.string()));
  return files;
}

std::vector<LabelMask> read_mask_sequence(const fs::path& dir) {
  std::vector<LabelMask> masks;
  for (const auto& p : list_masks(dir)) masks.push_back(read_pgm(p));
  for (const auto& m : masks)
    if (m.rows() != masks.front().rows() || m.cols() != masks.front().cols())
      throw Error(ErrorCode::BadMask, "masks of one sequence differ in size");
  return masks;
}

}  // namespace celltrack
