#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "osslam/error.hpp"
#include "osslam/segmentation.hpp"

namespace osslam {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'G', 'R', 'D'};
constexpr std::uint32_t kMaxSide = 1u << 14;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4);
  std::array<char, 4> bytes;
  std::memcpy(bytes.data(), &value, 4);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), 4);
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, 4> bytes;
  if (!in.read(bytes.data(), 4)) throw DataError("feature grid file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), 4);
  return value;
}

void write_block(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) write_le(out, f);
}

void read_block(std::istream& in, std::vector<float>& v) {
  for (float& f : v) f = read_le<float>(in);
}

}  // namespace

void write_feature_grid(std::ostream& out, const FeatureGrid& grid) {
  grid.validate();
  out.write(kMagic.data(), 4);
  write_le<std::uint32_t>(out, grid.height);
  write_le<std::uint32_t>(out, grid.width);
  write_le<std::uint32_t>(out, grid.dim);
  write_le<std::uint32_t>(out, grid.heads);
  write_block(out, grid.features);
  write_block(out, grid.attention);
  write_block(out, grid.depth);
}

FeatureGrid read_feature_grid(std::istream& in) {
  std::array<char, 4> magic;
  if (!in.read(magic.data(), 4) || magic != kMagic) throw DataError("not a FGRD feature grid file");
  const auto h = read_le<std::uint32_t>(in);
  const auto w = read_le<std::uint32_t>(in);
  const auto d = read_le<std::uint32_t>(in);
  const auto a = read_le<std::uint32_t>(in);
  if (h > kMaxSide || w > kMaxSide || d > kMaxSide || a > kMaxSide) {
    throw DataError("feature grid header has implausible dimensions");
  }
  FeatureGrid grid = FeatureGrid::zeros(int(h), int(w), int(d), int(a));
  read_block(in, grid.features);
  read_block(in, grid.attention);
  read_block(in, grid.depth);
  grid.validate();
  return grid;
}

}  // namespace osslam
