#pragma once

/**
 * @file psf_io.hpp
 * @brief PSF-grid binary container ("PSFG").
 *
 * Layout, all little-endian:
 *   "PSFG" | u16 version | u32 n_fov | u32 n_wave | u32 max_kernel |
 *   f64 field_angles[n_fov] | f64 wavelengths[n_wave] |
 *   per cell (fov-major): u16 side | f32 centroid_x | f32 centroid_y | f32 weights[side*side]
 * The sensor pitch is not part of the container.
 */

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "aberforge/binary_io.hpp"
#include "aberforge/raytrace.hpp"

namespace aberforge {

inline constexpr std::uint16_t kPsfGridVersion = 1;

inline void write_psf_grid(std::ostream& out, const PSFGrid& grid) {
  using namespace binary;
  write_magic(out, "PSFG");
  write_uint<std::uint16_t>(out, kPsfGridVersion);
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(grid.n_fov()));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(grid.n_wave()));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(grid.max_kernel()));
  for (double a : grid.field_angles) write_f64(out, a);
  for (double w : grid.wavelengths) write_f64(out, w);
  for (const PsfCell& c : grid.cells) {
    write_uint<std::uint16_t>(out, static_cast<std::uint16_t>(c.kernel.side));
    write_f32(out, c.centroid_x);
    write_f32(out, c.centroid_y);
    for (double w : c.kernel.weights) write_f32(out, static_cast<float>(w));
  }
}

inline PSFGrid read_psf_grid(std::istream& in) {
  using namespace binary;
  expect_magic(in, "PSFG");
  const auto version = read_uint<std::uint16_t>(in);
  if (version != kPsfGridVersion) throw FormatError("unsupported PSFG version " + std::to_string(version));
  const auto n_fov = read_uint<std::uint32_t>(in);
  const auto n_wave = read_uint<std::uint32_t>(in);
  const auto max_kernel = read_uint<std::uint32_t>(in);
  PSFGrid grid;
  grid.field_angles.resize(n_fov);
  grid.wavelengths.resize(n_wave);
  for (auto& a : grid.field_angles) a = read_f64(in);
  for (auto& w : grid.wavelengths) w = read_f64(in);
  grid.cells.resize(static_cast<std::size_t>(n_fov) * n_wave);
  for (PsfCell& c : grid.cells) {
    const int side = read_uint<std::uint16_t>(in);
    if (side < 1 || side % 2 == 0 || static_cast<std::uint32_t>(side) > max_kernel) {
      throw FormatError("PSFG: invalid kernel side " + std::to_string(side));
    }
    c.centroid_x = read_f32(in);
    c.centroid_y = read_f32(in);
    c.kernel.side = side;
    c.kernel.weights.resize(static_cast<std::size_t>(side * side));
    for (double& w : c.kernel.weights) w = read_f32(in);
  }
  return grid;
}

inline void save_psf_grid(const std::string& path, const PSFGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_psf_grid(out, grid);
}

inline PSFGrid load_psf_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_psf_grid(in);
}

}  // namespace aberforge
