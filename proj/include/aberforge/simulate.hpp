#pragma once

/**
 * @file simulate.hpp
 * @brief Patch-wise spatially varying convolution, sensor noise and the
 *        slanted-edge checkerboard target.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aberforge/error.hpp"
#include "aberforge/optics.hpp"
#include "aberforge/parallel.hpp"
#include "aberforge/raytrace.hpp"

namespace aberforge {

// Linear-light RGB image, interleaved, row-major.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, float fill = 0.0F)
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {
    if (h < 0 || w < 0) throw ShapeError("negative image dimensions");
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Pixel rectangle [x0, x0 + w) x [y0, y0 + h).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;

  bool contains(int x, int y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
};

inline ImageBuffer crop(const ImageBuffer& img, const Rect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x0 + r.w > img.width || r.y0 + r.h > img.height) {
    throw ShapeError("crop rectangle outside the image");
  }
  ImageBuffer out(r.h, r.w);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(r.y0 + y, r.x0 + x, c);
    }
  }
  return out;
}

// ============================================================================
// Patch layout
// ============================================================================

/**
 * Square tiles of `patch` pixels laid on a stride of patch − overlap. The last
 * tile in each direction is clipped at the image edge. Each tile carries the
 * FoV index used to blur it.
 */
struct PatchLayout {
  int height = 0;
  int width = 0;
  int patch = 64;
  int overlap = 16;
  int tiles_y = 0;
  int tiles_x = 0;
  std::vector<int> fov;  // tiles_y * tiles_x, row-major

  int stride() const { return patch - overlap; }
  int tile_fov(int ty, int tx) const { return fov[static_cast<std::size_t>(ty * tiles_x + tx)]; }
  Rect tile(int ty, int tx) const {
    const int y0 = ty * stride(), x0 = tx * stride();
    return {x0, y0, std::min(patch, width - x0), std::min(patch, height - y0)};
  }
};

namespace detail {

inline int tile_count(int extent, int patch, int stride) {
  if (extent <= patch) return 1;
  return (extent - patch + stride - 1) / stride + 1;
}

// Index of the nearest entry of `positions` to `rho`; ties go to the lower index.
inline int nearest_position(const std::vector<double>& positions, double rho) {
  int best = 0;
  double gap = std::abs(positions[0] - rho);
  for (std::size_t i = 1; i < positions.size(); ++i) {
    const double g = std::abs(positions[i] - rho);
    if (g < gap) {
      gap = g;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace detail

// Half-diagonal of an image in pixels, measured from the optical centre.
inline double half_diagonal_px(int height, int width) { return 0.5 * std::hypot(double(height), double(width)); }

/**
 * Tiles the image and assigns every tile the FoV whose normalized position is
 * nearest the tile centre's radius / full_field_radius_px. A non-positive
 * full_field_radius_px means the image half-diagonal.
 */
inline PatchLayout make_patch_layout(int height, int width, const std::vector<double>& field_positions,
                                     double full_field_radius_px = 0.0, int patch = 64, int overlap = 16) {
  if (height <= 0 || width <= 0) throw ShapeError("layout needs a non-empty image");
  if (patch < 1 || overlap < 0 || overlap >= patch) throw DomainError("layout needs 0 <= overlap < patch");
  if (field_positions.empty()) throw DomainError("layout needs at least one field position");
  if (full_field_radius_px <= 0.0) full_field_radius_px = half_diagonal_px(height, width);
  PatchLayout layout;
  layout.height = height;
  layout.width = width;
  layout.patch = patch;
  layout.overlap = overlap;
  layout.tiles_y = detail::tile_count(height, patch, layout.stride());
  layout.tiles_x = detail::tile_count(width, patch, layout.stride());
  layout.fov.resize(static_cast<std::size_t>(layout.tiles_y * layout.tiles_x));
  for (int ty = 0; ty < layout.tiles_y; ++ty) {
    for (int tx = 0; tx < layout.tiles_x; ++tx) {
      const Rect r = layout.tile(ty, tx);
      const double cy = r.y0 + 0.5 * r.h - 0.5 * height;
      const double cx = r.x0 + 0.5 * r.w - 0.5 * width;
      const double rho = std::hypot(cx, cy) / full_field_radius_px;
      layout.fov[static_cast<std::size_t>(ty * layout.tiles_x + tx)] = detail::nearest_position(field_positions, rho);
    }
  }
  return layout;
}

// Every tile uses FoV 0.
inline PatchLayout uniform_patch_layout(int height, int width, int patch = 64, int overlap = 16) {
  return make_patch_layout(height, width, {0.0}, 0.0, patch, overlap);
}

namespace detail {

// Blend weight of coordinate p inside tile [a, b) of an axis of length n:
// linear ramps across the overlap on edges shared with a neighbour.
inline double ramp_weight(int p, int a, int b, int n, int overlap) {
  double w = 1.0;
  const double span = overlap + 1.0;
  if (a > 0) w = std::min(w, (p - a + 1) / span);
  if (b < n) w = std::min(w, (b - p) / span);
  return w;
}

inline double convolve_at(const ImageBuffer& img, const Kernel& k, int y, int x, int c) {
  const int r = k.radius();
  double acc = 0.0;
  for (int i = 0; i < k.side; ++i) {
    const int yy = std::clamp(y - (i - r), 0, img.height - 1);
    for (int j = 0; j < k.side; ++j) {
      const double w = k.at(i, j);
      if (w == 0.0) continue;
      const int xx = std::clamp(x - (j - r), 0, img.width - 1);
      acc += w * img.at(yy, xx, c);
    }
  }
  return acc;
}

}  // namespace detail

struct RenderOptions {
  bool clamp = true;
  unsigned threads = 0;
  std::vector<Rect> roi;  // restrict work to these rectangles; elsewhere the input is copied
};

/**
 * Blurs each tile with its FoV's RGB kernels (replicate padding, full-image
 * context) and blends overlapping tiles with ramp weights normalized per
 * pixel. out(y, x) = Σ k(i, j) in(y − (i − r), x − (j − r)).
 */
inline ImageBuffer render_degraded(const ImageBuffer& clear, const RGBPSFSet& psfs, const PatchLayout& layout,
                                   const RenderOptions& opt = {}) {
  if (layout.height != clear.height || layout.width != clear.width) {
    throw ShapeError("patch layout " + std::to_string(layout.height) + "x" + std::to_string(layout.width) +
                     " does not match image " + std::to_string(clear.height) + "x" + std::to_string(clear.width));
  }
  if (psfs.kernels.empty()) throw DomainError("render_degraded: empty PSF set");
  for (int f : layout.fov) {
    if (f < 0 || f >= psfs.n_fov()) throw ShapeError("patch layout references FoV " + std::to_string(f));
  }
  ImageBuffer out = clear;
  const int stride = layout.stride();
  parallel_for(static_cast<std::size_t>(clear.height), opt.threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    const int ty_lo = std::max(0, (y - layout.patch + stride) / stride);
    const int ty_hi = std::min(layout.tiles_y - 1, y / stride);
    std::vector<std::pair<int, double>> groups;
    for (int x = 0; x < clear.width; ++x) {
      if (!opt.roi.empty() &&
          std::none_of(opt.roi.begin(), opt.roi.end(), [&](const Rect& r) { return r.contains(x, y); })) {
        continue;
      }
      const int tx_lo = std::max(0, (x - layout.patch + stride) / stride);
      const int tx_hi = std::min(layout.tiles_x - 1, x / stride);
      groups.clear();
      double total = 0.0;
      for (int ty = ty_lo; ty <= ty_hi; ++ty) {
        for (int tx = tx_lo; tx <= tx_hi; ++tx) {
          const Rect r = layout.tile(ty, tx);
          if (!r.contains(x, y)) continue;
          const double w = detail::ramp_weight(y, r.y0, r.y0 + r.h, clear.height, layout.overlap) *
                           detail::ramp_weight(x, r.x0, r.x0 + r.w, clear.width, layout.overlap);
          const int f = layout.tile_fov(ty, tx);
          auto it = std::find_if(groups.begin(), groups.end(), [f](const auto& g) { return g.first == f; });
          if (it == groups.end()) {
            groups.emplace_back(f, w);
          } else {
            it->second += w;
          }
          total += w;
        }
      }
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (const auto& [f, w] : groups) {
          v += (w / total) * detail::convolve_at(clear, psfs.kernels[static_cast<std::size_t>(f)][static_cast<std::size_t>(c)], y, x, c);
        }
        if (opt.clamp) v = std::clamp(v, 0.0, 1.0);
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  });
  return out;
}

/**
 * Gaussian approximation of shot plus read noise: x + N(0, read² + shot·x),
 * clamped to [0, 1]. Deterministic for a given seed.
 */
inline ImageBuffer add_sensor_noise(const ImageBuffer& img, double read_sigma, double shot_scale,
                                    std::uint64_t seed) {
  if (read_sigma < 0.0 || shot_scale < 0.0) throw DomainError("noise parameters must be >= 0");
  if (read_sigma == 0.0 && shot_scale == 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageBuffer out = img;
  for (float& v : out.data) {
    const double x = v;
    const double sigma = std::sqrt(read_sigma * read_sigma + shot_scale * std::max(x, 0.0));
    v = static_cast<float>(std::clamp(x + sigma * normal(rng), 0.0, 1.0));
  }
  return out;
}

// ============================================================================
// Checkerboard and knife-edge patches
// ============================================================================

struct CheckerboardOptions {
  int square = 128;       // px
  double tilt_deg = 5.0;  // rotation of the pattern about the image centre
  float low = 0.05F;
  float high = 0.95F;
  int patch = 64;  // knife-edge patch side
};

namespace detail {

// Pattern coordinates (u, v) of pixel centre (x, y): image offsets from the
// centre rotated by −tilt. Square edges sit on integer multiples of `square`.
inline std::pair<double, double> pattern_coords(double x, double y, int height, int width, double tilt_deg) {
  const double t = tilt_deg * std::numbers::pi / 180.0;
  const double dx = x - 0.5 * width, dy = y - 0.5 * height;
  return {std::cos(t) * dx + std::sin(t) * dy, -std::sin(t) * dx + std::cos(t) * dy};
}

inline std::pair<double, double> image_coords(double u, double v, int height, int width, double tilt_deg) {
  const double t = tilt_deg * std::numbers::pi / 180.0;
  return {0.5 * width + std::cos(t) * u - std::sin(t) * v, 0.5 * height + std::sin(t) * u + std::cos(t) * v};
}

}  // namespace detail

inline ImageBuffer checkerboard(int height, int width, const CheckerboardOptions& opt = {}) {
  if (opt.square < 2) throw DomainError("checkerboard square must be >= 2 px");
  ImageBuffer img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto [u, v] = detail::pattern_coords(x + 0.5, y + 0.5, height, width, opt.tilt_deg);
      const auto parity = static_cast<long>(std::floor(u / opt.square)) + static_cast<long>(std::floor(v / opt.square));
      const float value = (parity % 2 == 0) ? opt.high : opt.low;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = value;
    }
  }
  return img;
}

inline constexpr std::array<double, 5> kKnifeEdgeFractions{0.0, 0.25, 0.5, 0.75, 0.95};

struct KnifeEdgePatch {
  Rect rect;
  double target_fraction = 0.0;  // requested radial position / half-diagonal
  double radius_fraction = 0.0;  // actual patch-centre radius / half-diagonal
};

/**
 * Five patch positions along the diagonal toward the bottom-right corner.
 * Each target is moved toward the centre onto the nearest near-vertical
 * pattern edge and centred on a square in the other direction, so that the
 * patch holds exactly one slanted edge.
 */
inline std::vector<KnifeEdgePatch> knife_edge_layout(int height, int width, const CheckerboardOptions& opt = {}) {
  const double half_diag = half_diagonal_px(height, width);
  const double s = opt.square;
  std::vector<KnifeEdgePatch> out;
  for (double frac : kKnifeEdgeFractions) {
    const double tx = 0.5 * width + frac * 0.5 * width;
    const double ty = 0.5 * height + frac * 0.5 * height;
    const auto [u, v] = detail::pattern_coords(tx, ty, height, width, opt.tilt_deg);
    const double u_edge = std::trunc(u / s) * s;
    // Middle of the square whose centre is nearest v on the image-centre side.
    const double k = v >= 0.0 ? std::floor(v / s - 0.5) : std::ceil(v / s - 0.5);
    const double v_mid = (k + 0.5) * s;
    const auto [cx, cy] = detail::image_coords(u_edge, v_mid, height, width, opt.tilt_deg);
    KnifeEdgePatch p;
    p.rect = {static_cast<int>(std::lround(cx - 0.5 * opt.patch)), static_cast<int>(std::lround(cy - 0.5 * opt.patch)),
              opt.patch, opt.patch};
    p.target_fraction = frac;
    p.radius_fraction = std::hypot(p.rect.x0 + 0.5 * opt.patch - 0.5 * width, p.rect.y0 + 0.5 * opt.patch - 0.5 * height) /
                        half_diag;
    if (p.rect.x0 < 0 || p.rect.y0 < 0 || p.rect.x0 + p.rect.w > width || p.rect.y0 + p.rect.h > height) {
      throw ShapeError("knife-edge patch at radial fraction " + std::to_string(frac) + " (x0=" +
                       std::to_string(p.rect.x0) + ", y0=" + std::to_string(p.rect.y0) + ") falls off the " +
                       std::to_string(width) + "x" + std::to_string(height) + " image");
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<ImageBuffer> knife_edge_patches(const ImageBuffer& img, const CheckerboardOptions& opt = {}) {
  std::vector<ImageBuffer> patches;
  for (const auto& p : knife_edge_layout(img.height, img.width, opt)) patches.push_back(crop(img, p.rect));
  return patches;
}

struct CheckerboardPair {
  ImageBuffer degraded;
  ImageBuffer gt;
};

/**
 * Renders the sensor-sized checkerboard and its degraded version. With
 * `patches_only` the blur is computed just inside the knife-edge patches.
 * A non-positive full_field_radius_px means the image half-diagonal.
 */
inline CheckerboardPair render_checkerboard(const Sensor& sensor, const RGBPSFSet& psfs,
                                            const CheckerboardOptions& opt = {}, double full_field_radius_px = 0.0,
                                            bool patches_only = false, unsigned threads = 0) {
  CheckerboardPair pair;
  pair.gt = checkerboard(sensor.resolution, sensor.resolution, opt);
  const PatchLayout layout = make_patch_layout(sensor.resolution, sensor.resolution, psfs.field_positions,
                                               full_field_radius_px);
  RenderOptions ro;
  ro.threads = threads;
  if (patches_only) {
    for (const auto& p : knife_edge_layout(sensor.resolution, sensor.resolution, opt)) ro.roi.push_back(p.rect);
  }
  pair.degraded = render_degraded(pair.gt, psfs, layout, ro);
  return pair;
}

// RGB PSF set with a single-pixel delta at every FoV.
inline RGBPSFSet delta_psf_set(int n_fov = 1) {
  RGBPSFSet set;
  set.field_angles = linspace(0.0, 1.0, n_fov);
  set.field_positions = linspace(0.0, 1.0, n_fov);
  set.kernels.assign(static_cast<std::size_t>(n_fov), {Kernel::delta(), Kernel::delta(), Kernel::delta()});
  return set;
}

}  // namespace aberforge
