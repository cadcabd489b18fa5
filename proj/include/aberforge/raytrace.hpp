#pragma once

/**
 * @file raytrace.hpp
 * @brief Sequential real-ray tracing, spot statistics and PSF synthesis.
 *
 * The optical axis is +z; off-axis fields tilt toward +y, so kernel rows follow
 * the tangential direction. Object points are at infinity.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "aberforge/error.hpp"
#include "aberforge/optics.hpp"
#include "aberforge/parallel.hpp"
#include "aberforge/vec3.hpp"

namespace aberforge {

enum class RayFate { Alive, Vignetted, TotalInternalReflection, Diverged };

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  double wavelength_nm = wavelengths::kD;
  RayFate fate = RayFate::Alive;
  int terminated_at = -1;  // surface index where a dead ray stopped; count() means the image plane

  bool alive() const { return fate == RayFate::Alive; }
};

// Vector Snell law. nullopt signals total internal reflection. The normal may
// face either way; it is flipped to oppose the incoming direction.
inline std::optional<Vec3> refract(const Vec3& direction, const Vec3& normal, double n1, double n2) {
  Vec3 nrm = normal;
  double cos_i = -dot(nrm, direction);
  if (cos_i < 0.0) {
    nrm = -nrm;
    cos_i = -cos_i;
  }
  const double eta = n1 / n2;
  const double k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
  if (k < 0.0) return std::nullopt;
  return normalized(eta * direction + (eta * cos_i - std::sqrt(k)) * nrm);
}

struct Intersection {
  RayFate fate = RayFate::Alive;
  Vec3 point;
  double t = 0.0;
  int iterations = 0;
};

namespace detail {

inline constexpr double kNewtonTolerance = 1e-10;
inline constexpr int kNewtonMaxIterations = 50;

// Near-vertex root of the sphere c|p|² − 2p_z = 0 along p + t·d (local frame).
inline std::optional<double> sphere_root(const Vec3& p, const Vec3& d, double c) {
  const double b = c * dot(p, d) - d.z;
  const double k = c * dot(p, p) - 2.0 * p.z;
  const double disc = b * b - c * k;
  if (disc < 0.0) return std::nullopt;
  const double denom = b + std::copysign(std::sqrt(disc), b);
  if (denom == 0.0) return std::nullopt;
  return -k / denom;
}

inline std::optional<double> aspheric_residual(const Surface& s, const Vec3& p, const Vec3& d, double t) {
  const Vec3 q = p + t * d;
  auto h = try_surface_sag(s, std::hypot(q.x, q.y));
  if (!h) return std::nullopt;
  return q.z - *h;
}

}  // namespace detail

/**
 * Intersects `ray` with `surface` whose vertex sits at z = vertex_z. Spheres and
 * flat surfaces are solved in closed form; aspheric surfaces by damped Newton
 * iteration along the ray parameter, seeded from the base sphere. Hits outside
 * the semi-diameter are reported as vignetted.
 */
inline Intersection intersect(const Ray& ray, const Surface& surface, double vertex_z) {
  Intersection hit;
  const Vec3 p = ray.origin - Vec3{0.0, 0.0, vertex_z};
  const Vec3& d = ray.direction;

  if (surface.is_flat()) {
    if (d.z == 0.0) {
      hit.fate = RayFate::Vignetted;
      return hit;
    }
    hit.t = -p.z / d.z;
  } else {
    auto t0 = detail::sphere_root(p, d, surface.curvature);
    if (surface.kind == SurfaceKind::Spherical) {
      if (!t0) {
        hit.fate = RayFate::Vignetted;
        return hit;
      }
      hit.t = *t0;
    } else {
      double t = t0.value_or(d.z != 0.0 ? -p.z / d.z : 0.0);
      auto f = detail::aspheric_residual(surface, p, d, t);
      if (!f) {
        t = d.z != 0.0 ? -p.z / d.z : 0.0;
        f = detail::aspheric_residual(surface, p, d, t);
      }
      if (!f) {
        hit.fate = RayFate::Vignetted;
        return hit;
      }
      int it = 0;
      while (std::abs(*f) > detail::kNewtonTolerance) {
        if (++it > detail::kNewtonMaxIterations) {
          hit.fate = RayFate::Diverged;
          hit.iterations = it - 1;
          return hit;
        }
        const Vec3 q = p + t * d;
        const double r = std::hypot(q.x, q.y);
        auto slope = try_sag_slope(surface, r);
        if (!slope) {
          hit.fate = RayFate::Diverged;
          return hit;
        }
        const double dr_dt = r > 0.0 ? (q.x * d.x + q.y * d.y) / r : 0.0;
        const double derivative = d.z - *slope * dr_dt;
        if (derivative == 0.0) {
          hit.fate = RayFate::Diverged;
          return hit;
        }
        const double step = -*f / derivative;
        double damping = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 30; ++halving, damping *= 0.5) {
          auto trial = detail::aspheric_residual(surface, p, d, t + damping * step);
          if (trial && std::abs(*trial) < std::abs(*f)) {
            t += damping * step;
            f = trial;
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          hit.fate = RayFate::Diverged;
          return hit;
        }
      }
      hit.iterations = it;
      hit.t = t;
    }
  }
  hit.point = ray.origin + hit.t * d;
  const double r = std::hypot(hit.point.x, hit.point.y);
  const bool apertured = surface.kind != SurfaceKind::ImagePlane;
  if (apertured && r > surface.semi_diameter) hit.fate = RayFate::Vignetted;
  return hit;
}

// Unit normal of the surface at a point (local radial coordinates), pointing toward +z.
inline Vec3 surface_normal(const Surface& s, const Vec3& point) {
  const double r = std::hypot(point.x, point.y);
  if (r == 0.0 || s.is_flat()) return {0.0, 0.0, 1.0};
  const double slope = try_sag_slope(s, r).value_or(0.0);
  return normalized(Vec3{-slope * point.x / r, -slope * point.y / r, 1.0});
}

// Propagates `ray` through every surface and onto the image plane. On return
// the ray's origin holds the image-plane point (if it survived).
inline void trace_ray(const LensSystem& lens, Ray& ray) {
  double z = 0.0;
  double n_before = 1.0;
  for (std::size_t i = 0; i < lens.surfaces.size(); ++i) {
    const Surface& s = lens.surfaces[i];
    const Intersection hit = intersect(ray, s, z);
    if (hit.fate != RayFate::Alive) {
      ray.fate = hit.fate;
      ray.terminated_at = static_cast<int>(i);
      return;
    }
    ray.origin = hit.point;
    const double n_after = lens.index_after(static_cast<std::ptrdiff_t>(i), ray.wavelength_nm);
    if (s.kind == SurfaceKind::Paraxial) {
      // Ideal thin lens: every ray of slope m leaves toward height f·m on the focal plane.
      const Vec3& d = ray.direction;
      const double power = s.curvature;
      ray.direction = normalized(Vec3{d.x / d.z - hit.point.x * power, d.y / d.z - hit.point.y * power, 1.0});
    } else if (s.is_refracting() && n_after != n_before) {
      const Vec3 local{hit.point.x, hit.point.y, hit.point.z - z};
      auto out = refract(ray.direction, surface_normal(s, local), n_before, n_after);
      if (!out) {
        ray.fate = RayFate::TotalInternalReflection;
        ray.terminated_at = static_cast<int>(i);
        return;
      }
      ray.direction = *out;
    }
    n_before = n_after;
    z += s.thickness;
  }
  const double z_image = lens.image_plane_z();
  if (ray.direction.z <= 0.0) {
    ray.fate = RayFate::Vignetted;
    ray.terminated_at = static_cast<int>(lens.surfaces.size());
    return;
  }
  ray.origin = ray.origin + ((z_image - ray.origin.z) / ray.direction.z) * ray.direction;
}

// ============================================================================
// Pupil sampling and spot diagrams
// ============================================================================

enum class PupilPattern { Grid, Ring };

// Unit-disc sample coordinates. Grid: square lattice clipped by the circle.
// Ring: hexapolar rings (6k points on ring k) plus the centre. At least
// `count` points are produced.
inline std::vector<Vec2> pupil_samples(std::size_t count, PupilPattern pattern) {
  std::vector<Vec2> pts;
  count = std::max<std::size_t>(count, 1);
  if (pattern == PupilPattern::Grid) {
    auto side = static_cast<std::size_t>(std::ceil(std::sqrt(4.0 * static_cast<double>(count) / std::numbers::pi)));
    while (true) {
      pts.clear();
      for (std::size_t j = 0; j < side; ++j) {
        for (std::size_t i = 0; i < side; ++i) {
          const double x = (2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(side)) - 1.0;
          const double y = (2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(side)) - 1.0;
          if (x * x + y * y <= 1.0) pts.push_back({x, y});
        }
      }
      if (pts.size() >= count) break;
      ++side;
    }
  } else {
    std::size_t rings = 0;
    while (1 + 3 * rings * (rings + 1) < count) ++rings;
    pts.push_back({0.0, 0.0});
    for (std::size_t k = 1; k <= rings; ++k) {
      const double r = static_cast<double>(k) / static_cast<double>(rings);
      const std::size_t n = 6 * k;
      for (std::size_t m = 0; m < n; ++m) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        pts.push_back({r * std::cos(phi), r * std::sin(phi)});
      }
    }
  }
  return pts;
}

// Object-space ray for field angle `field_deg` crossing the entrance pupil at (px, py) mm.
inline Ray launch_ray(const LensSystem& lens, const EntrancePupil& ep, double field_deg, double px, double py,
                      double wavelength_nm) {
  const double theta = field_deg * std::numbers::pi / 180.0;
  Ray ray;
  ray.direction = {0.0, std::sin(theta), std::cos(theta)};
  ray.wavelength_nm = wavelength_nm;
  const double z_start = std::min(ep.z, 0.0) - lens.surfaces.front().semi_diameter - 1.0;
  const Vec3 pupil_point{px, py, ep.z};
  ray.origin = pupil_point - ((ep.z - z_start) / ray.direction.z) * ray.direction;
  return ray;
}

struct SpotDiagram {
  std::vector<Vec2> points;   // mm on the image plane
  std::optional<Vec2> chief;  // chief-ray landing point, if it survived
  std::size_t launched = 0;
  std::size_t vignetted = 0;
  std::size_t tir = 0;
  std::size_t diverged = 0;

  double survival_fraction() const { return launched ? double(points.size()) / double(launched) : 0.0; }
  double vignetted_fraction() const { return launched ? double(vignetted) / double(launched) : 0.0; }
  double tir_fraction() const { return launched ? double(tir) / double(launched) : 0.0; }
  double diverged_fraction() const { return launched ? double(diverged) / double(launched) : 0.0; }
};

inline std::optional<Vec2> trace_chief_ray(const LensSystem& lens, double field_deg, double wavelength_nm) {
  Ray chief = launch_ray(lens, entrance_pupil(lens), field_deg, 0.0, 0.0, wavelength_nm);
  trace_ray(lens, chief);
  if (!chief.alive()) return std::nullopt;
  return Vec2{chief.origin.x, chief.origin.y};
}

inline SpotDiagram trace_system(const LensSystem& lens, double field_deg, double wavelength_nm,
                                std::size_t pupil_sample_count, PupilPattern pattern) {
  if (std::abs(field_deg) > lens.half_fov_deg + 1e-9) {
    throw DomainError("field angle " + std::to_string(field_deg) + " deg exceeds half FoV " +
                      std::to_string(lens.half_fov_deg));
  }
  const EntrancePupil ep = entrance_pupil(lens);
  SpotDiagram spot;
  for (const Vec2& s : pupil_samples(pupil_sample_count, pattern)) {
    Ray ray = launch_ray(lens, ep, field_deg, s.x * ep.radius, s.y * ep.radius, wavelength_nm);
    trace_ray(lens, ray);
    ++spot.launched;
    switch (ray.fate) {
      case RayFate::Alive: spot.points.push_back({ray.origin.x, ray.origin.y}); break;
      case RayFate::Vignetted: ++spot.vignetted; break;
      case RayFate::TotalInternalReflection: ++spot.tir; break;
      case RayFate::Diverged: ++spot.diverged; break;
    }
  }
  if (spot.points.empty()) {
    throw EmptySpotError("no ray reached the image plane at field " + std::to_string(field_deg) + " deg, " +
                         std::to_string(wavelength_nm) + " nm");
  }
  Ray chief = launch_ray(lens, ep, field_deg, 0.0, 0.0, wavelength_nm);
  trace_ray(lens, chief);
  if (chief.alive()) spot.chief = Vec2{chief.origin.x, chief.origin.y};
  return spot;
}

// RMS radial distance about the centroid, in micrometres.
inline double rms_spot_radius(const std::vector<Vec2>& points) {
  if (points.empty()) throw EmptySpotError("rms_spot_radius of an empty spot");
  double cx = 0.0, cy = 0.0;
  for (const auto& p : points) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(points.size());
  cy /= static_cast<double>(points.size());
  double sum = 0.0;
  for (const auto& p : points) sum += (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  return std::sqrt(sum / static_cast<double>(points.size())) * 1000.0;
}

// Real chief-ray image height at a field angle; paraxial fallback when the chief ray is lost.
inline double image_height(const LensSystem& lens, double field_deg) {
  if (auto chief = trace_chief_ray(lens, field_deg, wavelengths::kD)) return std::abs(chief->y);
  return std::abs(paraxial_image_height(lens, field_deg));
}

inline void assign_sensor(LensSystem& lens, const std::vector<Sensor>& library = default_sensor_library()) {
  const double h = image_height(lens, lens.half_fov_deg);
  lens.sensor = match_sensor(h > 0.0 ? h : 1e-6, library);
}

// ============================================================================
// PSF grids
// ============================================================================

// Square kernel of non-negative weights, row-major, rows along image y.
struct Kernel {
  int side = 1;
  std::vector<double> weights{1.0};

  double& at(int row, int col) { return weights[static_cast<std::size_t>(row * side + col)]; }
  double at(int row, int col) const { return weights[static_cast<std::size_t>(row * side + col)]; }
  int radius() const { return side / 2; }

  double sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  static Kernel delta() { return {}; }
};

struct PsfCell {
  Kernel kernel;
  float centroid_x = 0.0F;  // pixels, relative to the FoV reference point
  float centroid_y = 0.0F;
};

enum class FieldSpacing { LinearAngle, LinearHeight };

struct PsfGridOptions {
  int n_fov = 64;
  int n_wave = 31;
  std::size_t rays_per_psf = 10000;
  double wavelength_min = 400.0;
  double wavelength_max = 700.0;
  FieldSpacing spacing = FieldSpacing::LinearAngle;
  PupilPattern pattern = PupilPattern::Grid;
  double energy_fraction = 0.999;
  int max_side = 65;
  unsigned threads = 0;
};

struct PSFGrid {
  std::vector<double> field_angles;  // degrees
  std::vector<double> wavelengths;   // nm
  std::vector<PsfCell> cells;        // fov-major
  double pitch_um = 0.0;

  int n_fov() const { return static_cast<int>(field_angles.size()); }
  int n_wave() const { return static_cast<int>(wavelengths.size()); }
  PsfCell& cell(int fov, int wave) { return cells[static_cast<std::size_t>(fov * n_wave() + wave)]; }
  const PsfCell& cell(int fov, int wave) const { return cells[static_cast<std::size_t>(fov * n_wave() + wave)]; }
  int max_kernel() const {
    int m = 0;
    for (const auto& c : cells) m = std::max(m, c.kernel.side);
    return m;
  }
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

inline std::vector<double> field_angles(double half_fov_deg, int n, FieldSpacing spacing) {
  std::vector<double> angles = linspace(0.0, half_fov_deg, n);
  if (spacing == FieldSpacing::LinearHeight) {
    const double t_max = std::tan(half_fov_deg * std::numbers::pi / 180.0);
    for (int i = 0; i < n; ++i) {
      const double frac = n == 1 ? 0.0 : double(i) / (n - 1);
      angles[static_cast<std::size_t>(i)] = std::atan(t_max * frac) * 180.0 / std::numbers::pi;
    }
  }
  return angles;
}

// Normalized radial image position of each field (0 on axis, 1 at the full field).
inline std::vector<double> field_positions(const std::vector<double>& angles_deg) {
  std::vector<double> pos(angles_deg.size(), 0.0);
  if (angles_deg.empty()) return pos;
  const double t_max = std::tan(angles_deg.back() * std::numbers::pi / 180.0);
  if (t_max <= 0.0) return pos;
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    pos[i] = std::tan(angles_deg[i] * std::numbers::pi / 180.0) / t_max;
  }
  return pos;
}

namespace detail {

// Bins spot points around `ref` into pixel-pitch cells and crops to the smallest
// odd square holding `energy_fraction` of the rays (capped at max_side).
inline PsfCell bin_spot(const std::vector<Vec2>& points, Vec2 ref, double pitch_mm, double energy_fraction,
                        int max_side) {
  const int cap = std::max(0, (max_side - 1) / 2);
  const int window = 2 * cap + 1;
  std::vector<double> counts(static_cast<std::size_t>(window * window), 0.0);
  std::vector<double> ring(static_cast<std::size_t>(cap + 1), 0.0);
  double cx = 0.0, cy = 0.0;
  for (const Vec2& p : points) {
    const double dx = (p.x - ref.x) / pitch_mm;
    const double dy = (p.y - ref.y) / pitch_mm;
    cx += dx;
    cy += dy;
    const auto ix = static_cast<long>(std::lround(dx));
    const auto iy = static_cast<long>(std::lround(dy));
    const long cheb = std::max(std::labs(ix), std::labs(iy));
    if (cheb > cap) continue;
    counts[static_cast<std::size_t>((iy + cap) * window + (ix + cap))] += 1.0;
    ring[static_cast<std::size_t>(cheb)] += 1.0;
  }
  const double total = static_cast<double>(points.size());
  int half = cap;
  double running = 0.0;
  for (int h = 0; h <= cap; ++h) {
    running += ring[static_cast<std::size_t>(h)];
    if (running >= energy_fraction * total) {
      half = h;
      break;
    }
  }
  PsfCell cell;
  cell.kernel.side = 2 * half + 1;
  cell.kernel.weights.assign(static_cast<std::size_t>(cell.kernel.side * cell.kernel.side), 0.0);
  double kept = 0.0;
  for (int r = -half; r <= half; ++r) {
    for (int c = -half; c <= half; ++c) {
      const double v = counts[static_cast<std::size_t>((r + cap) * window + (c + cap))];
      cell.kernel.at(r + half, c + half) = v;
      kept += v;
    }
  }
  if (kept <= 0.0) {
    // All energy fell outside the cap; keep a delta so the kernel stays normalized.
    cell.kernel = Kernel::delta();
  } else {
    for (double& w : cell.kernel.weights) w /= kept;
  }
  cell.centroid_x = static_cast<float>(cx / total);
  cell.centroid_y = static_cast<float>(cy / total);
  return cell;
}

}  // namespace detail

/**
 * PSFs over `n_fov` field angles (0 to the half FoV) and `n_wave` wavelengths.
 * Every wavelength of a FoV is binned about the chief-ray landing point at the
 * central wavelength, so the 31 kernels of a FoV share one registration and
 * retain lateral colour; distortion of the reference point itself is dropped.
 */
inline PSFGrid psf_grid(const LensSystem& lens, const PsfGridOptions& opt = {}) {
  if (!lens.sensor) throw DomainError("psf_grid: lens '" + lens.name + "' has no matched sensor");
  if (opt.n_fov < 1 || opt.n_wave < 1) throw DomainError("psf_grid: grid dimensions must be positive");
  PSFGrid grid;
  grid.field_angles = field_angles(lens.half_fov_deg, opt.n_fov, opt.spacing);
  grid.wavelengths = linspace(opt.wavelength_min, opt.wavelength_max, opt.n_wave);
  grid.pitch_um = lens.sensor->pitch_um;
  grid.cells.resize(static_cast<std::size_t>(opt.n_fov * opt.n_wave));
  const double pitch_mm = grid.pitch_um * 1e-3;
  const int ref_wave = opt.n_wave / 2;

  std::vector<Vec2> refs(static_cast<std::size_t>(opt.n_fov));
  parallel_for(refs.size(), opt.threads, [&](std::size_t f) {
    const double angle = grid.field_angles[f];
    const double lambda = grid.wavelengths[static_cast<std::size_t>(ref_wave)];
    if (auto chief = trace_chief_ray(lens, angle, lambda)) {
      refs[f] = *chief;
      return;
    }
    try {
      const SpotDiagram s = trace_system(lens, angle, lambda, opt.rays_per_psf, opt.pattern);
      Vec2 c;
      for (const auto& p : s.points) {
        c.x += p.x;
        c.y += p.y;
      }
      refs[f] = {c.x / double(s.points.size()), c.y / double(s.points.size())};
    } catch (const EmptySpotError& e) {
      throw EmptySpotError("psf cell (fov " + std::to_string(f) + ", wave " + std::to_string(ref_wave) +
                           "): " + e.what());
    }
  });

  parallel_for(grid.cells.size(), opt.threads, [&](std::size_t idx) {
    const auto f = idx / static_cast<std::size_t>(opt.n_wave);
    const auto w = idx % static_cast<std::size_t>(opt.n_wave);
    try {
      const SpotDiagram s =
          trace_system(lens, grid.field_angles[f], grid.wavelengths[w], opt.rays_per_psf, opt.pattern);
      grid.cells[idx] = detail::bin_spot(s.points, refs[f], pitch_mm, opt.energy_fraction, opt.max_side);
    } catch (const EmptySpotError& e) {
      throw EmptySpotError("psf cell (fov " + std::to_string(f) + ", wave " + std::to_string(w) + "): " + e.what());
    }
  });
  return grid;
}

// ============================================================================
// RGB stacking
// ============================================================================

using ResponseTable = std::vector<std::array<double, 3>>;  // one row per wavelength, columns R, G, B

// Raised-cosine channel responses centred at 460/540/620 nm with a 60 nm half-width.
inline ResponseTable default_rgb_response(const std::vector<double>& wavelengths_nm) {
  constexpr std::array<double, 3> kCentres{620.0, 540.0, 460.0};
  constexpr double kHalfWidth = 60.0;
  ResponseTable table(wavelengths_nm.size());
  for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double u = (wavelengths_nm[i] - kCentres[c]) / kHalfWidth;
      table[i][c] = std::abs(u) < 1.0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * u)) : 0.0;
    }
  }
  return table;
}

struct RGBPSFSet {
  std::vector<double> field_angles;     // degrees
  std::vector<double> field_positions;  // normalized radial positions in [0, 1]
  std::vector<std::array<Kernel, 3>> kernels;

  int n_fov() const { return static_cast<int>(kernels.size()); }
};

// Kernel with the same registration as `k`, zero-padded to `side`.
inline Kernel pad_kernel(const Kernel& k, int side) {
  if (k.side == side) return k;
  Kernel out;
  out.side = side;
  out.weights.assign(static_cast<std::size_t>(side * side), 0.0);
  const int off = (side - k.side) / 2;
  for (int r = 0; r < k.side; ++r) {
    for (int c = 0; c < k.side; ++c) out.at(r + off, c + off) = k.at(r, c);
  }
  return out;
}

inline RGBPSFSet stack_rgb(const PSFGrid& grid, const ResponseTable& response) {
  if (response.size() != grid.wavelengths.size()) {
    throw ShapeError("response table has " + std::to_string(response.size()) + " rows for " +
                     std::to_string(grid.wavelengths.size()) + " wavelengths");
  }
  std::array<double, 3> column_sum{0.0, 0.0, 0.0};
  for (const auto& row : response) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (row[c] < 0.0) throw DomainError("negative response weight");
      column_sum[c] += row[c];
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (column_sum[c] <= 0.0) throw DomainError("response column " + std::to_string(c) + " is all zero over the sampled wavelengths; sample the band more densely");
  }

  RGBPSFSet out;
  out.field_angles = grid.field_angles;
  out.field_positions = field_positions(grid.field_angles);
  out.kernels.resize(static_cast<std::size_t>(grid.n_fov()));
  for (int f = 0; f < grid.n_fov(); ++f) {
    int side = 1;
    for (int w = 0; w < grid.n_wave(); ++w) side = std::max(side, grid.cell(f, w).kernel.side);
    for (std::size_t c = 0; c < 3; ++c) {
      Kernel acc;
      acc.side = side;
      acc.weights.assign(static_cast<std::size_t>(side * side), 0.0);
      for (int w = 0; w < grid.n_wave(); ++w) {
        const double weight = response[static_cast<std::size_t>(w)][c] / column_sum[c];
        if (weight == 0.0) continue;
        const Kernel& k = grid.cell(f, w).kernel;
        const int off = (side - k.side) / 2;
        for (int r = 0; r < k.side; ++r) {
          for (int col = 0; col < k.side; ++col) acc.at(r + off, col + off) += weight * k.at(r, col);
        }
      }
      const double total = acc.sum();
      for (double& v : acc.weights) v /= total;
      out.kernels[static_cast<std::size_t>(f)][c] = std::move(acc);
    }
  }
  return out;
}

}  // namespace aberforge
