#pragma once

/**
 * @file optics.hpp
 * @brief Surfaces, materials, sensors and lens systems.
 *
 * Lengths are millimetres, sensor pitch is micrometres, wavelengths are
 * nanometres. Surfaces run object-to-image; each surface carries the axial
 * thickness to the next one and the material filling that gap. The image
 * plane sits `image_distance` behind the last surface vertex.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aberforge/error.hpp"

namespace aberforge {

namespace wavelengths {
inline constexpr double kD = 587.56;  // helium d line
inline constexpr double kF = 486.13;  // hydrogen F line
inline constexpr double kC = 656.27;  // hydrogen C line
inline constexpr double kBandMin = 380.0;
inline constexpr double kBandMax = 780.0;
}  // namespace wavelengths

// ============================================================================
// Materials
// ============================================================================

/**
 * Glass described by its d-line index and Abbe number, dispersed with the
 * two-term Cauchy law n(λ) = A + B/λ² (λ in µm). A and B are chosen so that
 * n(λ_d) = n_d and (n_d − 1)/(n_F − n_C) = V_d hold exactly.
 */
struct Material {
  std::string name;
  double nd = 1.0;
  double vd = std::numeric_limits<double>::infinity();
  double cauchy_a = 1.0;
  double cauchy_b = 0.0;  // µm²

  static Material from_abbe(std::string name, double nd, double vd) {
    if (!(nd >= 1.0)) throw DomainError("material '" + name + "': n_d must be >= 1");
    if (!(vd > 0.0)) throw DomainError("material '" + name + "': V_d must be > 0");
    const auto inv_sq = [](double nm) {
      const double um = nm * 1e-3;
      return 1.0 / (um * um);
    };
    Material m;
    m.name = std::move(name);
    m.nd = nd;
    m.vd = vd;
    m.cauchy_b = (nd - 1.0) / (vd * (inv_sq(wavelengths::kF) - inv_sq(wavelengths::kC)));
    m.cauchy_a = nd - m.cauchy_b * inv_sq(wavelengths::kD);
    const double n_red = m.cauchy_a + m.cauchy_b * inv_sq(700.0);
    if (n_red < 1.0) throw DomainError("material '" + m.name + "': index drops below 1 in the visible band");
    return m;
  }

  // Dispersionless medium of index n.
  static Material constant(std::string name, double n) {
    if (!(n >= 1.0)) throw DomainError("material '" + name + "': n_d must be >= 1");
    Material m;
    m.name = std::move(name);
    m.nd = n;
    m.cauchy_a = n;
    return m;
  }

  static Material air() {
    Material m;
    m.name = "air";
    return m;
  }

  bool is_air() const { return nd == 1.0 && cauchy_b == 0.0; }

  friend bool operator==(const Material&, const Material&) = default;
};

inline double refractive_index(const Material& m, double wavelength_nm) {
  if (!(wavelength_nm >= wavelengths::kBandMin && wavelength_nm <= wavelengths::kBandMax)) {
    throw DomainError("wavelength " + std::to_string(wavelength_nm) + " nm outside [380, 780] nm");
  }
  if (m.cauchy_b == 0.0) return m.cauchy_a;
  // The anchor wavelength returns n_d bit-exactly rather than through the fit.
  if (wavelength_nm == wavelengths::kD) return m.nd;
  const double um = wavelength_nm * 1e-3;
  return m.cauchy_a + m.cauchy_b / (um * um);
}

// Crown, flint and optical plastic; the pool the lens generator draws from.
inline std::vector<Material> default_glass_catalog() {
  return {
      Material::from_abbe("crown", 1.5168, 64.17),
      Material::from_abbe("flint", 1.6200, 36.37),
      Material::from_abbe("plastic", 1.5900, 30.0),
  };
}

// ============================================================================
// Surfaces
// ============================================================================

enum class SurfaceKind { Spherical, Aspheric, Stop, ImagePlane, Paraxial };

inline std::string_view to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Spherical: return "spherical";
    case SurfaceKind::Aspheric: return "aspheric";
    case SurfaceKind::Stop: return "stop";
    case SurfaceKind::ImagePlane: return "image-plane";
    case SurfaceKind::Paraxial: return "paraxial";
  }
  return "unknown";
}

inline SurfaceKind parse_surface_kind(std::string_view text) {
  for (auto k : {SurfaceKind::Spherical, SurfaceKind::Aspheric, SurfaceKind::Stop, SurfaceKind::ImagePlane,
                 SurfaceKind::Paraxial}) {
    if (to_string(k) == text) return k;
  }
  throw FormatError("unknown surface kind '" + std::string(text) + "'");
}

// Highest aspheric order is r^10: coefficients a4, a6, a8, a10.
inline constexpr std::size_t kMaxAsphericTerms = 4;

struct Surface {
  SurfaceKind kind = SurfaceKind::Spherical;
  double curvature = 0.0;  // 1/mm; for Paraxial surfaces this is the optical power
  double conic = 0.0;
  std::vector<double> aspheric;  // a4, a6, ... (mm^(1-2i))
  double semi_diameter = 1.0;
  double thickness = 0.0;
  std::string material = "air";

  bool is_refracting() const { return kind == SurfaceKind::Spherical || kind == SurfaceKind::Aspheric; }
  bool is_flat() const { return !is_refracting(); }

  friend bool operator==(const Surface&, const Surface&) = default;
};

namespace detail {

inline double conic_argument(const Surface& s, double r) {
  return 1.0 - (1.0 + s.conic) * s.curvature * s.curvature * r * r;
}

inline double polynomial_sag(const Surface& s, double r2) {
  double sum = 0.0;
  double power = r2 * r2;  // r^4
  for (double a : s.aspheric) {
    sum += a * power;
    power *= r2;
  }
  return sum;
}

inline double polynomial_slope(const Surface& s, double r) {
  // d/dr Σ a_{2i} r^{2i} = Σ 2i a_{2i} r^{2i-1}
  double sum = 0.0;
  double power = r * r * r;
  int order = 4;
  for (double a : s.aspheric) {
    sum += order * a * power;
    power *= r * r;
    order += 2;
  }
  return sum;
}

}  // namespace detail

// Sag without the domain check; nullopt outside the conic's real domain.
inline std::optional<double> try_surface_sag(const Surface& s, double r) {
  if (s.is_flat()) return 0.0;
  const double arg = detail::conic_argument(s, r);
  if (arg < 0.0) return std::nullopt;
  const double r2 = r * r;
  return s.curvature * r2 / (1.0 + std::sqrt(arg)) + detail::polynomial_sag(s, r2);
}

// Height of the surface above its vertex plane at radial distance r.
inline double surface_sag(const Surface& s, double r) {
  auto h = try_surface_sag(s, r);
  if (!h) {
    throw DomainError("sag undefined at r=" + std::to_string(r) + " mm: (1+k)c^2r^2 > 1");
  }
  return *h;
}

// dh/dr; nullopt at or beyond the edge of the conic domain.
inline std::optional<double> try_sag_slope(const Surface& s, double r) {
  if (s.is_flat()) return 0.0;
  const double arg = detail::conic_argument(s, r);
  if (arg <= 0.0) return std::nullopt;
  return s.curvature * r / std::sqrt(arg) + detail::polynomial_slope(s, r);
}

inline void validate_surface(const Surface& s) {
  if (s.is_refracting() && !(s.semi_diameter > 0.0)) {
    throw DomainError("refracting surface needs a positive semi-diameter");
  }
  if (s.kind == SurfaceKind::Spherical) {
    if (s.conic != 0.0) throw DomainError("spherical surface with non-zero conic");
    for (double a : s.aspheric) {
      if (a != 0.0) throw DomainError("spherical surface with aspheric coefficients");
    }
    if (std::abs(s.curvature) * s.semi_diameter >= 1.0) {
      throw DomainError("spherical surface: |c|*semi-diameter must be < 1");
    }
  }
  if (s.aspheric.size() > kMaxAsphericTerms) throw DomainError("more than 4 aspheric coefficients (max order r^10)");
  if (s.kind == SurfaceKind::Aspheric && !try_surface_sag(s, s.semi_diameter)) {
    throw DomainError("aspheric surface undefined at its semi-diameter");
  }
  if (s.kind == SurfaceKind::Stop && !(s.semi_diameter > 0.0)) throw DomainError("stop needs a positive aperture");
  if (!std::isfinite(s.thickness)) throw DomainError("thickness must be finite");
}

// ============================================================================
// Sensors
// ============================================================================

struct Sensor {
  double pitch_um = 4.0;
  int resolution = 2048;  // pixels per side, square

  double half_diagonal_mm() const { return pitch_um * 1e-3 * resolution * std::numbers::sqrt2 / 2.0; }

  friend bool operator==(const Sensor&, const Sensor&) = default;
};

inline std::vector<Sensor> default_sensor_library() { return {{4.0, 2048}, {8.0, 2048}, {12.0, 2048}, {16.0, 2048}}; }

// Sensor whose half-diagonal is closest to `image_height_mm`; ties go to the smaller pitch.
inline Sensor match_sensor(double image_height_mm, const std::vector<Sensor>& library) {
  if (library.empty()) throw DomainError("empty sensor library");
  if (!(image_height_mm > 0.0)) throw DomainError("image height must be positive");
  const Sensor* best = &library.front();
  double best_gap = std::abs(best->half_diagonal_mm() - image_height_mm);
  for (const auto& s : library) {
    const double gap = std::abs(s.half_diagonal_mm() - image_height_mm);
    if (gap < best_gap || (gap == best_gap && s.pitch_um < best->pitch_um)) {
      best = &s;
      best_gap = gap;
    }
  }
  return *best;
}

// ============================================================================
// Lens systems
// ============================================================================

struct LensSystem {
  std::string name;
  std::vector<Surface> surfaces;
  std::vector<Material> materials;  // every non-air material referenced by a surface
  std::size_t stop_index = 0;
  double image_distance = 0.0;
  double focal_length = 0.0;
  double f_number = 0.0;
  double half_fov_deg = 0.0;
  std::optional<Sensor> sensor;

  const Material& material(std::string_view name_) const {
    static const Material kAir = Material::air();
    if (name_ == "air") return kAir;
    for (const auto& m : materials) {
      if (m.name == name_) return m;
    }
    throw FormatError("lens '" + name + "' references unknown material '" + std::string(name_) + "'");
  }

  // Index of the medium following surface i (i = -1 is object space).
  double index_after(std::ptrdiff_t i, double wavelength_nm) const {
    if (i < 0) return 1.0;
    return refractive_index(material(surfaces[static_cast<std::size_t>(i)].material), wavelength_nm);
  }

  double vertex_z(std::size_t i) const {
    double z = 0.0;
    for (std::size_t k = 0; k < i; ++k) z += surfaces[k].thickness;
    return z;
  }

  double image_plane_z() const { return vertex_z(surfaces.size() - 1) + image_distance; }

  friend bool operator==(const LensSystem&, const LensSystem&) = default;
};

// ----------------------------------------------------------------------------
// Paraxial (y, nu) tracing
// ----------------------------------------------------------------------------

struct ParaxialRay {
  double y = 0.0;   // height at the current surface
  double nu = 0.0;  // reduced angle n·u after the current surface
};

// Traces a paraxial ray from object space, starting at the first vertex plane,
// through surfaces [0, end). If `end` equals the surface count the returned ray
// sits at the last surface, refracted.
inline ParaxialRay paraxial_trace(const LensSystem& lens, double y0, double u0, double wavelength_nm,
                                  std::size_t end) {
  ParaxialRay ray{y0, u0};
  double n_before = 1.0;
  for (std::size_t i = 0; i < end; ++i) {
    const auto& s = lens.surfaces[i];
    const double n_after = lens.index_after(static_cast<std::ptrdiff_t>(i), wavelength_nm);
    if (i > 0) ray.y += lens.surfaces[i - 1].thickness * ray.nu / n_before;
    double power = 0.0;
    if (s.kind == SurfaceKind::Paraxial) {
      power = s.curvature;
    } else if (s.is_refracting()) {
      power = (n_after - n_before) * s.curvature;
    }
    ray.nu -= ray.y * power;
    n_before = n_after;
  }
  return ray;
}

// Height of a paraxial ray arriving at the plane of surface `index` (before refraction there).
inline double paraxial_height_at(const LensSystem& lens, double y0, double u0, double wavelength_nm,
                                 std::size_t index) {
  if (index == 0) return y0;
  const ParaxialRay r = paraxial_trace(lens, y0, u0, wavelength_nm, index);
  const double n = lens.index_after(static_cast<std::ptrdiff_t>(index) - 1, wavelength_nm);
  return r.y + lens.surfaces[index - 1].thickness * r.nu / n;
}

inline double paraxial_efl(const LensSystem& lens, double wavelength_nm = wavelengths::kD) {
  const ParaxialRay r = paraxial_trace(lens, 1.0, 0.0, wavelength_nm, lens.surfaces.size());
  const double n_last = lens.index_after(static_cast<std::ptrdiff_t>(lens.surfaces.size()) - 1, wavelength_nm);
  const double u = r.nu / n_last;
  if (u == 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / u;
}

// Distance from the last vertex to the paraxial focus of an axial object at infinity.
inline double paraxial_bfd(const LensSystem& lens, double wavelength_nm = wavelengths::kD) {
  const ParaxialRay r = paraxial_trace(lens, 1.0, 0.0, wavelength_nm, lens.surfaces.size());
  const double n_last = lens.index_after(static_cast<std::ptrdiff_t>(lens.surfaces.size()) - 1, wavelength_nm);
  const double u = r.nu / n_last;
  if (u == 0.0) return std::numeric_limits<double>::infinity();
  return -r.y / u;
}

struct EntrancePupil {
  double z = 0.0;       // axial position relative to the first vertex
  double radius = 0.0;  // mm
};

// Paraxial image of the stop formed by the surfaces ahead of it.
inline EntrancePupil entrance_pupil(const LensSystem& lens, double wavelength_nm = wavelengths::kD) {
  // Stop-plane heights of two object-space rays: unit slope through the first
  // vertex, and unit height parallel to the axis. Linearity fixes the rest.
  const double slope_ray = paraxial_height_at(lens, 0.0, 1.0, wavelength_nm, lens.stop_index);
  const double height_ray = paraxial_height_at(lens, 1.0, 0.0, wavelength_nm, lens.stop_index);
  if (height_ray == 0.0) throw DomainError("entrance pupil at infinity");
  return {slope_ray / height_ray, lens.surfaces[lens.stop_index].semi_diameter / std::abs(height_ray)};
}

inline double paraxial_f_number(const LensSystem& lens, double wavelength_nm = wavelengths::kD) {
  return paraxial_efl(lens, wavelength_nm) / (2.0 * entrance_pupil(lens, wavelength_nm).radius);
}

// Stop semi-diameter that yields f-number `f_number` for this lens.
inline double stop_radius_for_f_number(const LensSystem& lens, double f_number) {
  const double efl = paraxial_efl(lens);
  const double height_ray = paraxial_height_at(lens, 1.0, 0.0, wavelengths::kD, lens.stop_index);
  return efl / (2.0 * f_number) * std::abs(height_ray);
}

// Paraxial chief-ray height on the image plane for a field angle in degrees.
inline double paraxial_image_height(const LensSystem& lens, double field_deg) {
  const EntrancePupil ep = entrance_pupil(lens);
  const double u = std::tan(field_deg * std::numbers::pi / 180.0);
  const double y_first = -ep.z * u;
  const ParaxialRay r = paraxial_trace(lens, y_first, u, wavelengths::kD, lens.surfaces.size());
  const double n_last = lens.index_after(static_cast<std::ptrdiff_t>(lens.surfaces.size()) - 1, wavelengths::kD);
  return r.y + lens.image_distance * r.nu / n_last;
}

// Enforces the LensSystem invariants; throws DomainError on the first violation.
inline void validate(const LensSystem& lens) {
  if (lens.surfaces.empty()) throw DomainError("lens has no surfaces");
  std::size_t stops = 0;
  for (std::size_t i = 0; i < lens.surfaces.size(); ++i) {
    const auto& s = lens.surfaces[i];
    validate_surface(s);
    if (s.kind == SurfaceKind::ImagePlane) {
      throw DomainError("image plane is implied by image_distance and must not be listed");
    }
    if (s.kind == SurfaceKind::Stop) {
      ++stops;
      const std::string& before = i == 0 ? std::string("air") : lens.surfaces[i - 1].material;
      if (lens.material(before).name != lens.material(s.material).name) {
        throw DomainError("stop must not change the medium");
      }
      if (i != lens.stop_index) throw DomainError("stop_index does not point at the stop surface");
    }
    if (s.kind == SurfaceKind::Paraxial) {
      const bool air_before = i == 0 || lens.material(lens.surfaces[i - 1].material).is_air();
      if (!air_before || !lens.material(s.material).is_air()) {
        throw DomainError("paraxial surfaces must sit in air");
      }
    }
    (void)lens.material(s.material);
  }
  if (stops != 1) throw DomainError("lens must contain exactly one stop");
  if (!(lens.image_distance > 0.0)) throw DomainError("image distance must be positive");
  const double efl = paraxial_efl(lens);
  const double fnum = paraxial_f_number(lens);
  if (!(std::abs(efl - lens.focal_length) <= 0.01 * std::abs(efl))) {
    throw DomainError("focal length " + std::to_string(lens.focal_length) + " mm disagrees with paraxial " +
                      std::to_string(efl) + " mm");
  }
  if (!(std::abs(fnum - lens.f_number) <= 0.01 * std::abs(fnum))) {
    throw DomainError("f-number " + std::to_string(lens.f_number) + " disagrees with paraxial " +
                      std::to_string(fnum));
  }
  if (!(lens.half_fov_deg >= 0.0 && lens.half_fov_deg < 90.0)) throw DomainError("half FoV outside [0, 90)");
}

}  // namespace aberforge
