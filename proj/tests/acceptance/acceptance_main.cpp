// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Each check compares the library against an oracle written here, not
// against the library itself. A criterion fails when any check fails or
// when it overruns its time budget.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aberforge/aberforge.hpp"
#include "json.hpp"
#include "test_lenses.hpp"

namespace fs = std::filesystem;
using namespace aberforge;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Collects failed checks plus a short summary of measured values.
struct Outcome {
  std::vector<std::string> failures;
  std::ostringstream note;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  template <class T>
  Outcome& operator<<(const T& v) {
    note << v;
    return *this;
  }
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

void geometry(Outcome& o) {
  // Spherical sag against R - sqrt(R^2 - r^2), both curvature signs.
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> radius(20.0, 500.0), frac(0.0, 0.95);
  double sag_err = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double R = (i % 2 ? -1.0 : 1.0) * radius(rng);
    const double sd = 0.9 * std::abs(R);
    const double r = frac(rng) * sd;
    const Surface s{SurfaceKind::Spherical, 1.0 / R, 0.0, {}, sd, 0.0, "air"};
    const double oracle = (R > 0 ? 1.0 : -1.0) * (std::abs(R) - std::sqrt(R * R - r * r));
    sag_err = std::max(sag_err, std::abs(surface_sag(s, r) - oracle));
  }
  o.check(sag_err <= 1e-9, "sphere sag error " + num(sag_err));

  // Parabola (k = -1): Newton intersection against the quadratic root.
  double para_err = 0.0;
  int hits = 0;
  std::uniform_real_distribution<double> h(-8.0, 8.0), tilt(-0.3, 0.3), curv(-0.06, 0.06);
  for (int i = 0; i < 20000; ++i) {
    const double c = curv(rng);
    const Surface s{SurfaceKind::Aspheric, c, -1.0, {}, 12.0, 0.0, "air"};
    Ray ray{{h(rng), h(rng), -4.0}, normalized(Vec3{tilt(rng), tilt(rng), 1.0})};
    const Vec3 p = ray.origin, d = ray.direction;
    const double a = 0.5 * c * (d.x * d.x + d.y * d.y);
    const double b = c * (p.x * d.x + p.y * d.y) - d.z;
    const double k = 0.5 * c * (p.x * p.x + p.y * p.y) - p.z;
    double t = -k / b;
    if (std::abs(a) > 1e-14) {
      const double disc = b * b - 4 * a * k;
      if (disc < 0) continue;
      // Root nearest the vertex plane, written to avoid cancellation.
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      const double t1 = q / a, t2 = k / q;
      t = std::min(t1 > 0 ? t1 : 1e300, t2 > 0 ? t2 : 1e300);
    }
    const Vec3 oracle = p + t * d;
    if (std::hypot(oracle.x, oracle.y) > s.semi_diameter) continue;
    const Intersection hit = intersect(ray, s, 0.0);
    if (hit.fate != RayFate::Alive) {
      para_err = 1e300;
      break;
    }
    para_err = std::max({para_err, std::abs(hit.point.x - oracle.x), std::abs(hit.point.y - oracle.y),
                         std::abs(hit.point.z - oracle.z)});
    ++hits;
  }
  o.check(hits > 10000, "too few parabola hits");
  o.check(para_err <= 1e-9, "parabola intersection error " + num(para_err));

  // Snell: 30 deg from air into n = 1.5.
  const auto out = refract({0, std::sin(30 * kDeg), std::cos(30 * kDeg)}, {0, 0, 1}, 1.0, 1.5);
  const double oracle = std::asin(std::sin(30 * kDeg) / 1.5) / kDeg;
  double snell_err = 1e300;
  if (out) snell_err = std::abs(std::acos(std::clamp(out->z, -1.0, 1.0)) / kDeg - oracle);
  o.check(std::abs(oracle - 19.471) < 5e-4, "Snell oracle disagrees with 19.471");
  o.check(snell_err <= 1e-6, "Snell angle error " + num(snell_err) + " deg");

  // TIR from n = 1.5 into air: critical angle asin(1/1.5) = 41.81 deg.
  const double critical = std::asin(1.0 / 1.5) / kDeg;
  int tir_wrong = 0;
  for (double a = 1.0; a < 89.9; a += 0.05) {
    const bool tir = !refract({0, std::sin(a * kDeg), std::cos(a * kDeg)}, {0, 0, 1}, 1.5, 1.0);
    if (std::abs(a - critical) > 1e-6 && tir != (a > critical)) ++tir_wrong;
  }
  o.check(tir_wrong == 0, std::to_string(tir_wrong) + " angles misclassified for TIR");

  // The tracer flags TIR too: a marginal ray meets the strongly curved rear
  // face of a glass block at asin(8/10) = 53 deg from inside.
  LensSystem block;
  block.name = "tir-block";
  block.materials = {Material::constant("glass", 1.5)};
  block.surfaces = {Surface{SurfaceKind::Stop, 0.0, 0.0, {}, 9.0, 1.0, "air"},
                    Surface{SurfaceKind::Spherical, 0.0, 0.0, {}, 9.5, 20.0, "glass"},
                    Surface{SurfaceKind::Spherical, -0.1, 0.0, {}, 9.5, 10.0, "air"}};
  block.stop_index = 0;
  block.image_distance = 10.0;
  Ray steep{{0, 8, -5}, {0, 0, 1}};
  steep.wavelength_nm = wavelengths::kD;
  trace_ray(block, steep);
  o.check(steep.fate == RayFate::TotalInternalReflection && steep.terminated_at == 2, "tracer did not flag TIR");
  Ray gentle{{0, 3, -5}, {0, 0, 1}};
  gentle.wavelength_nm = wavelengths::kD;
  trace_ray(block, gentle);
  o.check(gentle.fate != RayFate::TotalInternalReflection, "tracer flagged TIR below the critical angle");

  o << "sag " << num(sag_err, 2) << ", parabola " << num(para_err, 2) << " mm, Snell " << num(oracle, 8) << " deg (err "
    << num(snell_err, 2) << "), TIR above " << num(critical, 5) << " deg";
}

void paraxial_focus(Outcome& o) {
  // n = 1.5, R = 50 mm, stop radius 0.5 mm: 0.5% of the 100 mm focal length.
  const LensSystem lens = testing::plano_convex(50.0, 1.5, 4.0, 100.0);
  const EntrancePupil ep = entrance_pupil(lens);
  Ray ray = launch_ray(lens, ep, 0.0, 0.0, ep.radius, wavelengths::kD);
  trace_ray(lens, ray);
  if (!ray.alive()) {
    o.check(false, "marginal ray lost");
    return;
  }
  const double z_cross = ray.origin.z - ray.origin.y / ray.direction.y * ray.direction.z;
  const double bfd = z_cross - lens.vertex_z(lens.surfaces.size() - 1);
  o.check(std::abs(bfd - 100.0) <= 0.1, "axis crossing at " + num(bfd, 9) + " mm");
  o << "marginal ray at h = " << num(ep.radius, 3) << " mm crosses the axis " << num(bfd, 9)
    << " mm behind the lens (paraxial EFL " << num(paraxial_efl(lens), 9) << ")";
}

void psf_grid_contract(Outcome& o) {
  LensSystem lens = testing::crown_singlet(4.0, 10.0);
  assign_sensor(lens);
  PsfGridOptions opt;
  opt.rays_per_psf = 10000;
  const PSFGrid grid = psf_grid(lens, opt);
  o.check(grid.n_fov() == 64 && grid.n_wave() == 31, "grid is " + std::to_string(grid.n_fov()) + " x " +
                                                        std::to_string(grid.n_wave()));
  o.check(grid.cells.size() == 64U * 31U, "cell count");
  double worst_sum = 0.0;
  bool negative = false;
  for (const auto& c : grid.cells) {
    double s = 0.0;
    for (double w : c.kernel.weights) {
      s += w;
      negative = negative || w < 0.0;
    }
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  o.check(worst_sum <= 1e-6, "kernel sum error " + num(worst_sum));
  o.check(!negative, "negative kernel weight");

  LensSystem ideal = testing::paraxial_standin();
  assign_sensor(ideal);
  const PSFGrid flat = psf_grid(ideal, opt);
  int non_delta = 0;
  for (const auto& c : flat.cells)
    if (c.kernel.side != 1 || c.kernel.weights[0] != 1.0) ++non_delta;
  o.check(flat.n_fov() == 64 && flat.n_wave() == 31, "stand-in grid shape");
  o.check(non_delta == 0, std::to_string(non_delta) + " stand-in kernels are not deltas");
  o << "64 x 31 at 1e4 rays/PSF, max |sum - 1| = " << num(worst_sum, 2) << ", max kernel " << grid.max_kernel()
    << " px, stand-in all deltas";
}

Kernel gaussian_kernel(double sigma, int side = 0) {
  Kernel k;
  k.side = side > 0 ? side : std::min(65, 2 * static_cast<int>(std::ceil(5 * sigma)) + 1);
  k.weights.resize(static_cast<std::size_t>(k.side * k.side));
  const int r = k.side / 2;
  double s = 0;
  for (int i = 0; i < k.side; ++i)
    for (int j = 0; j < k.side; ++j)
      s += (k.at(i, j) = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma)));
  for (double& w : k.weights) w /= s;
  return k;
}

void simulator(Outcome& o) {
  const int n = 512;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  ImageBuffer img(n, n);
  for (float& v : img.data) v = u(rng);

  Kernel skew;
  skew.side = 7;
  skew.weights.assign(49, 0.0);
  skew.at(3, 3) = 0.35;
  skew.at(0, 5) = 0.25;
  skew.at(6, 0) = 0.2;
  skew.at(1, 2) = 0.2;

  double worst = 0.0;
  for (const Kernel& k : {gaussian_kernel(1.5, 11), skew}) {
    // Five FoVs sharing one kernel, so tiles switch FoV but not blur.
    RGBPSFSet set;
    set.field_angles = {0, 2, 4, 6, 8};
    set.field_positions = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int i = 0; i < 5; ++i) set.kernels.push_back({k, k, k});
    const ImageBuffer out = render_degraded(img, set, make_patch_layout(n, n, set.field_positions));

    // Dense direct convolution with replicate padding.
    const int r = k.side / 2;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
              acc += k.at(dy + r, dx + r) *
                     img.at(std::clamp(y - dy, 0, n - 1), std::clamp(x - dx, 0, n - 1), c);
          worst = std::max(worst, std::abs(double(out.at(y, x, c)) - std::clamp(acc, 0.0, 1.0)));
        }
      }
    }
  }
  o.check(worst <= 1e-5, "max abs diff " + num(worst));
  o << "512 x 512, Gaussian and asymmetric kernels, max abs diff " << num(worst, 3);
}

void metrics(Outcome& o) {
  double mtf_err = 0.0;
  for (double sigma : {1.0, 2.0, 3.0}) {
    const auto mtf = mtf_from_psf(gaussian_kernel(sigma), kDefaultSfrSamples);
    const auto freqs = sfr_frequencies(kDefaultSfrSamples);
    for (std::size_t i = 0; i < freqs.size() && freqs[i] <= 0.4 + 1e-12; ++i) {
      const double oracle = std::exp(-2 * std::numbers::pi * std::numbers::pi * sigma * sigma * freqs[i] * freqs[i]);
      mtf_err = std::max(mtf_err, std::abs(mtf[i] - oracle));
    }
  }
  o.check(mtf_err <= 0.02, "Gaussian MTF error " + num(mtf_err));

  double fwhm_rel = 0.0;
  for (double sigma : {1.0, 2.0, 3.0}) fwhm_rel = std::max(fwhm_rel, std::abs(fwhm(gaussian_kernel(sigma)) / (2.3548 * sigma) - 1.0));
  o.check(fwhm_rel <= 0.02, "Gaussian FWHM relative error " + num(fwhm_rel));

  const ImageBuffer ref(64, 64, 0.4F);
  ImageBuffer shifted(64, 64);
  for (float& v : shifted.data) v = static_cast<float>(0.4 + 16.0 / 255.0);
  const double p = psnr(shifted, ref);
  o.check(std::abs(p - 24.05) <= 0.01, "PSNR " + num(p));

  const double score = oiq(25.0, 0.75, 0.5);
  o.check(score == 0.5, "OIQ(25, 0.75, 0.5) = " + num(score, 17));

  // Population standard deviation by hand.
  const std::array<double, 5> v{0.8, 0.8, 0.8, 0.8, 0.4};
  double mean = 0, var = 0;
  for (double x : v) mean += x / 5;
  for (double x : v) var += (x - mean) * (x - mean) / 5;
  const double us_oracle = std::exp(-5 * std::sqrt(var) / mean);
  const double us = spatial_uniformity(v).u_s;
  o.check(std::abs(us - 0.3292) <= 1e-3 && std::abs(us - us_oracle) <= 1e-12, "U_S " + num(us));

  o << "MTF err " << num(mtf_err, 3) << ", FWHM rel err " << num(fwhm_rel, 3) << ", PSNR " << num(p, 7)
    << " dB, OIQ " << num(score, 17) << ", U_S " << num(us, 7);
}

void depth_of_field_check(Outcome& o) {
  const long double f = 50, F = 1.4L, d = 0.024L, L = 50, k = F * d * L;
  const double near_oracle = double(k * L / (f * f + k)), far_oracle = double(k * L / (f * f - k));
  const DepthOfField dof = depth_of_field(50, 1.4, 0.024, 50);
  o.check(std::abs(dof.near_mm - 0.033577) <= 1e-5, "near " + num(dof.near_mm, 9));
  o.check(std::abs(dof.far_mm - 0.033622) <= 1e-5, "far " + num(dof.far_mm, 9));
  o.check(std::abs(dof.near_mm - near_oracle) <= 1e-12 && std::abs(dof.far_mm - far_oracle) <= 1e-12,
          "disagrees with the closed form");
  const DepthOfField zero = depth_of_field(50, 1.4, 0.0, 50);
  o.check(zero.near_mm == 0.0 && zero.far_mm == 0.0, "delta = 0 is not (0, 0)");
  o << "(50 mm, F/1.4, 24 um, 50 mm) -> (" << num(dof.near_mm, 8) << ", " << num(dof.far_mm, 8)
    << ") mm; delta = 0 -> (0, 0)";
}

// Membership predicates for each OD class, evaluated independently.
int od_membership(const std::array<double, 5>& v, double alpha, int& matches) {
  double mean = 0, var = 0;
  for (double x : v) mean += x / 5;
  for (double x : v) var += (x - mean) * (x - mean) / 5;
  const double us = std::exp(-5 * std::sqrt(var) / mean);
  int imax = 0, imin = 0;
  for (int i = 1; i < 5; ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(imax)]) imax = i;
    if (v[static_cast<std::size_t>(i)] < v[static_cast<std::size_t>(imin)]) imin = i;
  }
  bool monotone = true;
  for (int i = 0; i < 4; ++i) monotone = monotone && v[static_cast<std::size_t>(i + 1)] <= v[static_cast<std::size_t>(i)];
  const bool uniform = us >= alpha;
  const std::array<bool, 6> in{
      uniform,
      !uniform && imin == 4 && imax == 0 && monotone,
      !uniform && imin == 0,
      !uniform && imin >= 1 && imin <= 3,
      !uniform && imin == 4 && imax == 0 && !monotone,
      !uniform && imin == 4 && imax >= 1 && imax <= 3,
  };
  matches = static_cast<int>(std::count(in.begin(), in.end(), true));
  return static_cast<int>(std::find(in.begin(), in.end(), true) - in.begin());
}

void classifier(Outcome& o) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  std::uniform_int_distribution<int> level(1, 5);
  int not_one = 0, disagree = 0;
  std::array<int, 6> counts{};
  for (int i = 0; i < 100000; ++i) {
    std::array<double, 5> v{};
    // Every other vector comes from a coarse grid so ties are common.
    for (double& x : v) x = i % 2 ? u(rng) : 0.2 * level(rng);
    int matches = 0;
    const int oracle = od_membership(v, 0.8, matches);
    const int got = od_class(v, 0.8);
    if (matches != 1) ++not_one;
    if (got != oracle) ++disagree;
    if (got >= 0 && got <= 5) ++counts[static_cast<std::size_t>(got)];
  }
  o.check(not_one == 0, std::to_string(not_one) + " vectors outside exactly one class");
  o.check(disagree == 0, std::to_string(disagree) + " vectors disagree with the predicate oracle");

  const int c0 = od_class({0.6, 0.6, 0.6, 0.6, 0.6}, 0.8);
  const int c1 = od_class({0.9, 0.85, 0.8, 0.7, 0.5}, 0.8);
  const int c5 = od_class({0.6, 0.9, 0.8, 0.7, 0.4}, 0.8);
  o.check(c0 == 0 && c1 == 1 && c5 == 5, "canonical vectors -> " + std::to_string(c0) + "/" + std::to_string(c1) + "/" +
                                            std::to_string(c5));

  int perm_bad = 0, range_bad = 0;
  for (int i = 0; i < 20000; ++i) {
    std::array<double, 3> ch{u(rng), u(rng), u(rng)};
    if (i % 3 == 0) ch[1] = ch[0];
    const int base = chromatic_class(ch);
    if (base < 1 || base > 5) ++range_bad;
    std::sort(ch.begin(), ch.end());
    do {
      if (chromatic_class(ch) != base) ++perm_bad;
    } while (std::next_permutation(ch.begin(), ch.end()));
  }
  o.check(perm_bad == 0, std::to_string(perm_bad) + " chromatic permutations changed class");
  o.check(range_bad == 0, "chromatic class out of 1..5");
  o << "1e5 vectors, one class each (counts";
  for (int c : counts) o << " " << c;
  o << "), canonical -> " << c0 << "/" << c1 << "/" << c5 << ", chromatic permutation-invariant";
}

std::vector<LibraryEntry> synthetic_source(int per_subclass, int short_subclass = -1, int short_count = 0) {
  std::vector<LibraryEntry> src;
  for (int c = 0; c < kSubclassCount; ++c) {
    const int n = c == short_subclass ? short_count : per_subclass;
    for (int i = 0; i < n; ++i) {
      LibraryEntry e;
      e.report.severity = static_cast<Severity>(c / 6);
      e.report.od_class = c % 6;
      e.report.lens_id = "lens-" + std::to_string(c) + "-" + std::to_string(i);
      e.report.lens_name = e.report.lens_id;
      e.report.oiq = {0.5, 0.5, 0.5, 0.5, 0.5};
      e.report.average_oiq = 0.5;
      e.lens_file = "lenses/" + e.report.lens_id + ".json";
      src.push_back(e);
    }
  }
  return src;
}

void sampler(Outcome& o) {
  const auto r = hybrid_sample(synthetic_source(203), {200, 3}, 42);
  o.check(r.train.entries.size() == 3600, "train has " + std::to_string(r.train.entries.size()));
  o.check(r.test.entries.size() == 54, "test has " + std::to_string(r.test.entries.size()));
  std::array<int, kSubclassCount> tr{}, te{};
  std::set<std::string> train_ids;
  for (const auto& e : r.train.entries) {
    ++tr[static_cast<std::size_t>(e.report.severity) * 6 + static_cast<std::size_t>(e.report.od_class)];
    train_ids.insert(e.report.lens_id);
  }
  int overlap = 0;
  for (const auto& e : r.test.entries) {
    ++te[static_cast<std::size_t>(e.report.severity) * 6 + static_cast<std::size_t>(e.report.od_class)];
    overlap += static_cast<int>(train_ids.count(e.report.lens_id));
  }
  o.check(train_ids.size() == 3600, "duplicate train lenses");
  o.check(overlap == 0, std::to_string(overlap) + " lenses in both splits");
  o.check(std::all_of(tr.begin(), tr.end(), [](int c) { return c == 200; }), "train histogram not flat at 200");
  o.check(std::all_of(te.begin(), te.end(), [](int c) { return c == 3; }), "test histogram not flat at 3");

  std::string message;
  try {
    hybrid_sample(synthetic_source(203, 9, 202), {200, 3}, 42);
  } catch (const DomainError& e) {
    message = e.what();
  }
  const std::string key = subclass_key(9);
  o.check(message.find(key) != std::string::npos, "deficit error does not name " + key + ": '" + message + "'");
  o << "3600 train + 54 test, disjoint, flat 200/3 per subclass; deficit -> \"" << message << "\"";
}

void vq(Outcome& o, unsigned threads) {
  const int K = 1024, d = 512;
  Codebook cb = random_codebook(K, d, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g(0.0F, 1.0F);
  VectorSet queries;
  queries.dim = d;
  for (int i = 0; i < 1000; ++i) {
    if (i % 10 == 0) {
      // Some queries sit exactly on a code.
      const float* c = cb.code(static_cast<int>(rng() % K));
      queries.data.insert(queries.data.end(), c, c + d);
    } else {
      for (int j = 0; j < d; ++j) queries.data.push_back(g(rng));
    }
  }
  const Quantized q = quantize(queries, cb, threads);
  int mismatches = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    int best = -1;
    double best_d = 0.0;
    for (int k = 0; k < K; ++k) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = double(queries.row(i)[j]) - double(cb.code(k)[j]);
        s += diff * diff;
      }
      if (best < 0 || s < best_d) {
        best = k;
        best_d = s;
      }
    }
    if (q.indices[i] != best) ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " of 1000 indices differ from the exhaustive scan");

  const Quantized again = quantize(q.vectors, cb, threads);
  o.check(again.indices == q.indices && again.vectors.data == q.vectors.data, "quantization is not idempotent");

  // 1e4 samples around 40 centres; 20 Lloyd iterations with K = 64.
  VectorSet samples;
  samples.dim = d;
  std::vector<std::vector<float>> centres(40, std::vector<float>(d));
  for (auto& c : centres)
    for (float& x : c) x = 3.0F * g(rng);
  for (int i = 0; i < 10000; ++i) {
    const auto& c = centres[static_cast<std::size_t>(rng() % centres.size())];
    for (int j = 0; j < d; ++j) samples.data.push_back(c[static_cast<std::size_t>(j)] + g(rng));
  }
  std::vector<double> objective;
  fit_codebook(samples, 64, 20, 9, &objective, threads);
  int rises = 0;
  for (std::size_t i = 1; i < objective.size(); ++i)
    if (objective[i] > objective[i - 1]) ++rises;
  o.check(objective.size() == 21, "objective has " + std::to_string(objective.size()) + " entries");
  o.check(rises == 0, std::to_string(rises) + " Lloyd iterations increased the objective");
  o << "1000 queries vs K=1024 d=512 all match, idempotent, Lloyd objective " << num(objective.front(), 5) << " -> "
    << num(objective.back(), 5) << " non-increasing over 20 iterations";
}

VectorSet random_vectors(std::mt19937_64& rng, std::size_t n, int dim) {
  std::normal_distribution<float> g(0.0F, 1.0F);
  VectorSet v;
  v.dim = dim;
  for (std::size_t i = 0; i < n * static_cast<std::size_t>(dim); ++i) v.data.push_back(g(rng));
  return v;
}

void loss_algebra(Outcome& o) {
  std::mt19937_64 rng(23);
  const VectorSet a = random_vectors(rng, 200, 16), recon = random_vectors(rng, 50, 35);

  const VqLosses zero = vq_losses(a, a, recon, recon);
  o.check(zero.recon_l1 == 0 && zero.codebook == 0 && zero.commit == 0 && zero.total == 0, "vq zero identity");

  // Unit offset: every pre_q vector moved by a unit vector (alternating axes).
  VectorSet shifted = a;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data[i * 16 + i % 16] += 1.0F;
  const VqLosses unit = vq_losses(shifted, a, recon, recon, 0.25);
  o.check(std::abs(unit.codebook - 1.0) <= 1e-6 && std::abs(unit.commit - 0.25) <= 1e-6,
          "unit offset gives " + num(unit.codebook) + ", " + num(unit.commit));

  const double fm_zero = feature_matching_loss(a, a), fm_unit = feature_matching_loss(shifted, a);
  o.check(fm_zero == 0.0 && std::abs(fm_unit - 1.0) <= 1e-6, "feature matching zero/unit");
  o.check(feature_matching_loss(shifted, a) == feature_matching_loss(a, shifted), "feature matching not symmetric");

  ImageBuffer gt(24, 24, 0.5F), pred(24, 24, 0.6F);
  const DegradationLosses dz = degradation_losses(gt, gt, 0.0, 0.0);
  o.check(dz.l_odn == 0 && dz.l_lpr == 0 && dz.l_pfp == 0, "degradation zero identity");
  const DegradationLosses doff = degradation_losses(pred, gt, 0.2, 0.3);
  // Float storage puts the offset at 0.6f - 0.5f, within 1e-7 of 0.1.
  o.check(std::abs(doff.l_odn - 0.1) <= 1e-6 && std::abs(doff.l_lpr - 0.3) <= 1e-6 && std::abs(doff.l_pfp - 0.4) <= 1e-6,
          "offset example");

  double composition = 0.0, identity = 0.0;
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_real_distribution<float> px(0.0F, 1.0F);
  for (int t = 0; t < 200; ++t) {
    const int dim = 1 + t % 37;
    const VectorSet p = random_vectors(rng, 30, dim), q = random_vectors(rng, 30, dim);
    const VectorSet r1 = random_vectors(rng, 20, 7), r2 = random_vectors(rng, 20, 7);
    const VqLosses l = vq_losses(p, q, r1, r2, u(rng));
    composition = std::max(composition, std::abs(l.total - (l.recon_l1 + l.codebook + l.commit)));
    ImageBuffer x(16, 16), y(16, 16);
    for (float& v : x.data) v = px(rng);
    for (float& v : y.data) v = px(rng);
    const double lvq = u(rng), lfm = u(rng);
    const DegradationLosses dl = degradation_losses(x, y, lvq, lfm);
    identity = std::max(identity, std::abs((dl.l_lpr - dl.l_pfp) - (lvq - lfm)));
    composition = std::max({composition, std::abs(dl.l_lpr - (lvq + dl.l_odn)), std::abs(dl.l_pfp - (lfm + dl.l_odn))});
    if (l.recon_l1 < 0 || l.codebook < 0 || l.commit < 0 || dl.l_odn < 0) composition = 1e300;
  }
  o.check(composition == 0.0, "composition residual " + num(composition));
  o.check(identity <= 1e-12, "l_lpr - l_pfp identity residual " + num(identity));
  o << "zero and unit-offset identities hold, composition exact, max |(l_lpr - l_pfp) - (l_vq - l_fm)| = "
    << num(identity, 3);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "'" + std::string(ABERFORGE_CLI_PATH) + "' " + args + " >>'" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

void end_to_end(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "aberforge_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  const std::string src = (dir / "source").string(), rep = (dir / "reports").string(), lib = (dir / "lib").string();
  auto step = [&](const std::string& name, const std::string& args) {
    const int status = run_cli(args, log);
    o.check(status == 0, name + " exited " + std::to_string(status) + " (see " + log.string() + ")");
    return status == 0;
  };
  if (!step("gen-source", "--seed " + std::to_string(kDefaultSeed) + " gen-source --out-dir '" + src +
                              "' --count 30 --population 16 --generations 30"))
    return;
  if (!step("quantify", "quantify --source '" + src + "/source.json' --out-dir '" + rep +
                            "' --nfov 16 --nwave 11 --rays 2000"))
    return;
  if (!step("sample", "--seed " + std::to_string(kDefaultSeed) + " sample --reports-dir '" + rep + "' --out-dir '" + lib +
                          "' --m1 1 --m2 1 --relaxed"))
    return;

  const auto listing = nlohmann::json::parse(read_text_file(src + "/source.json"));
  const std::size_t lenses = listing.at("lenses").size();
  o.check(lenses >= 30, "only " + std::to_string(lenses) + " lenses");

  // Independent median over every run's initial and final populations.
  std::vector<double> initial, final_rms;
  for (const auto& run : listing.at("runs")) {
    for (double v : run.at("initial_rms_um")) initial.push_back(v);
    for (double v : run.at("final_rms_um")) final_rms.push_back(v);
  }
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double m0 = initial.empty() ? 0 : median_of(initial), m1 = final_rms.empty() ? 1e300 : median_of(final_rms);
  o.check(!initial.empty() && m1 <= 0.5 * m0, "median RMS " + num(m1) + " um vs initial " + num(m0) + " um");

  std::size_t train_n = 0, test_n = 0;
  try {
    const LensLibManifest train = load_manifest(lib + "/train.json");
    const LensLibManifest test = load_manifest(lib + "/test.json");
    check_disjoint(train, test);
    o.check(serialize_manifest(manifest_from_json(nlohmann::json::parse(serialize_manifest(train)))) ==
                    read_text_file(lib + "/train.json") &&
                serialize_manifest(manifest_from_json(nlohmann::json::parse(serialize_manifest(test)))) ==
                    read_text_file(lib + "/test.json"),
            "manifests do not round-trip byte for byte");
    train_n = train.entries.size();
    test_n = test.entries.size();
    o.check(train_n > 0 && train_n == test_n, "split sizes " + std::to_string(train_n) + "/" + std::to_string(test_n));
    for (const auto& m : {train, test})
      for (const auto& e : m.entries) o.check(fs::exists(e.lens_file), "missing lens file " + e.lens_file);
  } catch (const Error& e) {
    o.check(false, std::string("manifest invalid: ") + e.what());
  }
  o << lenses << " lenses, median RMS " << num(m0, 4) << " -> " << num(m1, 4) << " um (" << num(m1 / m0, 3)
    << " of initial), manifests " << train_n << " train + " << test_n << " test validate and round-trip";
  fs::remove_all(dir);
}

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void(Outcome&)> body;
};

}  // namespace

int main() {
  const unsigned threads = 0;
  const std::vector<Criterion> criteria{
      {"geometry oracle suite", 5, geometry},
      {"paraxial focus", 1, paraxial_focus},
      {"PSF grid contract", 60, psf_grid_contract},
      {"simulator equivalence", 10, simulator},
      {"metric oracles", 10, metrics},
      {"depth of field", 1, depth_of_field_check},
      {"classifier totality", 5, classifier},
      {"sampler reproduction", 5, sampler},
      {"VQ exactness", 30, [&](Outcome& o) { vq(o, threads); }},
      {"loss-oracle algebra", 2, loss_algebra},
      {"end-to-end smoke", 300, end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs < c.budget_s, "took " + num(secs, 3) + " s, budget " + num(c.budget_s) + " s");
    const bool pass = o.failures.empty();
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << c.name << " (" << num(secs, 3) << " s / "
              << num(c.budget_s) << " s): " << o.note.str() << "\n";
    for (const auto& f : o.failures) std::cout << "     - " << f << "\n";
    std::cout.flush();
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
