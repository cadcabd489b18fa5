#pragma once

/**
 * @file lenslib.hpp
 * @brief Lens-source generation and the severity × OD-Class hybrid sampler.
 *
 * EAOD-lite is a small generational GA over singlet/multiplet prescriptions.
 * Decoded lenses are rescaled to their focal-length gene and get a stop sized
 * for their F-number gene, so the design bounds hold by construction and the
 * fitness only has to rank image quality.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "aberforge/error.hpp"
#include "aberforge/lens_io.hpp"
#include "aberforge/optics.hpp"
#include "aberforge/parallel.hpp"
#include "aberforge/quantify.hpp"
#include "aberforge/random.hpp"
#include "aberforge/raytrace.hpp"

namespace aberforge {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v, double rel_slack = 0.0) const {
    return v >= lo - rel_slack * std::abs(lo) && v <= hi + rel_slack * std::abs(hi);
  }
};

struct DesignSpec {
  std::string name = "spec";
  int elements_min = 1;
  int elements_max = 1;
  Range focal_mm{45.0, 55.0};
  Range f_number{4.0, 4.0};
  Range half_fov_deg{5.0, 10.0};
  bool aspheric = false;
  std::vector<Material> materials = default_glass_catalog();
  double gamma = 0.25;     // image-distance perturbation probability
  double delta_um = 24.0;  // permissible circle of confusion
};

inline void validate(const DesignSpec& s) {
  if (s.elements_min < 1 || s.elements_max < s.elements_min) throw DomainError("design spec: bad element range");
  const auto check = [](const Range& r, const char* what) {
    if (!(r.lo > 0.0 && r.hi >= r.lo)) throw DomainError(std::string("design spec: bad ") + what + " range");
  };
  check(s.focal_mm, "focal length");
  check(s.f_number, "F-number");
  check(s.half_fov_deg, "half-FoV");
  if (s.half_fov_deg.hi >= 60.0) throw DomainError("design spec: half-FoV must stay below 60 deg");
  if (s.materials.empty()) throw DomainError("design spec: empty material pool");
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) throw DomainError("design spec: gamma outside [0, 1]");
  if (!(s.delta_um > 0.0)) throw DomainError("design spec: delta must be positive");
}

// ============================================================================
// Depth of field
// ============================================================================

struct DepthOfField {
  double near_mm = 0.0;  // ΔL1
  double far_mm = 0.0;   // ΔL2
};

inline DepthOfField depth_of_field(double f, double F, double delta_mm, double L) {
  if (!(f > 0.0 && F > 0.0 && L > 0.0 && delta_mm >= 0.0)) {
    throw DomainError("depth_of_field: f, F, L must be positive and delta non-negative");
  }
  const double k = F * delta_mm * L;
  if (!(f * f - k > 0.0)) throw DomainError("depth_of_field: unbounded depth of field (f^2 <= F*delta*L)");
  return {k * L / (f * f + k), k * L / (f * f - k)};
}

/**
 * With probability spec.gamma returns a copy whose image distance is moved by
 * a uniform offset in [-ΔL1, ΔL2]. The same seed always gives the same answer.
 */
inline std::optional<LensSystem> perturb_image_distance(const LensSystem& lens, const DesignSpec& spec,
                                                        std::uint64_t seed, double* offset_out = nullptr) {
  const DepthOfField dof = depth_of_field(lens.focal_length, lens.f_number, spec.delta_um * 1e-3, lens.image_distance);
  std::mt19937_64 rng(seed);
  if (!(uniform_unit(rng) < spec.gamma)) return std::nullopt;
  const double offset = -dof.near_mm + uniform_unit(rng) * (dof.near_mm + dof.far_mm);
  LensSystem out = lens;
  out.image_distance += offset;
  out.name += "-dof";
  if (offset_out) *offset_out = offset;
  return out;
}

// ============================================================================
// EAOD-lite
// ============================================================================

namespace eaod {

// Per-element genes in a unit-focal-length frame: front/back curvature,
// centre thickness, following air gap, front/back conic, a4/a6 per face.
enum Gene : std::size_t { C1, C2, Thick, Gap, K1, K2, A4F, A6F, A4B, A6B, kGeneCount };

inline constexpr std::array<Range, kGeneCount> kBounds{{
    {-2.5, 3.5},
    {-3.5, 2.5},
    {0.03, 0.15},
    {0.005, 0.15},
    {-3.0, 1.0},
    {-3.0, 1.0},
    {-2.0, 2.0},
    {-20.0, 20.0},
    {-2.0, 2.0},
    {-20.0, 20.0},
}};

inline constexpr std::array<double, 5> kFields{0.0, 0.35, 0.6, 0.85, 1.0};
inline constexpr std::array<double, 3> kWavelengths{wavelengths::kF, wavelengths::kD, wavelengths::kC};
inline constexpr std::size_t kRaysPerSpot = 61;

struct Element {
  std::array<double, kGeneCount> g{};
  std::size_t material = 0;
};

struct Genome {
  double focal = 50.0;
  double f_number = 4.0;
  double half_fov = 10.0;
  double stop_gap = 0.05;
  double focus = 0.0;  // image-plane shift from the paraxial focus, in focal lengths
  bool aspheric = false;
  std::vector<Element> elements;
};

inline constexpr Range kStopGap{0.0, 0.2};
inline constexpr Range kFocus{-0.05, 0.02};

inline double draw(std::mt19937_64& rng, const Range& r) { return r.lo + uniform_unit(rng) * (r.hi - r.lo); }

inline Genome random_genome(const DesignSpec& spec, std::mt19937_64& rng) {
  Genome g;
  g.focal = draw(rng, spec.focal_mm);
  g.f_number = draw(rng, spec.f_number);
  g.half_fov = draw(rng, spec.half_fov_deg);
  g.stop_gap = draw(rng, kStopGap);
  g.focus = draw(rng, kFocus);
  g.aspheric = spec.aspheric;
  const auto n = static_cast<int>(uniform_index(rng, std::uint64_t(spec.elements_max - spec.elements_min + 1)));
  g.elements.resize(static_cast<std::size_t>(spec.elements_min + n));
  for (auto& e : g.elements) {
    for (std::size_t i = 0; i < kGeneCount; ++i) e.g[i] = draw(rng, kBounds[i]);
    e.material = static_cast<std::size_t>(uniform_index(rng, spec.materials.size()));
  }
  return g;
}

inline std::optional<LensSystem> decode(const Genome& g, const DesignSpec& spec) {
  LensSystem lens;
  lens.name = spec.name;
  lens.surfaces.push_back(Surface{SurfaceKind::Stop, 0.0, 0.0, {}, 1.0, g.stop_gap, "air"});
  std::set<std::size_t> used;
  for (std::size_t k = 0; k < g.elements.size(); ++k) {
    const Element& e = g.elements[k];
    const Material& m = spec.materials[e.material];
    used.insert(e.material);
    const SurfaceKind kind = g.aspheric ? SurfaceKind::Aspheric : SurfaceKind::Spherical;
    Surface front{kind, e.g[C1], 0.0, {}, 1.0, e.g[Thick], m.name};
    Surface back{kind, e.g[C2], 0.0, {}, 1.0, k + 1 < g.elements.size() ? e.g[Gap] : 0.0, "air"};
    if (g.aspheric) {
      front.conic = e.g[K1];
      back.conic = e.g[K2];
      front.aspheric = {e.g[A4F], e.g[A6F]};
      back.aspheric = {e.g[A4B], e.g[A6B]};
    }
    lens.surfaces.push_back(front);
    lens.surfaces.push_back(back);
  }
  for (std::size_t i : used) lens.materials.push_back(spec.materials[i]);
  lens.stop_index = 0;

  const double efl = paraxial_efl(lens);
  if (!std::isfinite(efl) || efl <= 0.0) return std::nullopt;
  const double s = g.focal / efl;
  for (auto& surf : lens.surfaces) {
    surf.curvature /= s;
    surf.thickness *= s;
    double p = s * s * s;
    for (double& a : surf.aspheric) {
      a /= p;
      p *= s * s;
    }
  }
  lens.focal_length = paraxial_efl(lens);
  lens.f_number = g.f_number;
  lens.half_fov_deg = g.half_fov;
  lens.surfaces[0].semi_diameter = stop_radius_for_f_number(lens, g.f_number);
  lens.image_distance = paraxial_bfd(lens) + g.focus * g.focal;
  if (!(lens.image_distance > 0.0) || !std::isfinite(lens.image_distance)) return std::nullopt;

  // Clear apertures from the paraxial marginal + chief ray footprint.
  const EntrancePupil ep = entrance_pupil(lens);
  const double u = std::tan(g.half_fov * std::numbers::pi / 180.0);
  for (std::size_t i = 1; i < lens.surfaces.size(); i += 2) {
    double r = 0.0;
    for (std::size_t j = i; j <= i + 1; ++j) {
      const double ym = paraxial_height_at(lens, ep.radius, 0.0, wavelengths::kD, j);
      const double yc = paraxial_height_at(lens, -ep.z * u, u, wavelengths::kD, j);
      r = std::max(r, 1.1 * (std::abs(ym) + std::abs(yc)));
    }
    lens.surfaces[i].semi_diameter = lens.surfaces[i + 1].semi_diameter = r;
    const auto z1 = try_surface_sag(lens.surfaces[i], r);
    const auto z2 = try_surface_sag(lens.surfaces[i + 1], r);
    if (!z1 || !z2) return std::nullopt;
    if (lens.surfaces[i].thickness + *z2 - *z1 < 0.005 * g.focal) return std::nullopt;
    if (i + 2 < lens.surfaces.size()) {
      const auto z3 = try_surface_sag(lens.surfaces[i + 2], r);
      if (z3 && lens.surfaces[i + 1].thickness + *z3 - *z2 < 0.0) return std::nullopt;
    }
  }
  lens.f_number = paraxial_f_number(lens);
  try {
    validate(lens);
  } catch (const Error&) {
    return std::nullopt;
  }
  return lens;
}

struct Score {
  double fitness = std::numeric_limits<double>::infinity();
  double rms_um = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

// Mean RMS spot (µm) over 5 fields × 3 wavelengths plus failure and focal penalties.
inline Score evaluate(const LensSystem& lens, double target_focal) {
  Score s;
  double rms = 0.0, failed = 0.0;
  for (double frac : kFields) {
    for (double wl : kWavelengths) {
      try {
        const SpotDiagram spot = trace_system(lens, frac * lens.half_fov_deg, wl, kRaysPerSpot, PupilPattern::Ring);
        rms += rms_spot_radius(spot.points);
        failed += 1.0 - spot.survival_fraction();
      } catch (const Error&) {
        return s;
      }
    }
  }
  const double n = double(kFields.size() * kWavelengths.size());
  s.rms_um = rms / n;
  s.fitness = s.rms_um + 1000.0 * failed / n + 1000.0 * std::abs(lens.focal_length - target_focal) / target_focal;
  s.feasible = std::isfinite(s.fitness);
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace eaod

struct Candidate {
  LensSystem lens;
  double fitness = 0.0;
  double rms_um = 0.0;
};

struct EaodResult {
  std::vector<Candidate> population;  // feasible members, best first
  std::vector<double> best_fitness;   // per generation, index 0 is the initial population
  std::vector<double> initial_rms_um;  // feasible members of the first population
  std::vector<double> final_rms_um;
  double initial_median_rms_um = 0.0;
  double final_median_rms_um = 0.0;
};

struct EaodOptions {
  int tournament = 3;
  double crossover_rate = 0.9;
  double mutation_rate = 0.25;
  double mutation_scale = 0.08;  // fraction of the gene range
  unsigned threads = 0;
};

inline EaodResult eaod_lite(const DesignSpec& spec, int population, int generations, std::uint64_t seed,
                            const EaodOptions& opt = {}) {
  using namespace eaod;
  validate(spec);
  if (population < 8) throw DomainError("eaod_lite: population must be >= 8");
  if (generations < 0) throw DomainError("eaod_lite: generations must be >= 0");
  std::mt19937_64 rng(seed);
  const auto P = static_cast<std::size_t>(population);

  std::vector<Genome> genomes(P);
  for (auto& g : genomes) {
    g = random_genome(spec, rng);
    for (int attempt = 0; attempt < 50 && !decode(g, spec); ++attempt) g = random_genome(spec, rng);
  }

  std::vector<std::optional<LensSystem>> lenses(P);
  std::vector<Score> scores(P);
  const auto evaluate_all = [&] {
    parallel_for(P, opt.threads, [&](std::size_t i) {
      lenses[i] = decode(genomes[i], spec);
      scores[i] = lenses[i] ? evaluate(*lenses[i], genomes[i].focal) : Score{};
    });
  };
  const auto ranking = [&] {
    std::vector<std::size_t> order(P);
    for (std::size_t i = 0; i < P; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a].fitness < scores[b].fitness; });
    return order;
  };
  const auto feasible_rms = [&] {
    std::vector<double> v;
    for (const auto& s : scores)
      if (s.feasible) v.push_back(s.rms_um);
    return v;
  };

  EaodResult result;
  evaluate_all();
  result.initial_rms_um = feasible_rms();
  result.initial_median_rms_um = median(result.initial_rms_um);
  const std::size_t elites = std::max<std::size_t>(1, P / 8);

  for (int gen = 0;; ++gen) {
    const auto order = ranking();
    result.best_fitness.push_back(scores[order[0]].fitness);
    if (gen == generations) break;

    const auto pick = [&] {
      std::size_t best = uniform_index(rng, P);
      for (int t = 1; t < opt.tournament; ++t) {
        const std::size_t c = uniform_index(rng, P);
        if (scores[c].fitness < scores[best].fitness || (scores[c].fitness == scores[best].fitness && c < best)) {
          best = c;
        }
      }
      return best;
    };
    std::vector<Genome> next;
    next.reserve(P);
    for (std::size_t e = 0; e < elites; ++e) next.push_back(genomes[order[e]]);
    while (next.size() < P) {
      const Genome& a = genomes[pick()];
      const Genome& b = genomes[pick()];
      Genome child = a;
      if (a.elements.size() == b.elements.size() && uniform_unit(rng) < opt.crossover_rate) {
        const double w = uniform_unit(rng);
        child.stop_gap = w * a.stop_gap + (1 - w) * b.stop_gap;
        child.focus = w * a.focus + (1 - w) * b.focus;
        for (std::size_t k = 0; k < child.elements.size(); ++k) {
          for (std::size_t i = 0; i < kGeneCount; ++i) {
            child.elements[k].g[i] = w * a.elements[k].g[i] + (1 - w) * b.elements[k].g[i];
          }
          if (uniform_unit(rng) < 0.5) child.elements[k].material = b.elements[k].material;
        }
      }
      std::normal_distribution<double> gauss(0.0, 1.0);
      const auto mutate = [&](double& v, const Range& r) {
        if (uniform_unit(rng) < opt.mutation_rate) {
          v = std::clamp(v + gauss(rng) * opt.mutation_scale * (r.hi - r.lo), r.lo, r.hi);
        }
      };
      mutate(child.stop_gap, kStopGap);
      mutate(child.focus, kFocus);
      for (auto& e : child.elements) {
        for (std::size_t i = 0; i < kGeneCount; ++i) {
          if (!spec.aspheric && i >= K1) break;
          mutate(e.g[i], kBounds[i]);
        }
        if (uniform_unit(rng) < 0.05) e.material = static_cast<std::size_t>(uniform_index(rng, spec.materials.size()));
      }
      next.push_back(std::move(child));
    }
    genomes = std::move(next);
    evaluate_all();
  }

  result.final_rms_um = feasible_rms();
  result.final_median_rms_um = median(result.final_rms_um);
  for (std::size_t i : ranking()) {
    if (!scores[i].feasible) continue;
    result.population.push_back({*lenses[i], scores[i].fitness, scores[i].rms_um});
  }
  if (result.population.empty()) throw DomainError("eaod_lite: no feasible individual after all generations");
  return result;
}

// ============================================================================
// Lens source
// ============================================================================

struct SourceOptions {
  int population = 16;
  int generations = 30;
  int keep_per_run = 0;  // 0 means population / 2
  int max_runs = 0;      // 0 means 4 * count + 4
  std::string output_dir;  // empty: do not write files
  std::string prefix = "lens";
  EaodOptions eaod;
};

struct SourceLens {
  LensSystem lens;
  std::string path;
  std::string lens_id;
  double fitness = 0.0;
  double rms_um = 0.0;
  bool perturbed = false;
  bool aspheric = false;
};

struct SourceRun {
  std::uint64_t seed = 0;
  bool aspheric = false;
  bool feasible = true;
  double initial_median_rms_um = 0.0;
  double final_median_rms_um = 0.0;
  std::vector<double> initial_rms_um;
  std::vector<double> final_rms_um;
};

struct LensSource {
  std::vector<SourceLens> lenses;
  std::vector<SourceRun> runs;

  // Medians over every feasible individual of every run.
  double initial_median_rms_um() const {
    std::vector<double> v;
    for (const auto& r : runs) v.insert(v.end(), r.initial_rms_um.begin(), r.initial_rms_um.end());
    return eaod::median(v);
  }
  double final_median_rms_um() const {
    std::vector<double> v;
    for (const auto& r : runs) v.insert(v.end(), r.final_rms_um.begin(), r.final_rms_um.end());
    return eaod::median(v);
  }
};

// Runs EAOD-lite repeatedly, alternating the aspheric flag when the design
// allows it, and adds image-distance variants until `count` lenses exist.
inline LensSource build_lens_source(const DesignSpec& spec, int count, std::uint64_t seed,
                                    const SourceOptions& opt = {}) {
  validate(spec);
  if (count < 1) throw DomainError("build_lens_source: count must be >= 1");
  const int keep = opt.keep_per_run > 0 ? opt.keep_per_run : std::max(1, opt.population / 2);
  const int max_runs = opt.max_runs > 0 ? opt.max_runs : 4 * count + 4;
  if (!opt.output_dir.empty()) std::filesystem::create_directories(opt.output_dir);

  LensSource source;
  std::vector<SourceLens>& out = source.lenses;
  std::set<std::string> seen;
  int base_count = 0;
  const auto emit = [&](LensSystem lens, const Candidate& c, bool perturbed, bool aspheric) {
    SourceLens s;
    s.lens_id = lens_id(lens);
    if (!seen.insert(s.lens_id).second) return;
    s.fitness = c.fitness;
    s.rms_um = c.rms_um;
    s.perturbed = perturbed;
    s.aspheric = aspheric;
    if (!opt.output_dir.empty()) {
      s.path = (std::filesystem::path(opt.output_dir) / (lens.name + ".json")).string();
      save_lens(s.path, lens);
    }
    s.lens = std::move(lens);
    out.push_back(std::move(s));
  };

  for (int run = 0; run < max_runs && static_cast<int>(out.size()) < count; ++run) {
    DesignSpec variant = spec;
    variant.aspheric = spec.aspheric && run % 2 == 1;
    SourceRun stats;
    stats.seed = derive_seed(seed, std::uint64_t(run));
    stats.aspheric = variant.aspheric;
    EaodResult r;
    try {
      r = eaod_lite(variant, opt.population, opt.generations, stats.seed, opt.eaod);
    } catch (const DomainError&) {
      stats.feasible = false;
      source.runs.push_back(std::move(stats));
      continue;
    }
    stats.initial_median_rms_um = r.initial_median_rms_um;
    stats.final_median_rms_um = r.final_median_rms_um;
    stats.initial_rms_um = r.initial_rms_um;
    stats.final_rms_um = r.final_rms_um;
    source.runs.push_back(std::move(stats));
    const int take = std::min<int>(keep, static_cast<int>(r.population.size()));
    for (int k = 0; k < take; ++k) {
      const Candidate& c = r.population[static_cast<std::size_t>(k)];
      LensSystem base = c.lens;
      char tag[32];
      std::snprintf(tag, sizeof tag, "-r%03d-k%02d", run, k);
      base.name = opt.prefix + tag;
      const std::size_t before = out.size();
      emit(base, c, false, variant.aspheric);
      if (out.size() == before) continue;
      ++base_count;
      const auto stream = std::uint64_t(1) << 32 | std::uint64_t(run) << 8 | std::uint64_t(k);
      if (auto v = perturb_image_distance(base, spec, derive_seed(seed, stream))) {
        emit(std::move(*v), c, true, variant.aspheric);
      }
    }
  }
  if (static_cast<int>(out.size()) < count) {
    throw DomainError("build_lens_source: only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                      " feasible lenses after " + std::to_string(source.runs.size()) + " runs");
  }
  return source;
}

inline nlohmann::ordered_json spec_to_json(const DesignSpec& s) {
  nlohmann::ordered_json m = nlohmann::ordered_json::array();
  for (const auto& mat : s.materials) m.push_back({{"name", mat.name}, {"nd", mat.nd}, {"vd", mat.vd}});
  return {{"name", s.name},
          {"elements", {s.elements_min, s.elements_max}},
          {"focal_mm", {s.focal_mm.lo, s.focal_mm.hi}},
          {"f_number", {s.f_number.lo, s.f_number.hi}},
          {"half_fov_deg", {s.half_fov_deg.lo, s.half_fov_deg.hi}},
          {"aspheric", s.aspheric},
          {"materials", m},
          {"gamma", s.gamma},
          {"delta_um", s.delta_um}};
}

// Source listing written by gen-source: spec, seed, per-run statistics and lens files.
inline nlohmann::ordered_json source_to_json(const LensSource& src, const DesignSpec& spec, std::uint64_t seed,
                                             const SourceOptions& opt) {
  nlohmann::ordered_json j;
  j["schema"] = "aberforge.lens_source";
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["spec"] = spec_to_json(spec);
  j["eaod"] = {{"population", opt.population}, {"generations", opt.generations}};
  j["initial_median_rms_um"] = src.initial_median_rms_um();
  j["final_median_rms_um"] = src.final_median_rms_um();
  auto runs = nlohmann::ordered_json::array();
  for (const auto& r : src.runs) {
    runs.push_back({{"seed", r.seed},
                    {"aspheric", r.aspheric},
                    {"feasible", r.feasible},
                    {"initial_median_rms_um", r.initial_median_rms_um},
                    {"final_median_rms_um", r.final_median_rms_um},
                    {"initial_rms_um", r.initial_rms_um},
                    {"final_rms_um", r.final_rms_um}});
  }
  j["runs"] = std::move(runs);
  auto lenses = nlohmann::ordered_json::array();
  for (const auto& l : src.lenses) {
    lenses.push_back({{"lens_file", std::filesystem::path(l.path).filename().string()},
                      {"lens_id", l.lens_id},
                      {"name", l.lens.name},
                      {"fitness", l.fitness},
                      {"rms_um", l.rms_um},
                      {"perturbed", l.perturbed},
                      {"aspheric", l.aspheric}});
  }
  j["count"] = src.lenses.size();
  j["lenses"] = std::move(lenses);
  return j;
}

// Lens file paths listed in a source file, resolved against its directory.
inline std::vector<std::string> source_lens_files(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    if (j.at("schema").get<std::string>() != "aberforge.lens_source") throw FormatError("'" + path + "' is not a lens source");
    std::vector<std::string> files;
    const auto dir = std::filesystem::path(path).parent_path();
    for (const auto& l : j.at("lenses")) files.push_back((dir / l.at("lens_file").get<std::string>()).string());
    return files;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

// ============================================================================
// Hybrid sampling
// ============================================================================

inline constexpr int kSubclassCount = 18;

inline int subclass_index(Severity s, int od) { return static_cast<int>(s) * 6 + od; }

inline std::string subclass_key(int index) {
  return to_string(static_cast<Severity>(index / 6)) + "/OD" + std::to_string(index % 6);
}

inline int parse_subclass_key(const std::string& key) {
  for (int i = 0; i < kSubclassCount; ++i)
    if (subclass_key(i) == key) return i;
  throw FormatError("unknown subclass key '" + key + "'");
}

struct LibraryEntry {
  std::string lens_file;
  OIQReport report;

  int subclass() const { return subclass_index(report.severity, report.od_class); }
};

struct SamplerConfig {
  int m1 = 200;
  int m2 = 3;
  bool relaxed = false;  // skip underpopulated subclasses instead of failing
};

struct LensLibManifest {
  std::string library = "lenslib";
  std::string split = "train";
  std::uint64_t seed = kDefaultSeed;
  SamplerConfig sampler;
  std::vector<std::string> skipped;  // relaxed mode only
  std::vector<LibraryEntry> entries;
};

struct SampleResult {
  LensLibManifest train;
  LensLibManifest test;
};

/**
 * Draws m1 + m2 lenses per subclass uniformly without replacement; the first
 * m1 go to train, the next m2 to test. Entries are canonicalized (sorted by
 * lens id, duplicates removed) first so input order does not matter.
 */
inline SampleResult hybrid_sample(std::vector<LibraryEntry> source, const SamplerConfig& cfg, std::uint64_t seed,
                                  const std::string& library = "lenslib") {
  if (cfg.m1 < 0 || cfg.m2 < 0 || cfg.m1 + cfg.m2 < 1) throw DomainError("hybrid_sample: need m1, m2 >= 0 and m1 + m2 >= 1");
  std::stable_sort(source.begin(), source.end(), [](const LibraryEntry& a, const LibraryEntry& b) {
    return std::tie(a.report.lens_id, a.lens_file) < std::tie(b.report.lens_id, b.lens_file);
  });
  source.erase(std::unique(source.begin(), source.end(),
                           [](const LibraryEntry& a, const LibraryEntry& b) { return a.report.lens_id == b.report.lens_id; }),
               source.end());

  std::array<std::vector<const LibraryEntry*>, kSubclassCount> groups;
  for (const auto& e : source) {
    if (e.report.od_class < 0 || e.report.od_class > 5) throw DomainError("hybrid_sample: od_class outside 0..5");
    groups[static_cast<std::size_t>(e.subclass())].push_back(&e);
  }
  const auto need = static_cast<std::size_t>(cfg.m1 + cfg.m2);
  std::string deficit;
  std::vector<std::string> skipped;
  for (int i = 0; i < kSubclassCount; ++i) {
    const auto have = groups[static_cast<std::size_t>(i)].size();
    if (have >= need) continue;
    const std::string item = subclass_key(i) + " has " + std::to_string(have);
    skipped.push_back(item);
    deficit += (deficit.empty() ? "" : ", ") + item;
  }
  if (!cfg.relaxed && !deficit.empty()) {
    throw DomainError("hybrid_sample: subclasses below m1 + m2 = " + std::to_string(need) + ": " + deficit);
  }

  SampleResult r;
  for (LensLibManifest* m : {&r.train, &r.test}) {
    m->library = library;
    m->seed = seed;
    m->sampler = cfg;
    m->skipped = skipped;
  }
  r.train.split = "train";
  r.test.split = "test";
  std::mt19937_64 rng(seed);
  for (int i = 0; i < kSubclassCount; ++i) {
    auto& g = groups[static_cast<std::size_t>(i)];
    if (g.size() < need) continue;
    // Partial Fisher-Yates: the first `need` slots become the draw order.
    for (std::size_t k = 0; k < need; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(uniform_index(rng, g.size() - k));
      std::swap(g[k], g[j]);
      (k < static_cast<std::size_t>(cfg.m1) ? r.train : r.test).entries.push_back(*g[k]);
    }
  }
  return r;
}

inline std::array<int, kSubclassCount> subclass_histogram(const LensLibManifest& m) {
  std::array<int, kSubclassCount> h{};
  for (const auto& e : m.entries) ++h[static_cast<std::size_t>(e.subclass())];
  return h;
}

inline nlohmann::ordered_json manifest_to_json(const LensLibManifest& m) {
  nlohmann::ordered_json j;
  j["schema"] = "aberforge.lenslib_manifest";
  j["schema_version"] = 1;
  j["library"] = m.library;
  j["split"] = m.split;
  j["seed"] = m.seed;
  j["sampler"] = {{"m1", m.sampler.m1}, {"m2", m.sampler.m2}, {"relaxed", m.sampler.relaxed},
                  {"subclasses", kSubclassCount}};
  j["skipped_subclasses"] = m.skipped;
  j["count"] = m.entries.size();
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"lens_file", e.lens_file},
                       {"lens_id", e.report.lens_id},
                       {"subclass", subclass_key(e.subclass())},
                       {"report", report_to_json(e.report)}});
  }
  j["entries"] = std::move(entries);
  return j;
}

inline std::string serialize_manifest(const LensLibManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

// Parses and checks a manifest: schema, split name, subclass keys that
// agree with the embedded reports, and unique lens ids.
inline LensLibManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "aberforge.lenslib_manifest") throw FormatError("not a lenslib manifest");
    if (j.at("schema_version").get<int>() != 1) throw FormatError("unsupported manifest schema_version");
    LensLibManifest m;
    m.library = j.at("library");
    m.split = j.at("split");
    if (m.split != "train" && m.split != "test") throw FormatError("manifest split must be train or test");
    m.seed = j.at("seed");
    m.sampler.m1 = j.at("sampler").at("m1");
    m.sampler.m2 = j.at("sampler").at("m2");
    m.sampler.relaxed = j.at("sampler").at("relaxed");
    m.skipped = j.at("skipped_subclasses").get<std::vector<std::string>>();
    std::set<std::string> ids;
    for (const auto& e : j.at("entries")) {
      LibraryEntry le;
      le.lens_file = e.at("lens_file");
      le.report = report_from_json(e.at("report"));
      if (e.at("lens_id").get<std::string>() != le.report.lens_id) throw FormatError("entry lens_id disagrees with report");
      if (parse_subclass_key(e.at("subclass")) != le.subclass()) throw FormatError("entry subclass disagrees with report");
      if (!ids.insert(le.report.lens_id).second) throw FormatError("duplicate lens id " + le.report.lens_id);
      m.entries.push_back(std::move(le));
    }
    if (j.at("count").get<std::size_t>() != m.entries.size()) throw FormatError("manifest count mismatch");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline LensLibManifest load_manifest(const std::string& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

inline void save_manifest(const std::string& path, const LensLibManifest& m) { write_text_file(path, serialize_manifest(m)); }

// Train and test must not share a lens.
inline void check_disjoint(const LensLibManifest& train, const LensLibManifest& test) {
  std::set<std::string> ids;
  for (const auto& e : train.entries) ids.insert(e.report.lens_id);
  for (const auto& e : test.entries) {
    if (ids.count(e.report.lens_id)) throw DomainError("lens " + e.report.lens_id + " is in both train and test");
  }
}

}  // namespace aberforge
