// aberforge command-line driver.
//
// Exit status: 0 success, 1 domain/data error, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aberforge/aberforge.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

using namespace aberforge;

constexpr const char* kVersion = "1.0.0";

struct Globals {
  unsigned threads = 0;
  bool quiet = false;
  std::optional<std::string> seed_text;
};

// The seed line is printed even under --quiet, which only mutes std::cout.
std::ostream* g_seed_stream = &std::cout;

// Effective seed: --seed, then ABERFORGE_SEED, then the built-in default.
std::uint64_t effective_seed(const Globals& g) {
  if (g.seed_text) return parse_seed(*g.seed_text);
  if (auto env = seed_from_environment()) return *env;
  return kDefaultSeed;
}

void write_json(const std::string& path, const ordered_json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

// Machine-readable record of one invocation, written next to its outputs.
struct RunSummary {
  ordered_json j;

  RunSummary(const std::string& subcommand) {
    j["tool"] = "aberforge";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = nullptr;
    j["config"] = ordered_json::object();
    j["outputs"] = ordered_json::array();
    j["results"] = ordered_json::object();
  }

  void seed(std::uint64_t s) {
    j["seed"] = s;
    *g_seed_stream << "seed: " << s << "\n";
  }
  void output(const std::string& path) { j["outputs"].push_back(path); }
  void write(const std::string& path) const { write_json(path, j); }
};

std::string summary_path_for(const std::string& output) { return output + ".summary.json"; }

// ---------------------------------------------------------------------------
// PSF helpers shared by several subcommands
// ---------------------------------------------------------------------------

struct PsfFlags {
  std::string psf_path;
  int n_fov = 64;
  int n_wave = 31;
  std::size_t rays = 10000;
  std::string spacing = "angle";

  void add(CLI::App* sub, int default_fov, std::size_t default_rays) {
    n_fov = default_fov;
    rays = default_rays;
    sub->add_option("--psf", psf_path, "Precomputed PSF grid (.psfg); traced from the lens when omitted");
    sub->add_option("--nfov", n_fov, "Field samples when tracing")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--nwave", n_wave, "Wavelength samples when tracing")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--rays", rays, "Rays per PSF when tracing")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--spacing", spacing, "Field spacing: angle or height")
        ->capture_default_str()
        ->check(CLI::IsMember({"angle", "height"}));
  }

  PsfGridOptions options(unsigned threads) const {
    PsfGridOptions o;
    o.n_fov = n_fov;
    o.n_wave = n_wave;
    o.rays_per_psf = rays;
    o.spacing = spacing == "height" ? FieldSpacing::LinearHeight : FieldSpacing::LinearAngle;
    o.threads = threads;
    return o;
  }

  ordered_json describe() const {
    if (!psf_path.empty()) return {{"psf", psf_path}};
    return {{"nfov", n_fov}, {"nwave", n_wave}, {"rays", rays}, {"spacing", spacing}};
  }

  RGBPSFSet load(const LensSystem& lens, unsigned threads) const {
    const PSFGrid grid = psf_path.empty() ? psf_grid(lens, options(threads)) : load_psf_grid(psf_path);
    return stack_rgb(grid, default_rgb_response(grid.wavelengths));
  }
};

LensSystem load_lens_with_sensor(const std::string& path) {
  LensSystem lens = load_lens(path);
  validate(lens);
  if (!lens.sensor) assign_sensor(lens);
  return lens;
}

ordered_json sensor_json(const Sensor& s) { return {{"pitch_um", s.pitch_um}, {"resolution", s.resolution}}; }

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct TraceCmd {
  std::string lens_path, out;
  double field = 0.0, wavelength = wavelengths::kD;
  std::size_t rays = 1000;
  std::string pattern = "grid";

  void add(CLI::App& app, std::function<void()>& run, const Globals&) {
    auto* sub = app.add_subcommand("trace", "Trace a spot diagram and report paraxial data");
    sub->add_option("--lens", lens_path, "Lens file")->required();
    sub->add_option("--field", field, "Field angle in degrees")->capture_default_str();
    sub->add_option("--wavelength", wavelength, "Wavelength in nm")->capture_default_str();
    sub->add_option("--rays", rays, "Pupil samples")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--pattern", pattern, "Pupil pattern: grid or ring")
        ->capture_default_str()
        ->check(CLI::IsMember({"grid", "ring"}));
    sub->add_option("--out", out, "Write the result as JSON");
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const LensSystem lens = load_lens(lens_path);
    validate(lens);
    const SpotDiagram spot =
        trace_system(lens, field, wavelength, rays, pattern == "ring" ? PupilPattern::Ring : PupilPattern::Grid);
    Vec2 c;
    for (const auto& p : spot.points) {
      c.x += p.x / double(spot.points.size());
      c.y += p.y / double(spot.points.size());
    }
    ordered_json r;
    r["lens"] = lens.name;
    r["field_deg"] = field;
    r["wavelength_nm"] = wavelength;
    r["paraxial"] = {{"efl_mm", paraxial_efl(lens)},
                     {"bfd_mm", paraxial_bfd(lens)},
                     {"f_number", paraxial_f_number(lens)},
                     {"entrance_pupil_z_mm", entrance_pupil(lens).z},
                     {"entrance_pupil_radius_mm", entrance_pupil(lens).radius}};
    r["launched"] = spot.launched;
    r["survived"] = spot.points.size();
    r["vignetted_fraction"] = spot.vignetted_fraction();
    r["tir_fraction"] = spot.tir_fraction();
    r["diverged_fraction"] = spot.diverged_fraction();
    r["rms_spot_um"] = rms_spot_radius(spot.points);
    r["centroid_mm"] = {c.x, c.y};
    if (spot.chief) r["chief_mm"] = {spot.chief->x, spot.chief->y};
    std::cout << r.dump(2) << "\n";
    if (!out.empty()) {
      write_json(out, r);
      RunSummary s("trace");
      s.j["config"] = {{"lens", lens_path}, {"field", field}, {"wavelength", wavelength}, {"rays", rays}, {"pattern", pattern}};
      s.output(out);
      s.j["results"] = {{"rms_spot_um", r["rms_spot_um"]}};
      s.write(summary_path_for(out));
    }
  }
};

struct PsfCmd {
  std::string lens_path, out;
  PsfFlags psf;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("psf", "Trace the FoV x wavelength PSF grid of a lens");
    sub->add_option("--lens", lens_path, "Lens file")->required();
    sub->add_option("--out", out, "Output PSF grid (.psfg)")->required();
    sub->add_option("--nfov", psf.n_fov, "Field samples")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--nwave", psf.n_wave, "Wavelength samples")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--rays", psf.rays, "Rays per PSF")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--spacing", psf.spacing, "Field spacing: angle or height")
        ->capture_default_str()
        ->check(CLI::IsMember({"angle", "height"}));
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const LensSystem lens = load_lens_with_sensor(lens_path);
    const PSFGrid grid = psf_grid(lens, psf.options(g->threads));
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_psf_grid(out, grid);
    std::cout << "psf grid " << grid.n_fov() << " x " << grid.n_wave() << ", max kernel " << grid.max_kernel()
              << " px, sensor " << lens.sensor->pitch_um << " um -> " << out << "\n";
    RunSummary s("psf");
    s.j["config"] = {{"lens", lens_path}, {"grid", psf.describe()}};
    s.output(out);
    s.j["results"] = {{"n_fov", grid.n_fov()}, {"n_wave", grid.n_wave()}, {"max_kernel", grid.max_kernel()},
                      {"sensor", sensor_json(*lens.sensor)}};
    s.write(summary_path_for(out));
  }
};

struct SimulateCmd {
  std::string lens_path, input = "checkerboard", out, clear_out;
  double read_noise = 0.0, shot_noise = 0.0;
  int patch = 64, overlap = 16;
  PsfFlags psf;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("simulate", "Render the lens-degraded version of an image");
    sub->add_option("--lens", lens_path, "Lens file")->required();
    sub->add_option("--input", input, "Clear image (.png/.pfm) or 'checkerboard'")->capture_default_str();
    sub->add_option("--out", out, "Degraded image (.png/.pfm)")->required();
    sub->add_option("--clear-out", clear_out, "Also write the clear image");
    sub->add_option("--read-noise", read_noise, "Read-noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--shot-noise", shot_noise, "Shot-noise variance per unit signal")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--patch", patch, "Patch side")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--overlap", overlap, "Patch overlap")->capture_default_str()->check(CLI::NonNegativeNumber);
    psf.add(sub, 64, 10000);
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const LensSystem lens = load_lens_with_sensor(lens_path);
    const std::uint64_t seed = effective_seed(*g);
    RunSummary s("simulate");
    s.seed(seed);
    const int res = lens.sensor->resolution;
    const ImageBuffer clear = input == "checkerboard" ? checkerboard(res, res) : load_image(input);
    const RGBPSFSet psfs = psf.load(lens, g->threads);
    const double scale = half_diagonal_px(clear.height, clear.width) / half_diagonal_px(res, res);
    const PatchLayout layout =
        make_patch_layout(clear.height, clear.width, psfs.field_positions, full_field_radius_px(lens) * scale, patch, overlap);
    RenderOptions ro;
    ro.threads = g->threads;
    ImageBuffer degraded = render_degraded(clear, psfs, layout, ro);
    if (read_noise > 0.0 || shot_noise > 0.0) degraded = add_sensor_noise(degraded, read_noise, shot_noise, seed);
    save_image(out, degraded);
    s.output(out);
    if (!clear_out.empty()) {
      save_image(clear_out, clear);
      s.output(clear_out);
    }
    const Fidelity f = fidelity_metrics(degraded, clear);
    std::cout << "simulated " << clear.width << "x" << clear.height << " -> " << out << " (PSNR " << f.psnr
              << " dB, SSIM " << f.ssim << ")\n";
    s.j["config"] = {{"lens", lens_path}, {"input", input}, {"grid", psf.describe()}, {"patch", patch},
                     {"overlap", overlap}, {"read_noise", read_noise}, {"shot_noise", shot_noise}};
    s.j["results"] = {{"psnr", f.psnr}, {"ssim", f.ssim}};
    s.write(summary_path_for(out));
  }
};

struct QuantifyFlags {
  double alpha = 0.8;
  int n_p = kDefaultSfrSamples;
  double medium = 1.0 / 3.0, mild = 2.0 / 3.0;

  void add(CLI::App* sub) {
    sub->add_option("--alpha", alpha, "Uniformity threshold for OD-Class 0")->capture_default_str();
    sub->add_option("--np", n_p, "SFR samples")->capture_default_str();
    sub->add_option("--medium", medium, "Lower bound of the Medium severity bin")->capture_default_str();
    sub->add_option("--mild", mild, "Lower bound of the Mild severity bin")->capture_default_str();
  }

  QuantifyConfig config(unsigned threads) const {
    QuantifyConfig c;
    c.alpha = alpha;
    c.n_p = n_p;
    c.thresholds = {medium, mild};
    c.threads = threads;
    validate(c);
    return c;
  }

  ordered_json describe() const { return {{"alpha", alpha}, {"np", n_p}, {"medium", medium}, {"mild", mild}}; }
};

struct QuantifyCmd {
  std::vector<std::string> lenses;
  std::string source, out, out_dir;
  PsfFlags psf;
  QuantifyFlags q;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("quantify", "Measure OIQ at five FoVs and classify the degradation");
    sub->add_option("--lens", lenses, "Lens file(s)");
    sub->add_option("--source", source, "Lens source listing written by gen-source");
    sub->add_option("--out", out, "Report file (single lens)");
    sub->add_option("--out-dir", out_dir, "Directory for <lens>.report.json files");
    psf.add(sub, 64, 10000);
    q.add(sub);
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    std::vector<std::string> files = lenses;
    if (!source.empty()) {
      const auto more = source_lens_files(source);
      files.insert(files.end(), more.begin(), more.end());
    }
    if (files.empty()) throw CLI::ValidationError("quantify", "needs --lens or --source");
    if (out.empty() == out_dir.empty()) throw CLI::ValidationError("quantify", "give exactly one of --out and --out-dir");
    if (!out.empty() && files.size() != 1) throw CLI::ValidationError("quantify", "--out takes a single lens; use --out-dir");
    if (!psf.psf_path.empty() && files.size() != 1) throw CLI::ValidationError("quantify", "--psf takes a single lens");
    const QuantifyConfig config = q.config(g->threads);
    RunSummary s("quantify");
    s.j["config"] = {{"lenses", files}, {"grid", psf.describe()}, {"quantify", q.describe()}};
    auto results = ordered_json::array();
    for (const auto& file : files) {
      const LensSystem lens = load_lens_with_sensor(file);
      const OIQReport report = quantify_lens(lens, psf.load(lens, g->threads), config);
      ordered_json j = report_to_json(report);
      j["lens_file"] = file;
      const std::string path =
          out.empty() ? (fs::path(out_dir) / (fs::path(file).stem().string() + ".report.json")).string() : out;
      write_json(path, j);
      s.output(path);
      results.push_back({{"lens", report.lens_name}, {"average_oiq", report.average_oiq},
                         {"severity", to_string(report.severity)}, {"od_class", report.od_class}});
      std::cout << report.lens_name << ": OIQ";
      for (double v : report.oiq) std::cout << " " << v;
      std::cout << " | avg " << report.average_oiq << " " << to_string(report.severity) << " OD" << report.od_class
                << " U_S " << report.u_s << " chromatic " << report.chromatic_class << "\n";
    }
    s.j["results"] = results;
    s.write(out.empty() ? (fs::path(out_dir) / "run_summary.json").string() : summary_path_for(out));
  }
};

struct ClassifyCmd {
  std::vector<double> oiq, channels;
  std::string report, out;
  QuantifyFlags q;

  void add(CLI::App& app, std::function<void()>& run, const Globals&) {
    auto* sub = app.add_subcommand("classify", "Severity, U_S, OD-Class and chromatic class of OIQ values");
    sub->add_option("--oiq", oiq, "Five per-FoV OIQ values, centre first")->expected(5);
    sub->add_option("--channels", channels, "Per-channel average OIQ (R G B)")->expected(3);
    sub->add_option("--report", report, "Take the values from a report file");
    sub->add_option("--out", out, "Write the classification as JSON");
    q.add(sub);
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    if (oiq.empty() == report.empty()) throw CLI::ValidationError("classify", "give exactly one of --oiq and --report");
    const QuantifyConfig config = q.config(0);
    std::array<double, 5> v{};
    std::optional<std::array<double, 3>> ch;
    if (!report.empty()) {
      const OIQReport r = report_from_json(read_json(report));
      v = r.oiq;
      ch = r.channel_average_oiq;
    } else {
      std::copy(oiq.begin(), oiq.end(), v.begin());
    }
    if (!channels.empty()) ch = std::array<double, 3>{channels[0], channels[1], channels[2]};
    for (double x : v)
      if (!(x > 0.0)) throw DomainError("classify: OIQ values must be positive");
    double avg = 0.0;
    for (double x : v) avg += x / 5.0;
    const Uniformity u = spatial_uniformity(v);
    ordered_json r;
    r["oiq"] = v;
    r["average_oiq"] = avg;
    r["severity"] = to_string(severity_class(avg, config.thresholds));
    r["cv"] = u.cv;
    r["u_s"] = u.u_s;
    r["od_class"] = od_class(v, config.alpha);
    if (ch) r["chromatic_class"] = chromatic_class(*ch);
    std::cout << r.dump(2) << "\n";
    if (!out.empty()) {
      write_json(out, r);
      RunSummary s("classify");
      s.j["config"] = q.describe();
      s.output(out);
      s.write(summary_path_for(out));
    }
  }
};

struct GenSourceCmd {
  std::string out_dir, prefix = "lens";
  int count = 30, population = 16, generations = 30;
  DesignSpec spec;
  std::vector<int> elements{1, 2};
  std::vector<double> focal{35, 70}, fnum{2.8, 8}, hfov{5, 20};
  bool no_aspheric = false;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    spec.name = "source";
    auto* sub = app.add_subcommand("gen-source", "Generate a lens source with EAOD-lite and DoF perturbation");
    sub->add_option("--out-dir", out_dir, "Directory for lens files and source.json")->required();
    sub->add_option("--count", count, "Minimum number of lenses")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--population", population, "GA population")->capture_default_str();
    sub->add_option("--generations", generations, "GA generations")->capture_default_str();
    sub->add_option("--gamma", spec.gamma, "Image-distance perturbation probability")->capture_default_str();
    sub->add_option("--delta", spec.delta_um, "Permissible circle of confusion (um)")->capture_default_str();
    sub->add_option("--elements", elements, "Element count range")->expected(2)->capture_default_str();
    sub->add_option("--focal", focal, "Focal length range (mm)")->expected(2)->capture_default_str();
    sub->add_option("--fnum", fnum, "F-number range")->expected(2)->capture_default_str();
    sub->add_option("--hfov", hfov, "Half-FoV range (deg)")->expected(2)->capture_default_str();
    sub->add_flag("--no-aspheric", no_aspheric, "Spherical surfaces only");
    sub->add_option("--prefix", prefix, "Lens name prefix")->capture_default_str();
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    spec.elements_min = elements[0];
    spec.elements_max = elements[1];
    spec.focal_mm = {focal[0], focal[1]};
    spec.f_number = {fnum[0], fnum[1]};
    spec.half_fov_deg = {hfov[0], hfov[1]};
    spec.aspheric = !no_aspheric;
    validate(spec);
    const std::uint64_t seed = effective_seed(*g);
    RunSummary s("gen-source");
    s.seed(seed);
    SourceOptions opt;
    opt.population = population;
    opt.generations = generations;
    opt.output_dir = out_dir;
    opt.prefix = prefix;
    opt.eaod.threads = g->threads;
    const LensSource src = build_lens_source(spec, count, seed, opt);
    const std::string listing = (fs::path(out_dir) / "source.json").string();
    const ordered_json j = source_to_json(src, spec, seed, opt);
    write_json(listing, j);
    for (const auto& l : src.lenses) s.output(l.path);
    s.output(listing);
    s.j["config"] = {{"count", count}, {"spec", spec_to_json(spec)}, {"population", population},
                     {"generations", generations}};
    s.j["results"] = {{"lenses", src.lenses.size()}, {"runs", src.runs.size()},
                      {"initial_median_rms_um", j["initial_median_rms_um"]},
                      {"final_median_rms_um", j["final_median_rms_um"]}};
    s.write((fs::path(out_dir) / "run_summary.json").string());
    std::cout << "lens source: " << src.lenses.size() << " lenses from " << src.runs.size()
              << " runs, median RMS " << src.initial_median_rms_um() << " -> " << src.final_median_rms_um()
              << " um -> " << listing << "\n";
  }
};

std::vector<std::string> report_files(const std::vector<std::string>& files, const std::string& dir) {
  std::vector<std::string> out = files;
  if (!dir.empty()) {
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && has_extension(name, ".report.json")) found.push_back(e.path().string());
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

struct SampleCmd {
  std::vector<std::string> reports;
  std::string reports_dir, out_dir, library = "lenslib";
  SamplerConfig cfg;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("sample", "Hybrid severity x OD-Class sampling into train/test manifests");
    sub->add_option("--reports", reports, "Report files");
    sub->add_option("--reports-dir", reports_dir, "Directory of *.report.json files");
    sub->add_option("--out-dir", out_dir, "Directory for train.json and test.json")->required();
    sub->add_option("--m1", cfg.m1, "Train lenses per subclass")->capture_default_str();
    sub->add_option("--m2", cfg.m2, "Test lenses per subclass")->capture_default_str();
    sub->add_flag("--relaxed", cfg.relaxed, "Skip underpopulated subclasses instead of failing");
    sub->add_option("--library", library, "Library name")->capture_default_str();
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const auto files = report_files(reports, reports_dir);
    if (files.empty()) throw CLI::ValidationError("sample", "needs --reports or --reports-dir");
    const std::uint64_t seed = effective_seed(*g);
    RunSummary s("sample");
    s.seed(seed);
    std::vector<LibraryEntry> source;
    for (const auto& f : files) {
      const auto j = read_json(f);
      source.push_back({j.value("lens_file", f), report_from_json(j)});
    }
    const SampleResult r = hybrid_sample(source, cfg, seed, library);
    check_disjoint(r.train, r.test);
    const std::string train = (fs::path(out_dir) / "train.json").string();
    const std::string test = (fs::path(out_dir) / "test.json").string();
    fs::create_directories(out_dir);
    save_manifest(train, r.train);
    save_manifest(test, r.test);
    s.output(train);
    s.output(test);
    s.j["config"] = {{"reports", files.size()}, {"m1", cfg.m1}, {"m2", cfg.m2}, {"relaxed", cfg.relaxed},
                     {"library", library}};
    s.j["results"] = {{"train", r.train.entries.size()}, {"test", r.test.entries.size()},
                      {"skipped_subclasses", r.train.skipped}};
    s.write((fs::path(out_dir) / "run_summary.json").string());
    std::cout << "sampled " << r.train.entries.size() << " train + " << r.test.entries.size() << " test lenses";
    if (!r.train.skipped.empty()) std::cout << " (" << r.train.skipped.size() << " subclasses skipped)";
    std::cout << "\n";
  }
};

struct PsfMapCmd {
  std::string lens_path, out;
  int n_p = kDefaultSfrSamples, height = 0, width = 0;
  PsfFlags psf;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("psfmap", "Build the per-pixel PSF feature map of a lens");
    sub->add_option("--lens", lens_path, "Lens file")->required();
    sub->add_option("--out", out, "Output map (.psfm)")->required();
    sub->add_option("--np", n_p, "SFR samples per feature")->capture_default_str();
    sub->add_option("--height", height, "Map height (default: sensor resolution)");
    sub->add_option("--width", width, "Map width (default: sensor resolution)");
    psf.add(sub, 64, 10000);
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const LensSystem lens = load_lens_with_sensor(lens_path);
    const int res = lens.sensor->resolution;
    const int h = height > 0 ? height : res, w = width > 0 ? width : res;
    const double radius = full_field_radius_px(lens) * half_diagonal_px(h, w) / half_diagonal_px(res, res);
    const PSFMap map = build_psf_map(psf.load(lens, g->threads), h, w, n_p, radius);
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_psf_map(out, map);
    std::cout << "psf map " << w << "x" << h << ", " << map.fov_features.size() << " FoV features of length "
              << map.feature_length() << " -> " << out << "\n";
    RunSummary s("psfmap");
    s.j["config"] = {{"lens", lens_path}, {"np", n_p}, {"height", h}, {"width", w}, {"grid", psf.describe()}};
    s.output(out);
    s.j["results"] = {{"features", map.fov_features.size()}, {"feature_length", map.feature_length()}};
    s.write(summary_path_for(out));
  }
};

VectorSet map_features(const std::vector<std::string>& maps, int dim) {
  VectorSet all;
  for (const auto& m : maps) {
    const PSFMap map = load_psf_map(m);
    if (all.dim == 0) all.dim = map.feature_length();
    if (map.feature_length() != all.dim) throw ShapeError("psf maps disagree on feature length");
    all.data.insert(all.data.end(), map.fov_features.data.begin(), map.fov_features.data.end());
  }
  return LinearAdapter::identity(all.dim, dim).apply(all);
}

struct FitCodebookCmd {
  std::vector<std::string> maps;
  std::string out;
  int k = kDefaultCodebookSize, dim = kDefaultCodeDim, iterations = 20;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("fit-codebook", "Fit a VQ codebook to PSF-map features with k-means");
    sub->add_option("--maps", maps, "PSF maps (.psfm)")->required();
    sub->add_option("--out", out, "Output codebook (.vqcb)")->required();
    sub->add_option("--k", k, "Codebook size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--dim", dim, "Code dimension")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--iterations", iterations, "Lloyd iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    const std::uint64_t seed = effective_seed(*g);
    RunSummary s("fit-codebook");
    s.seed(seed);
    const VectorSet samples = map_features(maps, dim);
    std::vector<double> objective;
    const Codebook cb = fit_codebook(samples, k, iterations, seed, &objective, g->threads);
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_codebook(out, cb);
    s.output(out);
    s.j["config"] = {{"maps", maps}, {"k", k}, {"dim", dim}, {"iterations", iterations}};
    s.j["results"] = {{"samples", samples.size()}, {"objective", objective}};
    s.write(summary_path_for(out));
    std::cout << "codebook K=" << k << " d=" << dim << " from " << samples.size() << " features, objective "
              << objective.front() << " -> " << objective.back() << " -> " << out << "\n";
  }
};

struct QuantizeCmd {
  std::string codebook, map, out, codebook_out;
  const Globals* g = nullptr;

  void add(CLI::App& app, std::function<void()>& run, const Globals& globals) {
    g = &globals;
    auto* sub = app.add_subcommand("quantize", "Map the FoV features of a PSF map to their nearest codes");
    sub->add_option("--codebook", codebook, "Codebook (.vqcb)")->required();
    sub->add_option("--map", map, "PSF map (.psfm)")->required();
    sub->add_option("--out", out, "Index file (JSON)")->required();
    sub->add_option("--codebook-out", codebook_out, "Write the codebook back with updated usage counters");
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    Codebook cb = load_codebook(codebook);
    const PSFMap m = load_psf_map(map);
    const VectorSet f = LinearAdapter::identity(m.feature_length(), cb.dim).apply(m.fov_features);
    const Quantized q = quantize(f, cb, g->threads);
    std::vector<std::uint64_t> pixels(q.indices.size(), 0);
    for (auto a : m.assign) ++pixels[a];
    ordered_json j;
    j["codebook"] = codebook;
    j["map"] = map;
    j["fov_codes"] = q.indices;
    j["distances"] = q.distances;
    j["fov_pixels"] = pixels;
    j["used_codes"] = used_codes(q);
    write_json(out, j);
    RunSummary s("quantize");
    s.j["config"] = {{"codebook", codebook}, {"map", map}};
    s.output(out);
    if (!codebook_out.empty()) {
      save_codebook(codebook_out, cb);
      s.output(codebook_out);
    }
    s.j["results"] = {{"used_codes", used_codes(q)}, {"features", q.indices.size()}};
    s.write(summary_path_for(out));
    std::cout << "quantized " << q.indices.size() << " FoV features onto " << used_codes(q) << " codes -> " << out << "\n";
  }
};

struct PlotCmd {
  std::vector<std::string> reports, manifests;
  std::string reports_dir, out_dir;

  void add(CLI::App& app, std::function<void()>& run, const Globals&) {
    auto* sub = app.add_subcommand("plot", "Draw OIQ-vs-FoV curves and the subclass histogram (PNG)");
    sub->add_option("--reports", reports, "Report files");
    sub->add_option("--reports-dir", reports_dir, "Directory of *.report.json files");
    sub->add_option("--manifest", manifests, "Manifest files (histogram source)");
    sub->add_option("--out-dir", out_dir, "Output directory")->required();
    sub->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    std::vector<OIQReport> rs;
    for (const auto& f : report_files(reports, reports_dir)) rs.push_back(report_from_json(read_json(f)));
    std::array<int, kSubclassCount> hist{};
    for (const auto& m : manifests) {
      const LensLibManifest man = load_manifest(m);
      const auto h = subclass_histogram(man);
      for (int i = 0; i < kSubclassCount; ++i) hist[static_cast<std::size_t>(i)] += h[static_cast<std::size_t>(i)];
      if (reports.empty() && reports_dir.empty())
        for (const auto& e : man.entries) rs.push_back(e.report);
    }
    if (manifests.empty()) {
      for (const auto& r : rs) ++hist[static_cast<std::size_t>(subclass_index(r.severity, r.od_class))];
    }
    if (rs.empty()) throw DomainError("plot: nothing to draw; pass --reports, --reports-dir or --manifest");
    fs::create_directories(out_dir);
    RunSummary s("plot");
    const std::string curves = (fs::path(out_dir) / "oiq_vs_fov.png").string();
    const std::string histogram = (fs::path(out_dir) / "subclass_histogram.png").string();
    save_image(curves, plot::oiq_curves(rs));
    save_image(histogram, plot::subclass_histogram_chart(hist));
    s.output(curves);
    s.output(histogram);
    s.j["config"] = {{"reports", rs.size()}, {"manifests", manifests}};
    auto h = ordered_json::object();
    for (int i = 0; i < kSubclassCount; ++i) h[subclass_key(i)] = hist[static_cast<std::size_t>(i)];
    s.j["results"] = {{"subclass_histogram", h}};
    s.write((fs::path(out_dir) / "plot_summary.json").string());
    std::cout << "plotted " << rs.size() << " reports -> " << curves << ", " << histogram << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aberforge: lens aberration simulation, quantification and lens-library sampling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--threads", globals.threads, "Worker thread cap (0 = all cores)");
  app.add_flag("-q,--quiet", globals.quiet, "Only print the effective seed and errors");
  app.add_option_function<std::string>("--seed", 
      [&](const std::string& s) {
        try {
          parse_seed(s);
        } catch (const DomainError& e) {
          throw CLI::ValidationError("--seed", e.what());
        }
        globals.seed_text = s;
      },
                                       "RNG seed (default: ABERFORGE_SEED, then built-in)");

  std::function<void()> run;
  TraceCmd trace;
  PsfCmd psf;
  SimulateCmd simulate;
  QuantifyCmd quantify;
  ClassifyCmd classify;
  GenSourceCmd gen_source;
  SampleCmd sample;
  PsfMapCmd psfmap;
  QuantizeCmd quantize_cmd;
  FitCodebookCmd fit;
  PlotCmd plot_cmd;
  trace.add(app, run, globals);
  psf.add(app, run, globals);
  simulate.add(app, run, globals);
  quantify.add(app, run, globals);
  classify.add(app, run, globals);
  gen_source.add(app, run, globals);
  sample.add(app, run, globals);
  psfmap.add(app, run, globals);
  quantize_cmd.add(app, run, globals);
  fit.add(app, run, globals);
  plot_cmd.add(app, run, globals);

  try {
    app.parse(argc, argv);
    std::ostream seed_out(std::cout.rdbuf());
    if (globals.quiet) {
      g_seed_stream = &seed_out;
      std::cout.setstate(std::ios::badbit);
    }
    run();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto rest = app.remaining();
    if (app.get_subcommands().empty() && !rest.empty() && rest.front().rfind('-', 0) != 0)
      std::cerr << "error: unknown subcommand '" << rest.front() << "'\n\n" << app.help();
    else
      std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const aberforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
