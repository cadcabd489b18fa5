// Walk one lens through the pipeline: trace, simulate, quantify, map.
//
//   lens_walkthrough [out_dir] [rays_per_psf]
//
// Writes clear/degraded images, the OIQ report and the PSF feature map.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "aberforge/aberforge.hpp"

using namespace aberforge;

namespace {

// Biconvex crown singlet at F/4, front stop.
LensSystem demo_singlet() {
  LensSystem lens;
  lens.name = "demo-singlet";
  lens.materials = {Material::from_abbe("crown", 1.5168, 64.17)};
  lens.surfaces = {
      Surface{SurfaceKind::Stop, 0.0, 0.0, {}, 1.0, 3.0, "air"},
      Surface{SurfaceKind::Spherical, 1.0 / 40.0, 0.0, {}, 12.0, 5.0, "crown"},
      Surface{SurfaceKind::Spherical, -1.0 / 120.0, 0.0, {}, 12.0, 0.0, "air"},
  };
  lens.stop_index = 0;
  lens.surfaces[0].semi_diameter = stop_radius_for_f_number(lens, 4.0);
  lens.focal_length = paraxial_efl(lens);
  lens.f_number = 4.0;
  lens.image_distance = paraxial_bfd(lens);
  lens.half_fov_deg = 10.0;
  assign_sensor(lens);
  return lens;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "walkthrough";
  const std::size_t rays = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 4000;
  try {
    std::filesystem::create_directories(out);
    const LensSystem lens = demo_singlet();
    save_lens((out / "lens.json").string(), lens);
    std::cout << "EFL " << paraxial_efl(lens) << " mm, BFD " << paraxial_bfd(lens) << " mm, F/"
              << paraxial_f_number(lens) << ", sensor " << lens.sensor->resolution << " px at "
              << lens.sensor->pitch_um << " um\n";

    for (double field : {0.0, 5.0, 10.0}) {
      const SpotDiagram spot = trace_system(lens, field, wavelengths::kD, 2000, PupilPattern::Grid);
      std::cout << "  field " << field << " deg: RMS spot " << rms_spot_radius(spot.points) << " um\n";
    }

    PsfGridOptions grid_opt;
    grid_opt.n_fov = 16;
    grid_opt.rays_per_psf = rays;
    const PSFGrid grid = psf_grid(lens, grid_opt);
    const RGBPSFSet psfs = stack_rgb(grid, default_rgb_response(grid.wavelengths));

    // 512 x 512 preview; the FoV layout is scaled to the smaller frame.
    const int res = lens.sensor->resolution, side = 512;
    const ImageBuffer clear = checkerboard(side, side);
    const PatchLayout layout =
        make_patch_layout(side, side, psfs.field_positions, full_field_radius_px(lens) * double(side) / res);
    const ImageBuffer degraded = render_degraded(clear, psfs, layout);
    save_image((out / "clear.png").string(), clear);
    save_image((out / "degraded.png").string(), degraded);
    const Fidelity f = fidelity_metrics(degraded, clear);
    std::cout << "degraded checkerboard: PSNR " << f.psnr << " dB, SSIM " << f.ssim << "\n";

    const OIQReport report = quantify_lens(lens, psfs, QuantifyConfig{});
    write_text_file((out / "report.json").string(), report_to_json(report).dump(2) + "\n");
    std::cout << "OIQ by FoV:";
    for (double v : report.oiq) std::cout << " " << v;
    std::cout << "\n  " << to_string(report.severity) << ", OD-Class " << report.od_class << ", U_S " << report.u_s
              << ", chromatic class " << report.chromatic_class << "\n";

    const PSFMap map = build_psf_map(psfs, 128, 128, kDefaultSfrSamples, full_field_radius_px(lens) * 128.0 / res);
    save_psf_map((out / "lens.psfm").string(), map);
    std::cout << "PSF map: " << map.fov_features.size() << " FoV features of length " << map.feature_length()
              << "\nwrote " << out.string() << "/\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
