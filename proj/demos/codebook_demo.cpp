// Fit a small codebook to PSF features from a few lenses and quantize them.
//
//   codebook_demo [seed]

#include <cstdlib>
#include <iostream>

#include "aberforge/aberforge.hpp"

using namespace aberforge;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? parse_seed(argv[1]) : kDefaultSeed;
  try {
    DesignSpec spec;
    spec.name = "demo";
    SourceOptions opt;
    opt.population = 12;
    opt.generations = 10;
    const LensSource src = build_lens_source(spec, 4, seed, opt);
    std::cout << "seed " << seed << ": " << src.lenses.size() << " lenses, median RMS " << src.initial_median_rms_um()
              << " -> " << src.final_median_rms_um() << " um\n";

    PsfGridOptions grid_opt;
    grid_opt.n_fov = 8;
    grid_opt.n_wave = 11;
    grid_opt.rays_per_psf = 1500;
    VectorSet features;
    for (const auto& l : src.lenses) {
      LensSystem lens = l.lens;
      assign_sensor(lens);
      const PSFGrid grid = psf_grid(lens, grid_opt);
      const PSFMap map = build_psf_map(stack_rgb(grid, default_rgb_response(grid.wavelengths)), 64, 64);
      if (features.dim == 0) features.dim = map.feature_length();
      features.data.insert(features.data.end(), map.fov_features.data.begin(), map.fov_features.data.end());
    }
    const VectorSet codes_in = LinearAdapter::identity(features.dim, kDefaultCodeDim).apply(features);

    std::vector<double> objective;
    Codebook cb = fit_codebook(codes_in, 8, 15, seed, &objective);
    std::cout << features.size() << " features (" << features.dim << " -> " << cb.dim << " dims), K = " << cb.size
              << ", objective " << objective.front() << " -> " << objective.back() << "\n";
    const Quantized q = quantize(codes_in, cb);
    std::cout << "used codes: " << used_codes(q) << ", usage:";
    for (auto u : cb.usage) std::cout << " " << u;
    std::cout << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
