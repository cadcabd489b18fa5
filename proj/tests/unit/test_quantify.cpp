#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "aberforge/quantify.hpp"
#include "test_lenses.hpp"

namespace aberforge {
namespace {

Kernel gaussian_kernel(double sigma) {
  Kernel k;
  k.side = std::min(65, 2 * static_cast<int>(std::ceil(5 * sigma)) + 1);
  k.weights.resize(static_cast<std::size_t>(k.side * k.side));
  const int r = k.side / 2;
  double s = 0;
  for (int i = 0; i < k.side; ++i)
    for (int j = 0; j < k.side; ++j) s += (k.at(i, j) = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma)));
  for (double& w : k.weights) w /= s;
  return k;
}

double gaussian_mtf(double sigma, double f) { return std::exp(-2 * std::numbers::pi * std::numbers::pi * sigma * sigma * f * f); }

// Slanted edge through the patch centre, rising along +x, blurred by an optional Gaussian.
Plane edge_patch(int size, double tilt_deg, double sigma, double lo = 0.05, double hi = 0.95) {
  Plane p(size, size);
  const double t = tilt_deg * std::numbers::pi / 180.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - 0.5 * size + 0.5, dy = y - 0.5 * size + 0.5;
      const double s = std::cos(t) * dx + std::sin(t) * dy;
      const double frac = sigma > 0 ? 0.5 * std::erfc(-s / (sigma * std::numbers::sqrt2)) : (s >= 0 ? 1.0 : 0.0);
      p.at(y, x) = lo + (hi - lo) * frac;
    }
  }
  return p;
}

TEST(Fidelity, IdenticalImagesHitCap) {
  ImageBuffer img(40, 40, 0.3F);
  img.at(5, 5, 1) = 0.8F;
  const Fidelity f = fidelity_metrics(img, img);
  EXPECT_EQ(f.psnr, 60.0);
  EXPECT_EQ(f.ssim, 1.0);
}

TEST(Fidelity, UniformOffsetPsnr) {
  const ImageBuffer a(32, 32, 0.3F);
  ImageBuffer b(32, 32, 0.0F);
  for (float& v : b.data) v = static_cast<float>(0.3 + 16.0 / 255.0);
  const double oracle = 10 * std::log10(1.0 / std::pow(16.0 / 255.0, 2));
  EXPECT_NEAR(oracle, 24.05, 0.005);
  EXPECT_NEAR(psnr(b, a), oracle, 1e-4);
}

TEST(Fidelity, InvertedContrastHasNegativeSsim) {
  Plane ref(32, 32), neg(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      ref.at(y, x) = x < 16 ? 0.9 : 0.1;
      neg.at(y, x) = x < 16 ? 0.1 : 0.9;
    }
  }
  const Plane m = ssim_map(ref, neg);
  // Window centred on the boundary: output column 16 - 5 - 1 straddles both halves.
  EXPECT_LT(m.at(10, 10), 0.0);
  EXPECT_LT(ssim(ref, neg), ssim(ref, ref));
  EXPECT_THROW(ssim_map(ref, Plane(31, 32)), ShapeError);
}

TEST(Fidelity, DimensionMismatchThrows) {
  EXPECT_THROW(psnr(ImageBuffer(10, 10), ImageBuffer(10, 11)), ShapeError);
}

TEST(Mtf, DeltaIsFlat) {
  for (double v : mtf_from_psf(Kernel::delta(), 32)) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Mtf, GaussianMatchesAnalytic) {
  for (double sigma : {1.0, 2.0, 3.0}) {
    const auto mtf = mtf_from_psf(gaussian_kernel(sigma), 32);
    const auto freqs = sfr_frequencies(32);
    EXPECT_EQ(mtf.size(), 32U);
    EXPECT_DOUBLE_EQ(mtf[0], 1.0);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      if (freqs[i] > 0.4 + 1e-12) break;
      EXPECT_NEAR(mtf[i], gaussian_mtf(sigma, freqs[i]), 0.02) << "sigma " << sigma << " f " << freqs[i];
    }
  }
}

TEST(Mtf, ZeroKernelThrows) {
  Kernel k;
  k.weights = {0.0};
  EXPECT_THROW(mtf_from_psf(k), DomainError);
  EXPECT_THROW(fwhm(k), DomainError);
}

TEST(Sfr, IdealEdgeIsSharpAtLowFrequency) {
  const auto sfr = sfr_from_edge(edge_patch(64, 5.0, 0.0), 32);
  ASSERT_EQ(sfr.size(), 32U);
  EXPECT_EQ(sfr[0], 1.0);
  const auto freqs = sfr_frequencies(32);
  for (std::size_t i = 0; i < freqs.size() && freqs[i] <= 0.1; ++i) EXPECT_GE(sfr[i], 0.98);
}

TEST(Sfr, GaussianEdgeMatchesAnalytic) {
  const double sigma = 2.0;
  const auto sfr = sfr_from_edge(edge_patch(64, 5.0, sigma), 32);
  const auto freqs = sfr_frequencies(32);
  for (std::size_t i = 0; i < freqs.size() && freqs[i] <= 0.3 + 1e-12; ++i) {
    EXPECT_NEAR(sfr[i], gaussian_mtf(sigma, freqs[i]), 0.05) << "f " << freqs[i];
  }
}

TEST(Sfr, FallingEdgeAndOtherTilts) {
  for (double tilt : {3.0, 5.0, -7.0}) {
    Plane p = edge_patch(64, tilt, 1.5);
    for (double& v : p.v) v = 1.0 - v;
    const auto sfr = sfr_from_edge(p, 16);
    const auto freqs = sfr_frequencies(16);
    for (std::size_t i = 0; i < freqs.size() && freqs[i] <= 0.3; ++i) EXPECT_NEAR(sfr[i], gaussian_mtf(1.5, freqs[i]), 0.05);
  }
}

TEST(Sfr, BlurredSfrStaysPhysical) {
  for (double sigma : {0.8, 1.0, 2.5, 4.0}) {
    for (double v : sfr_from_edge(edge_patch(64, 5.0, sigma), 32)) EXPECT_LE(v, 1.03);
  }
}

TEST(Sfr, FlatPatchHasNoEdge) {
  EXPECT_THROW(sfr_from_edge(Plane(64, 64, 0.5), 32), DomainError);
  EXPECT_THROW(sfr_from_edge(edge_patch(64, 5.0, 1.0, 0.5, 0.55), 32), DomainError);
}

TEST(Fwhm, Delta) {
  EXPECT_EQ(fwhm(Kernel::delta()), 1.0);
  Kernel k;
  k.side = 3;
  k.weights = {0, 0, 0, 0, 1, 0, 0, 0, 0};
  EXPECT_EQ(fwhm(k), 1.0);
}

TEST(Fwhm, Gaussian) {
  for (double sigma : {1.0, 1.5, 2.0, 3.0, 5.0}) {
    EXPECT_NEAR(fwhm(gaussian_kernel(sigma)), 2.3548 * sigma, 0.02 * 2.3548 * sigma) << sigma;
  }
}

TEST(Fwhm, TriangleKernel) {
  for (int b : {4, 6, 8}) {
    Kernel k;
    k.side = 2 * b + 1;
    k.weights.resize(static_cast<std::size_t>(k.side * k.side));
    for (int i = 0; i < k.side; ++i)
      for (int j = 0; j < k.side; ++j) k.at(i, j) = std::max(0.0, 1.0 - std::hypot(i - b, j - b) / b);
    EXPECT_NEAR(fwhm(k), b, 0.1);
  }
}

TEST(Oiqe, Contract) {
  const std::vector<double> ref{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
  EXPECT_DOUBLE_EQ(oiqe(ref, ref), 1.0);
  std::vector<double> half(ref.size());
  std::transform(ref.begin(), ref.end(), half.begin(), [](double v) { return 0.5 * v; });
  EXPECT_DOUBLE_EQ(oiqe(half, ref), 0.5);
  std::vector<double> sharp(ref.size());
  std::transform(ref.begin(), ref.end(), sharp.begin(), [](double v) { return 1.4 * v; });
  EXPECT_DOUBLE_EQ(oiqe(sharp, ref), 1.0);
  EXPECT_THROW(oiqe(ref, std::vector<double>(ref.size(), 0.0)), DomainError);
}

TEST(Oiqe, OnlyUpToHalfNyquist) {
  // 9 samples over [0, 0.5]: f <= 0.25 keeps indices 0..4.
  std::vector<double> ref(9, 1.0), target(9, 1.0);
  for (std::size_t i = 5; i < 9; ++i) target[i] = 0.0;
  EXPECT_DOUBLE_EQ(oiqe(target, ref), 1.0);
  target[4] = 0.0;
  EXPECT_DOUBLE_EQ(oiqe(target, ref), 0.8);
}

TEST(Oiq, WeightedScore) {
  EXPECT_EQ(oiq(50, 1.0, 1.0), 1.0);
  EXPECT_EQ(oiq(25, 0.75, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(oiq(60, 0.4, 1.2), 0.7);
}

TEST(Oiq, MonotoneInEachArgument) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> p(0, 70), s(-0.2, 1.0), e(-0.1, 1.3), step(0, 0.2);
  for (int i = 0; i < 10000; ++i) {
    const double a = p(rng), b = s(rng), c = e(rng), d = step(rng);
    const double base = oiq(a, b, c);
    EXPECT_GE(oiq(a + 50 * d, b, c), base);
    EXPECT_GE(oiq(a, b + d, c), base);
    EXPECT_GE(oiq(a, b, c + d), base);
  }
}

TEST(Severity, Thirds) {
  EXPECT_EQ(severity_class(0.10), Severity::Strong);
  EXPECT_EQ(severity_class(1.0 / 3.0), Severity::Medium);
  EXPECT_EQ(severity_class(0.90), Severity::Mild);
  EXPECT_EQ(severity_class(2.0 / 3.0), Severity::Mild);
  EXPECT_EQ(severity_class(0.2, {0.1, 0.5}), Severity::Medium);
}

TEST(Uniformity, Examples) {
  const Uniformity flat = spatial_uniformity({0.4, 0.4, 0.4, 0.4, 0.4});
  EXPECT_EQ(flat.cv, 0.0);
  EXPECT_EQ(flat.u_s, 1.0);
  const Uniformity u = spatial_uniformity({0.8, 0.8, 0.8, 0.8, 0.4});
  EXPECT_NEAR(u.cv, 0.16 / 0.72, 1e-12);
  EXPECT_NEAR(u.u_s, 0.3292, 1e-3);
  const Uniformity scaled = spatial_uniformity({0.4, 0.4, 0.4, 0.4, 0.2});
  EXPECT_NEAR(scaled.cv, u.cv, 1e-12);
  EXPECT_THROW(spatial_uniformity({0, 0, 0, 0, 0}), DomainError);
}

TEST(Uniformity, BoundsOnRandomInputs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const std::array<double, 5> v{u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double us = spatial_uniformity(v).u_s;
    EXPECT_GT(us, 0.0);
    EXPECT_LT(us, 1.0);
  }
}

TEST(OdClass, CanonicalVectors) {
  EXPECT_EQ(od_class({0.6, 0.6, 0.6, 0.6, 0.6}, 0.8), 0);
  EXPECT_EQ(od_class({0.9, 0.85, 0.8, 0.7, 0.5}, 0.8), 1);
  EXPECT_EQ(od_class({0.6, 0.9, 0.8, 0.7, 0.4}, 0.8), 5);
}

TEST(OdClass, EveryBranch) {
  EXPECT_EQ(od_class({0.2, 0.5, 0.7, 0.8, 0.9}), 2);
  EXPECT_EQ(od_class({0.9, 0.3, 0.8, 0.7, 0.6}), 3);
  EXPECT_EQ(od_class({0.9, 0.5, 0.8, 0.7, 0.3}), 4);
  EXPECT_EQ(od_class({0.9, 0.905, 0.6, 0.5, 0.3}), 5);
  // Any rise, however small, breaks monotonicity; a plateau does not.
  EXPECT_EQ(od_class({0.91, 0.9, 0.905, 0.5, 0.3}), 4);
  EXPECT_EQ(od_class({0.91, 0.9, 0.9, 0.5, 0.3}), 1);
  // Ties take the lowest index.
  EXPECT_EQ(od_class({0.9, 0.9, 0.6, 0.5, 0.3}), 1);
  EXPECT_EQ(od_class({0.3, 0.9, 0.6, 0.5, 0.3}), 2);
}

TEST(OdClass, ScaleInvarianceOfUniformBranch) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0), k(0.1, 3.0);
  for (int i = 0; i < 5000; ++i) {
    const std::array<double, 5> v{u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double s = k(rng);
    const std::array<double, 5> w{v[0] * s, v[1] * s, v[2] * s, v[3] * s, v[4] * s};
    EXPECT_EQ(od_class(v) == 0, od_class(w) == 0);
  }
}

TEST(ChromaticClass, Examples) {
  EXPECT_EQ(chromatic_class({0.7, 0.7, 0.7}), 5);
  EXPECT_EQ(chromatic_class({0.9, 0.5, 0.2}), 1);
  const std::array<double, 3> v{0.8, 0.6, 0.7};
  std::array<double, 3> p = v;
  std::sort(p.begin(), p.end());
  const int expected = chromatic_class(v);
  do {
    EXPECT_EQ(chromatic_class(p), expected);
  } while (std::next_permutation(p.begin(), p.end()));
  EXPECT_THROW(chromatic_class({0, 0, 0}), DomainError);
}

LensSystem standin_with_sensor() {
  LensSystem lens = testing::paraxial_standin();
  assign_sensor(lens);
  return lens;
}

TEST(QuantifyLens, DeltaLensIsPerfect) {
  const LensSystem lens = standin_with_sensor();
  const OIQReport r = quantify_lens(lens, delta_psf_set(64));
  for (double v : r.oiq) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.average_oiq, 1.0);
  EXPECT_EQ(r.severity, Severity::Mild);
  EXPECT_EQ(r.od_class, 0);
  EXPECT_EQ(r.chromatic_class, 5);
  EXPECT_EQ(r.u_s, 1.0);
}

RGBPSFSet graded_blur_set() {
  RGBPSFSet set;
  set.field_angles = linspace(0.0, 10.0, 8);
  set.field_positions = field_positions(set.field_angles);
  for (int f = 0; f < 8; ++f) {
    const double s = 0.6 + 0.35 * f;
    set.kernels.push_back({gaussian_kernel(s * 1.2), gaussian_kernel(s), gaussian_kernel(s * 0.9)});
  }
  return set;
}

TEST(QuantifyLens, MatchesStepByStepPipeline) {
  const LensSystem lens = standin_with_sensor();
  const RGBPSFSet psfs = graded_blur_set();
  QuantifyConfig cfg;
  const OIQReport r = quantify_lens(lens, psfs, cfg);

  // Manual recomputation from the public building blocks, dense render.
  const ImageBuffer gt = checkerboard(lens.sensor->resolution, lens.sensor->resolution);
  const PatchLayout layout =
      make_patch_layout(gt.height, gt.width, psfs.field_positions, full_field_radius_px(lens));
  RenderOptions ro;
  for (const auto& p : knife_edge_layout(gt.height, gt.width)) ro.roi.push_back(p.rect);
  const ImageBuffer degraded = render_degraded(gt, psfs, layout, ro);
  const auto patches = knife_edge_layout(gt.height, gt.width);
  std::array<double, 5> manual{};
  std::array<double, 3> channel{};
  for (std::size_t i = 0; i < 5; ++i) {
    const ImageBuffer d = crop(degraded, patches[i].rect), g = crop(gt, patches[i].rect);
    double e = 0;
    for (int c = 0; c < 3; ++c) {
      const Plane dc = channel_plane(d, c), gc = channel_plane(g, c);
      const double ec = oiqe(sfr_from_edge(dc, 32), sfr_from_edge(gc, 32));
      e += ec / 3.0;
      channel[static_cast<std::size_t>(c)] += oiq(psnr(dc, gc), ssim(dc, gc), ec) / 5.0;
    }
    manual[i] = oiq(psnr(d, g), ssim(d, g), e);
    EXPECT_NEAR(r.oiq[i], manual[i], 1e-9);
  }
  double avg = 0;
  for (double v : manual) avg += v / 5.0;
  EXPECT_NEAR(r.average_oiq, avg, 1e-9);
  EXPECT_EQ(r.od_class, od_class(manual, cfg.alpha));
  EXPECT_EQ(r.chromatic_class, chromatic_class(channel));
  EXPECT_EQ(r.severity, severity_class(avg));
  // Internal consistency and degradation grows with field.
  EXPECT_DOUBLE_EQ(r.average_oiq, (r.oiq[0] + r.oiq[1] + r.oiq[2] + r.oiq[3] + r.oiq[4]) / 5.0);
  EXPECT_GT(r.oiq[0], r.oiq[4]);
  EXPECT_LT(r.oiq[0], 1.0);
}

TEST(QuantifyLens, DeterministicAcrossThreads) {
  const LensSystem lens = standin_with_sensor();
  QuantifyConfig one;
  one.threads = 1;
  QuantifyConfig many;
  many.threads = 3;
  const auto a = report_to_json(quantify_lens(lens, graded_blur_set(), one));
  auto b = report_to_json(quantify_lens(lens, graded_blur_set(), many));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(QuantifyLens, ReportRoundTrip) {
  const LensSystem lens = standin_with_sensor();
  const OIQReport r = quantify_lens(lens, graded_blur_set());
  const auto j = report_to_json(r);
  const OIQReport back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(report_to_json(back).dump(), j.dump());
  EXPECT_EQ(j["config"]["alpha"], 0.8);
  EXPECT_EQ(j["config"]["n_p"], 32);
  EXPECT_EQ(back.lens_id, lens_id(lens));
}

TEST(QuantifyLens, RequiresSensor) {
  EXPECT_THROW(quantify_lens(testing::paraxial_standin(), delta_psf_set()), DomainError);
}

}  // namespace
}  // namespace aberforge
