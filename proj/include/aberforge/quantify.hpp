#pragma once

/**
 * @file quantify.hpp
 * @brief Fidelity metrics, SFR/MTF, FWHM, OIQE, the OIQ score and the
 *        severity / OD-Class / chromatic classifiers.
 *
 * Spatial frequencies are in cycles per pixel; Nyquist is 0.5.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "aberforge/error.hpp"
#include "aberforge/lens_io.hpp"
#include "aberforge/parallel.hpp"
#include "aberforge/raytrace.hpp"
#include "aberforge/simulate.hpp"

namespace aberforge {

inline constexpr double kPsnrCap = 60.0;
inline constexpr int kDefaultSfrSamples = 32;

// Single-channel float image.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0) : height(h), width(w), v(static_cast<std::size_t>(h * w), fill) {}
  double& at(int y, int x) { return v[static_cast<std::size_t>(y * width + x)]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y * width + x)]; }
};

inline Plane channel_plane(const ImageBuffer& img, int c) {
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, c);
  }
  return p;
}

// Sampling frequencies of an n-point SFR curve over [0, Nyquist].
inline std::vector<double> sfr_frequencies(int n_p) { return linspace(0.0, 0.5, n_p); }

// ============================================================================
// PSNR / SSIM
// ============================================================================

namespace detail {

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("image sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace detail

// PSNR over all channels on peak 1.0, capped at 60 dB.
inline double psnr(const ImageBuffer& img, const ImageBuffer& ref) {
  detail::require_same_shape(img, ref);
  if (img.data.empty()) throw ShapeError("psnr of an empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = double(img.data[i]) - double(ref.data[i]);
    sum += d * d;
  }
  return detail::psnr_from_mse(sum / double(img.data.size()));
}

inline double psnr(const Plane& img, const Plane& ref) {
  if (img.height != ref.height || img.width != ref.width) throw ShapeError("plane sizes differ");
  if (img.v.empty()) throw ShapeError("psnr of an empty plane");
  double sum = 0.0;
  for (std::size_t i = 0; i < img.v.size(); ++i) sum += (img.v[i] - ref.v[i]) * (img.v[i] - ref.v[i]);
  return detail::psnr_from_mse(sum / double(img.v.size()));
}

namespace detail {

inline std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double s = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= s;
  return w;
}

// Valid-region separable filtering with the 11-tap window.
inline Plane filter_valid(const Plane& p) {
  const auto w = ssim_window();
  Plane rows(p.height, p.width - 10);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < rows.width; ++x) {
      double s = 0.0;
      for (int k = 0; k < 11; ++k) s += w[static_cast<std::size_t>(k)] * p.at(y, x + k);
      rows.at(y, x) = s;
    }
  }
  Plane out(p.height - 10, rows.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double s = 0.0;
      for (int k = 0; k < 11; ++k) s += w[static_cast<std::size_t>(k)] * rows.at(y + k, x);
      out.at(y, x) = s;
    }
  }
  return out;
}

}  // namespace detail

// Local SSIM over the valid region (11-tap Gaussian, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 1).
inline Plane ssim_map(const Plane& a, const Plane& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("plane sizes differ");
  if (a.height < 11 || a.width < 11) throw ShapeError("SSIM needs at least 11x11 pixels");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Plane aa(a.height, a.width), bb(a.height, a.width), ab(a.height, a.width);
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const Plane mu_a = detail::filter_valid(a), mu_b = detail::filter_valid(b);
  const Plane s_aa = detail::filter_valid(aa), s_bb = detail::filter_valid(bb), s_ab = detail::filter_valid(ab);
  Plane out(mu_a.height, mu_a.width);
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = s_aa.v[i] - ma * ma, vb = s_bb.v[i] - mb * mb, cov = s_ab.v[i] - ma * mb;
    out.v[i] = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return out;
}

inline double ssim(const Plane& a, const Plane& b) {
  const Plane m = ssim_map(a, b);
  return std::accumulate(m.v.begin(), m.v.end(), 0.0) / double(m.v.size());
}

// Mean of the per-channel SSIM.
inline double ssim(const ImageBuffer& img, const ImageBuffer& ref) {
  detail::require_same_shape(img, ref);
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += ssim(channel_plane(img, c), channel_plane(ref, c));
  return s / 3.0;
}

struct Fidelity {
  double psnr = 0.0;
  double ssim = 0.0;
};

inline Fidelity fidelity_metrics(const ImageBuffer& img, const ImageBuffer& ref) { return {psnr(img, ref), ssim(img, ref)}; }

// ============================================================================
// SFR / MTF
// ============================================================================

namespace detail {

inline void require_nonzero(const Kernel& k, const char* what) {
  double s = 0.0;
  for (double w : k.weights) s += std::abs(w);
  if (!(s > 0.0)) throw DomainError(std::string(what) + " of a zero kernel");
}

// |Σ x_i e^{-2πi f i Δ}| for each frequency f.
inline std::vector<double> dtft_magnitude(const std::vector<double>& x, const std::vector<double>& freqs, double delta) {
  std::vector<double> out;
  out.reserve(freqs.size());
  for (double f : freqs) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double phase = -2.0 * std::numbers::pi * f * double(i) * delta;
      acc += x[i] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    out.push_back(std::abs(acc));
  }
  return out;
}

}  // namespace detail

// Tangential MTF of a kernel: DTFT magnitude of its row-summed line spread, SFR(0) = 1.
inline std::vector<double> mtf_from_psf(const Kernel& kernel, int n_p = kDefaultSfrSamples) {
  detail::require_nonzero(kernel, "mtf_from_psf");
  if (n_p < 2) throw DomainError("n_p must be >= 2");
  std::vector<double> lsf(static_cast<std::size_t>(kernel.side), 0.0);
  for (int r = 0; r < kernel.side; ++r) {
    for (int c = 0; c < kernel.side; ++c) lsf[static_cast<std::size_t>(r)] += kernel.at(r, c);
  }
  auto mtf = detail::dtft_magnitude(lsf, sfr_frequencies(n_p), 1.0);
  const double dc = mtf.front();
  if (!(dc > 0.0)) throw DomainError("mtf_from_psf: kernel has zero DC response");
  for (double& m : mtf) m /= dc;
  return mtf;
}

/**
 * Slanted-edge SFR of a single-edge patch: per-row edge centroids, a line fit,
 * a 4x oversampled edge spread along the edge normal, its central-difference
 * line spread under a Hamming window, and the DTFT normalized at DC with the
 * difference filter's response divided out.
 */
inline std::vector<double> sfr_from_edge(const Plane& patch, int n_p = kDefaultSfrSamples) {
  if (n_p < 2) throw DomainError("n_p must be >= 2");
  if (patch.width < 8 || patch.height < 4) throw ShapeError("edge patch too small");
  const auto [lo_it, hi_it] = std::minmax_element(patch.v.begin(), patch.v.end());
  if (*hi_it - *lo_it < 0.1) throw DomainError("no detectable edge: contrast below 0.1");

  // Orientation: make the edge rising along +x.
  double total_derivative = 0.0;
  for (int y = 0; y < patch.height; ++y) total_derivative += patch.at(y, patch.width - 1) - patch.at(y, 0);
  const double sign = total_derivative >= 0.0 ? 1.0 : -1.0;

  std::vector<double> ys, xs;
  for (int y = 0; y < patch.height; ++y) {
    double sw = 0.0, sx = 0.0;
    for (int x = 1; x + 1 < patch.width; ++x) {
      const double d = std::max(0.0, sign * (patch.at(y, x + 1) - patch.at(y, x - 1)));
      sw += d;
      sx += d * x;
    }
    if (sw > 1e-12) {
      ys.push_back(y);
      xs.push_back(sx / sw);
    }
  }
  if (ys.size() < 2) throw DomainError("no detectable edge: fewer than two rows cross it");
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / double(ys.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  double syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (ys[i] - my) * (xs[i] - mx);
  }
  const double slope = syy > 0.0 ? sxy / syy : 0.0;  // x = mx + slope (y - my)
  const double norm = std::sqrt(1.0 + slope * slope);

  constexpr double kBin = 0.25;
  const double reach = 0.5 * patch.width - 2.0;
  const int half_bins = static_cast<int>(std::floor(reach / kBin));
  const int n_bins = 2 * half_bins;
  std::vector<double> sum(static_cast<std::size_t>(n_bins), 0.0), count(static_cast<std::size_t>(n_bins), 0.0);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const double s = (x - (mx + slope * (y - my))) / norm;
      const int b = static_cast<int>(std::floor(s / kBin)) + half_bins;
      if (b < 0 || b >= n_bins) continue;
      sum[static_cast<std::size_t>(b)] += sign * patch.at(y, x);
      count[static_cast<std::size_t>(b)] += 1.0;
    }
  }
  std::vector<double> esf(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<int> filled;
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<std::size_t>(b)] > 0.0) {
      esf[static_cast<std::size_t>(b)] = sum[static_cast<std::size_t>(b)] / count[static_cast<std::size_t>(b)];
      filled.push_back(b);
    }
  }
  if (filled.size() < 4) throw DomainError("no detectable edge: edge spread too sparse");
  // Empty bins: linear interpolation between filled neighbours, constant beyond the ends.
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<std::size_t>(b)] > 0.0) continue;
    auto hi = std::lower_bound(filled.begin(), filled.end(), b);
    if (hi == filled.begin()) {
      esf[static_cast<std::size_t>(b)] = esf[static_cast<std::size_t>(filled.front())];
    } else if (hi == filled.end()) {
      esf[static_cast<std::size_t>(b)] = esf[static_cast<std::size_t>(filled.back())];
    } else {
      const int b1 = *hi, b0 = *(hi - 1);
      const double t = double(b - b0) / double(b1 - b0);
      esf[static_cast<std::size_t>(b)] = (1 - t) * esf[static_cast<std::size_t>(b0)] + t * esf[static_cast<std::size_t>(b1)];
    }
  }

  std::vector<double> lsf(static_cast<std::size_t>(n_bins), 0.0);
  for (int b = 1; b + 1 < n_bins; ++b) {
    lsf[static_cast<std::size_t>(b)] = 0.5 * (esf[static_cast<std::size_t>(b + 1)] - esf[static_cast<std::size_t>(b - 1)]);
  }
  double lw = 0.0, lc = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    lw += lsf[static_cast<std::size_t>(b)];
    lc += lsf[static_cast<std::size_t>(b)] * b;
  }
  const double centre = lw != 0.0 ? lc / lw : 0.5 * n_bins;
  const double half_width = std::max(centre, n_bins - 1.0 - centre) + 1.0;
  for (int b = 0; b < n_bins; ++b) {
    lsf[static_cast<std::size_t>(b)] *= 0.54 + 0.46 * std::cos(std::numbers::pi * (b - centre) / half_width);
  }

  const auto freqs = sfr_frequencies(n_p);
  auto sfr = detail::dtft_magnitude(lsf, freqs, kBin);
  const double dc = sfr.front();
  if (!(dc > 0.0)) throw DomainError("no detectable edge: zero line-spread integral");
  for (std::size_t i = 0; i < sfr.size(); ++i) {
    sfr[i] /= dc;
    const double arg = 2.0 * std::numbers::pi * freqs[i] * kBin;
    if (arg > 0.0) sfr[i] /= std::sin(arg) / arg;
  }
  sfr.front() = 1.0;
  return sfr;
}

// ============================================================================
// FWHM
// ============================================================================

/**
 * Full width at half maximum of the kernel's radial profile about its peak
 * pixel. Samples at equal radius are averaged; the half-max crossing is
 * linearly interpolated. Never less than 1 px.
 */
inline double fwhm(const Kernel& kernel) {
  detail::require_nonzero(kernel, "fwhm");
  const auto peak_it = std::max_element(kernel.weights.begin(), kernel.weights.end());
  const double peak = *peak_it;
  if (!(peak > 0.0)) throw DomainError("fwhm: kernel has no positive sample");
  const int idx = static_cast<int>(peak_it - kernel.weights.begin());
  const int pr = idx / kernel.side, pc = idx % kernel.side;

  std::vector<std::pair<int, double>> samples;  // (squared radius, value)
  for (int r = 0; r < kernel.side; ++r) {
    for (int c = 0; c < kernel.side; ++c) samples.emplace_back((r - pr) * (r - pr) + (c - pc) * (c - pc), kernel.at(r, c));
  }
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, double>> profile;
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    double s = 0.0;
    while (j < samples.size() && samples[j].first == samples[i].first) s += samples[j++].second;
    profile.emplace_back(std::sqrt(double(samples[i].first)), s / double(j - i));
    i = j;
  }
  const double half = 0.5 * peak;
  double radius = profile.back().first + 0.5;  // never drops below half within the kernel
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (profile[i].second < half) {
      const auto& [r0, v0] = profile[i - 1];
      const auto& [r1, v1] = profile[i];
      radius = v0 == v1 ? r0 : r0 + (v0 - half) / (v0 - v1) * (r1 - r0);
      break;
    }
  }
  if (profile.size() == 1) radius = 0.5;
  return std::max(1.0, 2.0 * radius);
}

// ============================================================================
// OIQE, OIQ and the classifiers
// ============================================================================

// Mean over frequencies ≤ 0.25 cyc/px (half Nyquist, DC included) of min(target/ref, 1).
inline double oiqe(const std::vector<double>& target, const std::vector<double>& ref) {
  if (target.size() != ref.size()) throw ShapeError("oiqe: curves differ in length");
  if (target.size() < 2) throw ShapeError("oiqe: curves need at least two samples");
  const auto freqs = sfr_frequencies(static_cast<int>(ref.size()));
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i] > 0.25 + 1e-12) break;
    if (!(ref[i] > 0.0)) throw DomainError("oiqe: degenerate reference SFR at " + std::to_string(freqs[i]) + " cyc/px");
    sum += std::clamp(target[i] / ref[i], 0.0, 1.0);
    ++n;
  }
  return sum / n;
}

inline double oiq(double psnr_db, double ssim_value, double oiqe_value) {
  const double p = std::clamp(psnr_db / 50.0, 0.0, 1.0);
  const double s = std::clamp((ssim_value - 0.5) / 0.5, 0.0, 1.0);
  const double e = std::clamp(oiqe_value, 0.0, 1.0);
  return 0.4 * p + 0.3 * s + 0.3 * e;
}

enum class Severity { Strong, Medium, Mild };

inline std::string to_string(Severity s) {
  switch (s) {
    case Severity::Strong: return "Strong";
    case Severity::Medium: return "Medium";
    case Severity::Mild: return "Mild";
  }
  return "?";
}

inline Severity parse_severity(const std::string& s) {
  if (s == "Strong") return Severity::Strong;
  if (s == "Medium") return Severity::Medium;
  if (s == "Mild") return Severity::Mild;
  throw FormatError("unknown severity '" + s + "'");
}

struct SeverityThresholds {
  double medium = 1.0 / 3.0;  // lower bound of Medium
  double mild = 2.0 / 3.0;    // lower bound of Mild
};

inline Severity severity_class(double avg_oiq, const SeverityThresholds& t = {}) {
  if (avg_oiq < t.medium) return Severity::Strong;
  if (avg_oiq < t.mild) return Severity::Medium;
  return Severity::Mild;
}

struct Uniformity {
  double cv = 0.0;
  double u_s = 1.0;
};

namespace detail {

template <std::size_t N>
Uniformity uniformity(const std::array<double, N>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(N);
  if (mean == 0.0) throw DomainError("uniformity of a zero-mean vector");
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= double(N);
  const double cv = std::sqrt(var) / mean;
  return {cv, std::exp(-5.0 * cv)};
}

}  // namespace detail

// CV with the population standard deviation; U_S = exp(−5 CV).
inline Uniformity spatial_uniformity(const std::array<double, 5>& oiq_values) { return detail::uniformity(oiq_values); }

/**
 * OD-Class from five per-FoV OIQ values ordered centre to periphery.
 * 0 uniform; 1 peak at centre, monotone fall-off; 2 worst at centre;
 * 3 worst at an interior FoV; 4 peak at centre, worst at periphery, not
 * monotone; 5 worst at periphery with the peak at an interior FoV.
 */
inline int od_class(const std::array<double, 5>& v, double alpha = 0.8) {
  if (spatial_uniformity(v).u_s >= alpha) return 0;
  const auto i_max = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  const auto j_min = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
  if (j_min == 4) {
    if (i_max == 0) {
      bool monotone = true;
      for (std::size_t i = 0; i + 1 < v.size(); ++i) monotone = monotone && v[i + 1] <= v[i];
      return monotone ? 1 : 4;
    }
    return 5;
  }
  if (j_min == 0) return 2;
  return 3;
}

// 1 (strongest chromatic non-uniformity) to 5, from equal-width bins of U_C.
inline int chromatic_class(const std::array<double, 3>& channel_oiq) {
  const double u_c = detail::uniformity(channel_oiq).u_s;
  const double clamped = std::clamp(u_c, 0.0, std::nextafter(1.0, 0.0));
  return 1 + static_cast<int>(std::floor(clamped * 5.0));
}

// ============================================================================
// Lens quantification
// ============================================================================

struct QuantifyConfig {
  double alpha = 0.8;
  int n_p = kDefaultSfrSamples;
  SeverityThresholds thresholds;
  CheckerboardOptions checkerboard;
  unsigned threads = 0;
};

inline void validate(const QuantifyConfig& c) {
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) throw DomainError("quantify: alpha must lie in (0, 1]");
  if (c.n_p < 4) throw DomainError("quantify: n_p must be >= 4");
  if (!(c.thresholds.medium >= 0.0 && c.thresholds.medium <= c.thresholds.mild && c.thresholds.mild <= 1.0)) {
    throw DomainError("quantify: severity thresholds must satisfy 0 <= medium <= mild <= 1");
  }
  if (c.checkerboard.square < 2 || c.checkerboard.patch < 16) throw DomainError("quantify: checkerboard too small");
}

struct FovMetrics {
  double radius_fraction = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double oiqe = 0.0;
  double oiq = 0.0;
  std::array<double, 3> channel_oiq{};
};

struct OIQReport {
  std::string lens_name;
  std::string lens_id;
  std::vector<FovMetrics> fovs;  // five, centre to periphery
  std::array<double, 5> oiq{};
  double average_oiq = 0.0;
  Severity severity = Severity::Strong;
  double cv = 0.0;
  double u_s = 1.0;
  int od_class = 0;
  std::array<double, 3> channel_average_oiq{};
  int chromatic_class = 5;
  QuantifyConfig config;
};

inline FovMetrics measure_patch(const ImageBuffer& degraded, const ImageBuffer& gt, int n_p) {
  FovMetrics m;
  m.psnr = psnr(degraded, gt);
  m.ssim = ssim(degraded, gt);
  double oiqe_sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Plane d = channel_plane(degraded, c), g = channel_plane(gt, c);
    const double e = oiqe(sfr_from_edge(d, n_p), sfr_from_edge(g, n_p));
    oiqe_sum += e;
    m.channel_oiq[static_cast<std::size_t>(c)] = oiq(psnr(d, g), ssim(d, g), e);
  }
  m.oiqe = oiqe_sum / 3.0;
  m.oiq = oiq(m.psnr, m.ssim, m.oiqe);
  return m;
}

inline OIQReport summarize(std::vector<FovMetrics> fovs, const QuantifyConfig& config) {
  if (fovs.size() != 5) throw ShapeError("a report needs exactly five FoV measurements");
  OIQReport r;
  r.config = config;
  r.fovs = std::move(fovs);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    r.oiq[i] = r.fovs[i].oiq;
    sum += r.oiq[i];
    for (std::size_t c = 0; c < 3; ++c) r.channel_average_oiq[c] += r.fovs[i].channel_oiq[c] / 5.0;
  }
  r.average_oiq = sum / 5.0;
  r.severity = severity_class(r.average_oiq, config.thresholds);
  const Uniformity u = spatial_uniformity(r.oiq);
  r.cv = u.cv;
  r.u_s = u.u_s;
  r.od_class = od_class(r.oiq, config.alpha);
  r.chromatic_class = chromatic_class(r.channel_average_oiq);
  return r;
}

// Pixel radius on the sensor where the full field lands; falls back to the half-diagonal.
inline double full_field_radius_px(const LensSystem& lens) {
  if (!lens.sensor || lens.half_fov_deg <= 0.0) return 0.0;
  return image_height(lens, lens.half_fov_deg) / (lens.sensor->pitch_um * 1e-3);
}

/**
 * Checkerboard → five knife-edge patches → per patch PSNR, SSIM, SFR-based
 * OIQE against the clear patch, and OIQ → severity, U_S, OD-Class and
 * chromatic class.
 */
inline OIQReport quantify_lens(const LensSystem& lens, const RGBPSFSet& psfs, const QuantifyConfig& config = {}) {
  if (!lens.sensor) throw DomainError("quantify: lens '" + lens.name + "' has no matched sensor");
  validate(config);
  const CheckerboardPair pair =
      render_checkerboard(*lens.sensor, psfs, config.checkerboard, full_field_radius_px(lens), true, config.threads);
  const auto layout = knife_edge_layout(pair.gt.height, pair.gt.width, config.checkerboard);
  std::vector<FovMetrics> fovs(layout.size());
  parallel_for(layout.size(), config.threads, [&](std::size_t i) {
    try {
      fovs[i] = measure_patch(crop(pair.degraded, layout[i].rect), crop(pair.gt, layout[i].rect), config.n_p);
      fovs[i].radius_fraction = layout[i].radius_fraction;
    } catch (const Error& e) {
      throw DomainError("quantify: FoV " + std::to_string(i) + ": " + e.what());
    }
  });
  OIQReport report = summarize(std::move(fovs), config);
  report.lens_name = lens.name;
  report.lens_id = lens_id(lens);
  return report;
}

// ----------------------------------------------------------------------------
// Report records
// ----------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const OIQReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "aberforge.oiq_report";
  j["schema_version"] = 1;
  j["lens_name"] = r.lens_name;
  j["lens_id"] = r.lens_id;
  auto fovs = nlohmann::ordered_json::array();
  for (const auto& f : r.fovs) {
    fovs.push_back({{"radius_fraction", f.radius_fraction},
                    {"psnr", f.psnr},
                    {"ssim", f.ssim},
                    {"oiqe", f.oiqe},
                    {"oiq", f.oiq},
                    {"channel_oiq", f.channel_oiq}});
  }
  j["fovs"] = fovs;
  j["oiq"] = r.oiq;
  j["average_oiq"] = r.average_oiq;
  j["severity"] = to_string(r.severity);
  j["cv"] = r.cv;
  j["u_s"] = r.u_s;
  j["od_class"] = r.od_class;
  j["channel_average_oiq"] = r.channel_average_oiq;
  j["chromatic_class"] = r.chromatic_class;
  j["config"] = {{"alpha", r.config.alpha},
                 {"n_p", r.config.n_p},
                 {"severity_thresholds", {r.config.thresholds.medium, r.config.thresholds.mild}},
                 {"checkerboard",
                  {{"square", r.config.checkerboard.square},
                   {"tilt_deg", r.config.checkerboard.tilt_deg},
                   {"low", r.config.checkerboard.low},
                   {"high", r.config.checkerboard.high},
                   {"patch", r.config.checkerboard.patch}}}};
  return j;
}

inline OIQReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) throw FormatError("unsupported report schema_version");
    OIQReport r;
    r.lens_name = j.value("lens_name", "");
    r.lens_id = j.value("lens_id", "");
    for (const auto& f : j.at("fovs")) {
      FovMetrics m;
      m.radius_fraction = f.at("radius_fraction");
      m.psnr = f.at("psnr");
      m.ssim = f.at("ssim");
      m.oiqe = f.at("oiqe");
      m.oiq = f.at("oiq");
      m.channel_oiq = f.at("channel_oiq").get<std::array<double, 3>>();
      r.fovs.push_back(m);
    }
    r.oiq = j.at("oiq").get<std::array<double, 5>>();
    r.average_oiq = j.at("average_oiq");
    r.severity = parse_severity(j.at("severity").get<std::string>());
    r.cv = j.at("cv");
    r.u_s = j.at("u_s");
    r.od_class = j.at("od_class");
    r.channel_average_oiq = j.at("channel_average_oiq").get<std::array<double, 3>>();
    r.chromatic_class = j.at("chromatic_class");
    const auto& c = j.at("config");
    r.config.alpha = c.at("alpha");
    r.config.n_p = c.at("n_p");
    r.config.thresholds.medium = c.at("severity_thresholds").at(0);
    r.config.thresholds.mild = c.at("severity_thresholds").at(1);
    const auto& cb = c.at("checkerboard");
    r.config.checkerboard.square = cb.at("square");
    r.config.checkerboard.tilt_deg = cb.at("tilt_deg");
    r.config.checkerboard.low = cb.at("low");
    r.config.checkerboard.high = cb.at("high");
    r.config.checkerboard.patch = cb.at("patch");
    if (r.od_class < 0 || r.od_class > 5) throw FormatError("report od_class outside 0..5");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace aberforge
