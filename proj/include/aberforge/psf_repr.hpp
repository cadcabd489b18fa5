#pragma once

/**
 * @file psf_repr.hpp
 * @brief PSF maps, VQ codebooks, nearest-code quantization, k-means codebook
 * fitting and the loss value oracles used to train a PSF-aware restorer.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "aberforge/binary_io.hpp"
#include "aberforge/error.hpp"
#include "aberforge/parallel.hpp"
#include "aberforge/quantify.hpp"
#include "aberforge/random.hpp"
#include "aberforge/raytrace.hpp"
#include "aberforge/simulate.hpp"

namespace aberforge {

inline constexpr int kDefaultCodebookSize = 1024;
inline constexpr int kDefaultCodeDim = 512;
inline constexpr double kDefaultBeta = 0.25;

// Row-major set of equal-length float vectors.
struct VectorSet {
  int dim = 0;
  std::vector<float> data;

  VectorSet() = default;
  VectorSet(std::size_t count, int d, float fill = 0.0F) : dim(d), data(count * static_cast<std::size_t>(d), fill) {}

  std::size_t size() const { return dim > 0 ? data.size() / static_cast<std::size_t>(dim) : 0; }
  float* row(std::size_t i) { return data.data() + i * static_cast<std::size_t>(dim); }
  const float* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
  void push_back(const float* v) { data.insert(data.end(), v, v + dim); }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;
};

inline double squared_distance(const float* a, const float* b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s;
}

inline void require_same_shape(const VectorSet& a, const VectorSet& b, const char* what) {
  if (a.dim != b.dim || a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.size()) + "x" + std::to_string(a.dim) +
                     " vs " + std::to_string(b.size()) + "x" + std::to_string(b.dim) + ")");
  }
}

// ============================================================================
// PSF map
// ============================================================================

/**
 * Per-pixel PSF descriptor stored compactly: one feature vector per FoV plus
 * a per-pixel FoV index. Features are n_p green-channel MTF samples followed
 * by the R, G, B FWHM in pixels.
 */
struct PSFMap {
  int height = 0;
  int width = 0;
  int n_p = kDefaultSfrSamples;
  double full_field_radius_px = 0.0;
  VectorSet fov_features;             // n_fov × (n_p + 3)
  std::vector<std::uint16_t> assign;  // height × width FoV indices

  int feature_length() const { return n_p + 3; }
  int fov_of(int y, int x) const { return assign[static_cast<std::size_t>(y) * width + x]; }
  const float* feature(int y, int x) const { return fov_features.row(static_cast<std::size_t>(fov_of(y, x))); }

  // Dense H·W × N_p copy; only for small maps.
  VectorSet pixel_vectors() const {
    VectorSet v;
    v.dim = feature_length();
    v.data.reserve(assign.size() * static_cast<std::size_t>(v.dim));
    for (std::uint16_t f : assign) v.push_back(fov_features.row(f));
    return v;
  }

  friend bool operator==(const PSFMap&, const PSFMap&) = default;
};

inline std::vector<float> psf_feature(const std::array<Kernel, 3>& rgb, int n_p) {
  std::vector<float> f;
  f.reserve(static_cast<std::size_t>(n_p + 3));
  for (double v : mtf_from_psf(rgb[1], n_p)) f.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
  for (const Kernel& k : rgb) f.push_back(static_cast<float>(fwhm(k)));
  return f;
}

// Nearest-FoV assignment by pixel-centre radius over the full-field radius
// (the half-diagonal when full_field_radius_px <= 0).
inline PSFMap build_psf_map(const RGBPSFSet& psfs, int height, int width, int n_p = kDefaultSfrSamples,
                            double full_field_radius_px = 0.0) {
  if (psfs.kernels.empty()) throw DomainError("build_psf_map: empty PSF set");
  if (psfs.field_positions.size() != psfs.kernels.size()) throw ShapeError("build_psf_map: field positions do not match kernels");
  if (height <= 0 || width <= 0) throw ShapeError("build_psf_map: empty image size");
  if (n_p < 4) throw DomainError("build_psf_map: n_p must be >= 4");
  if (psfs.kernels.size() > 65535) throw DomainError("build_psf_map: too many FoVs");
  PSFMap map;
  map.height = height;
  map.width = width;
  map.n_p = n_p;
  map.full_field_radius_px = full_field_radius_px > 0.0 ? full_field_radius_px : half_diagonal_px(height, width);
  map.fov_features.dim = n_p + 3;
  for (const auto& rgb : psfs.kernels) {
    const auto f = psf_feature(rgb, n_p);
    map.fov_features.push_back(f.data());
  }
  map.assign.resize(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double rho = std::hypot(x + 0.5 - 0.5 * width, y + 0.5 - 0.5 * height) / map.full_field_radius_px;
      map.assign[static_cast<std::size_t>(y) * width + x] =
          static_cast<std::uint16_t>(detail::nearest_position(psfs.field_positions, rho));
    }
  }
  return map;
}

inline constexpr std::uint16_t kPsfMapVersion = 1;

inline void save_psf_map(const std::string& path, const PSFMap& m) {
  using namespace binary;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_magic(out, "PSFM");
  write_uint<std::uint16_t>(out, kPsfMapVersion);
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.height));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.width));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_p));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.fov_features.size()));
  write_f64(out, m.full_field_radius_px);
  for (float v : m.fov_features.data) write_f32(out, v);
  for (std::uint16_t a : m.assign) write_uint<std::uint16_t>(out, a);
}

inline PSFMap load_psf_map(const std::string& path) {
  using namespace binary;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  expect_magic(in, "PSFM");
  if (read_uint<std::uint16_t>(in) != kPsfMapVersion) throw FormatError("unsupported PSFM version");
  PSFMap m;
  m.height = static_cast<int>(read_uint<std::uint32_t>(in));
  m.width = static_cast<int>(read_uint<std::uint32_t>(in));
  m.n_p = static_cast<int>(read_uint<std::uint32_t>(in));
  const auto n_fov = read_uint<std::uint32_t>(in);
  m.full_field_radius_px = read_f64(in);
  if (m.height <= 0 || m.width <= 0 || m.n_p < 4 || n_fov == 0) throw FormatError("PSFM: bad header");
  m.fov_features = VectorSet(n_fov, m.n_p + 3);
  for (float& v : m.fov_features.data) v = read_f32(in);
  m.assign.resize(static_cast<std::size_t>(m.height) * m.width);
  for (auto& a : m.assign) {
    a = read_uint<std::uint16_t>(in);
    if (a >= n_fov) throw FormatError("PSFM: FoV index out of range");
  }
  return m;
}

// ============================================================================
// Codebook and quantization
// ============================================================================

struct Codebook {
  int size = 0;  // K
  int dim = 0;   // d
  std::vector<float> codes;
  std::vector<std::uint64_t> usage;

  Codebook() = default;
  Codebook(int k, int d) : size(k), dim(d), codes(static_cast<std::size_t>(k) * d, 0.0F), usage(static_cast<std::size_t>(k), 0) {
    if (k < 1 || d < 1) throw DomainError("codebook needs K >= 1 and d >= 1");
  }

  float* code(int k) { return codes.data() + static_cast<std::size_t>(k) * dim; }
  const float* code(int k) const { return codes.data() + static_cast<std::size_t>(k) * dim; }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

inline Codebook random_codebook(int k, int d, std::uint64_t seed) {
  Codebook cb(k, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0F, 1.0F);
  for (float& v : cb.codes) v = n(rng);
  return cb;
}

struct Quantized {
  std::vector<int> indices;
  std::vector<double> distances;  // squared L2 to the chosen code
  VectorSet vectors;
};

inline int nearest_code(const Codebook& cb, const float* q, double* dist = nullptr) {
  int best = 0;
  double best_d = squared_distance(q, cb.code(0), cb.dim);
  for (int k = 1; k < cb.size; ++k) {
    const double d = squared_distance(q, cb.code(k), cb.dim);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

// L2-nearest code per vector, ties to the lowest index; bumps usage counters.
inline Quantized quantize(const VectorSet& features, Codebook& cb, unsigned threads = 0) {
  if (features.dim != cb.dim) {
    throw ShapeError("quantize: feature dimension " + std::to_string(features.dim) + " != codebook dimension " +
                     std::to_string(cb.dim));
  }
  const std::size_t n = features.size();
  Quantized q;
  q.indices.resize(n);
  q.distances.resize(n);
  q.vectors = VectorSet(n, cb.dim);
  parallel_for(n, threads, [&](std::size_t i) {
    const int k = nearest_code(cb, features.row(i), &q.distances[i]);
    q.indices[i] = k;
    std::copy(cb.code(k), cb.code(k) + cb.dim, q.vectors.row(i));
  });
  for (int k : q.indices) ++cb.usage[static_cast<std::size_t>(k)];
  return q;
}

inline int used_codes(const Quantized& q) {
  std::vector<int> idx = q.indices;
  std::sort(idx.begin(), idx.end());
  return static_cast<int>(std::unique(idx.begin(), idx.end()) - idx.begin());
}

inline constexpr std::uint16_t kCodebookVersion = 1;

inline void save_codebook(const std::string& path, const Codebook& cb) {
  using namespace binary;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_magic(out, "VQCB");
  write_uint<std::uint16_t>(out, kCodebookVersion);
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(cb.size));
  write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(cb.dim));
  for (float v : cb.codes) write_f32(out, v);
  for (std::uint64_t u : cb.usage) write_uint<std::uint64_t>(out, u);
}

inline Codebook load_codebook(const std::string& path) {
  using namespace binary;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  expect_magic(in, "VQCB");
  if (read_uint<std::uint16_t>(in) != kCodebookVersion) throw FormatError("unsupported VQCB version");
  const auto k = read_uint<std::uint32_t>(in);
  const auto d = read_uint<std::uint32_t>(in);
  if (k == 0 || d == 0 || k > (1U << 24) || d > (1U << 16)) throw FormatError("VQCB: bad header");
  Codebook cb(static_cast<int>(k), static_cast<int>(d));
  for (float& v : cb.codes) {
    v = read_f32(in);
    if (!std::isfinite(v)) throw FormatError("VQCB: non-finite code value");
  }
  for (auto& u : cb.usage) u = read_uint<std::uint64_t>(in);
  return cb;
}

// Plain linear map between feature widths; identity() copies the shared
// leading coordinates and zero-fills the rest.
struct LinearAdapter {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<float> weights;  // out_dim × in_dim
  std::vector<float> bias;

  static LinearAdapter identity(int in, int out) {
    if (in < 1 || out < 1) throw DomainError("adapter dimensions must be >= 1");
    LinearAdapter a{in, out, std::vector<float>(static_cast<std::size_t>(in) * out, 0.0F),
                    std::vector<float>(static_cast<std::size_t>(out), 0.0F)};
    for (int i = 0; i < std::min(in, out); ++i) a.weights[static_cast<std::size_t>(i) * in + i] = 1.0F;
    return a;
  }

  VectorSet apply(const VectorSet& x) const {
    if (x.dim != in_dim) throw ShapeError("adapter expects dimension " + std::to_string(in_dim));
    VectorSet y(x.size(), out_dim);
    for (std::size_t n = 0; n < x.size(); ++n) {
      const float* v = x.row(n);
      float* o = y.row(n);
      for (int r = 0; r < out_dim; ++r) {
        double s = bias[static_cast<std::size_t>(r)];
        const float* w = weights.data() + static_cast<std::size_t>(r) * in_dim;
        for (int c = 0; c < in_dim; ++c) s += double(w[c]) * v[c];
        o[r] = static_cast<float>(s);
      }
    }
    return y;
  }
};

// ============================================================================
// Codebook fitting (seeded k-means++ then Lloyd)
// ============================================================================

namespace detail {

inline void assign_all(const VectorSet& x, const std::vector<double>& centroids, int k, std::vector<int>& idx,
                       std::vector<double>& dist, unsigned threads) {
  const int d = x.dim;
  parallel_for(x.size(), threads, [&](std::size_t i) {
    const float* v = x.row(i);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double* m = centroids.data() + static_cast<std::size_t>(c) * d;
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        const double t = double(v[j]) - m[j];
        s += t * t;
      }
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    idx[i] = best;
    dist[i] = best_d;
  });
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace detail

/**
 * k-means with seeded k-means++ initialization. `objective`, when given,
 * receives the mean squared distance after every assignment step
 * (iterations + 1 values, last one for the returned codes).
 */
inline Codebook fit_codebook(const VectorSet& samples, int k, int iterations, std::uint64_t seed,
                             std::vector<double>* objective = nullptr, unsigned threads = 0) {
  const std::size_t n = samples.size();
  if (n == 0 || samples.dim < 1) throw DomainError("fit_codebook: empty sample set");
  if (k < 1) throw DomainError("fit_codebook: K must be >= 1");
  if (iterations < 0) throw DomainError("fit_codebook: iterations must be >= 0");
  const int d = samples.dim;
  std::vector<double> cent(static_cast<std::size_t>(k) * d);
  const auto set_centroid = [&](int c, std::size_t i) {
    std::copy(samples.row(i), samples.row(i) + d, cent.begin() + static_cast<std::ptrdiff_t>(c) * d);
  };

  std::mt19937_64 rng(seed);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(uniform_index(rng, n));
  std::size_t fallback = 0;
  for (int c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total > 0.0) {
        const double u = uniform_unit(rng) * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc > u && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = fallback++ % n;  // every sample already coincides with a centroid
      }
    }
    set_centroid(c, pick);
    const float* p = samples.row(pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(samples.row(i), p, d));
  }

  std::vector<int> idx(n);
  std::vector<double> dist(n);
  for (int it = 0; it < iterations; ++it) {
    detail::assign_all(samples, cent, k, idx, dist, threads);
    if (objective) objective->push_back(detail::mean(dist));
    std::vector<double> sum(cent.size(), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const float* v = samples.row(i);
      double* s = sum.data() + static_cast<std::size_t>(idx[i]) * d;
      for (int j = 0; j < d; ++j) s[j] += v[j];
      ++count[static_cast<std::size_t>(idx[i])];
    }
    std::vector<bool> taken(n, false);
    for (int c = 0; c < k; ++c) {
      double* m = cent.data() + static_cast<std::size_t>(c) * d;
      if (count[static_cast<std::size_t>(c)] > 0) {
        const double inv = 1.0 / double(count[static_cast<std::size_t>(c)]);
        for (int j = 0; j < d; ++j) m[j] = sum[static_cast<std::size_t>(c) * d + j] * inv;
        continue;
      }
      // Empty cluster: move it onto the sample farthest from its centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
      }
      if (far == n) continue;
      taken[far] = true;
      set_centroid(c, far);
    }
  }
  if (objective) {
    detail::assign_all(samples, cent, k, idx, dist, threads);
    objective->push_back(detail::mean(dist));
  }

  Codebook cb(k, d);
  for (std::size_t i = 0; i < cent.size(); ++i) cb.codes[i] = static_cast<float>(cent[i]);
  return cb;
}

// ============================================================================
// Loss value oracles
// ============================================================================

struct VqLosses {
  double recon_l1 = 0.0;
  double codebook = 0.0;
  double commit = 0.0;
  double total = 0.0;
};

inline double mean_squared_norm(const VectorSet& a, const VectorSet& b) {
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += squared_distance(a.row(i), b.row(i), a.dim);
  return s / double(a.size());
}

inline double mean_abs_difference(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(double(a[i]) - double(b[i]));
  return n ? s / double(n) : 0.0;
}

/**
 * Reconstruction L1 plus codebook and commitment terms. Gradient stops have
 * no numeric effect, so codebook and commit differ only by beta.
 */
inline VqLosses vq_losses(const VectorSet& pre_q, const VectorSet& quantized, const VectorSet& recon,
                          const VectorSet& target, double beta = kDefaultBeta) {
  require_same_shape(pre_q, quantized, "vq_losses");
  require_same_shape(recon, target, "vq_losses");
  if (!(beta >= 0.0)) throw DomainError("vq_losses: beta must be >= 0");
  VqLosses l;
  l.recon_l1 = mean_abs_difference(recon.data.data(), target.data.data(), recon.data.size());
  l.codebook = mean_squared_norm(pre_q, quantized);
  l.commit = beta * mean_squared_norm(quantized, pre_q);
  l.total = l.recon_l1 + l.codebook + l.commit;
  return l;
}

inline VqLosses vq_losses(const VectorSet& pre_q, const VectorSet& quantized, const PSFMap& recon, const PSFMap& target,
                          double beta = kDefaultBeta) {
  if (recon.height != target.height || recon.width != target.width || recon.n_p != target.n_p) {
    throw ShapeError("vq_losses: PSF map shape mismatch");
  }
  const VectorSet r(0, recon.feature_length()), t(0, target.feature_length());
  VqLosses l = vq_losses(pre_q, quantized, r, t, beta);
  const auto n = static_cast<std::size_t>(recon.feature_length());
  double s = 0.0;
  for (int y = 0; y < recon.height; ++y)
    for (int x = 0; x < recon.width; ++x) s += mean_abs_difference(recon.feature(y, x), target.feature(y, x), n);
  l.recon_l1 = s / (double(recon.height) * recon.width);
  l.total = l.recon_l1 + l.codebook + l.commit;
  return l;
}

inline double feature_matching_loss(const VectorSet& pred, const VectorSet& gt_quantized) {
  require_same_shape(pred, gt_quantized, "feature_matching_loss");
  return mean_squared_norm(pred, gt_quantized);
}

struct DegradationLosses {
  double l_odn = 0.0;
  double l_lpr = 0.0;
  double l_pfp = 0.0;
};

inline DegradationLosses degradation_losses(const ImageBuffer& pred, const ImageBuffer& gt, double l_vq, double l_fm) {
  if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("degradation_losses: image shape mismatch");
  if (!(l_vq >= 0.0) || !(l_fm >= 0.0)) throw DomainError("degradation_losses: l_vq and l_fm must be >= 0");
  DegradationLosses l;
  l.l_odn = mean_abs_difference(pred.data.data(), gt.data.data(), pred.data.size());
  l.l_lpr = l_vq + l.l_odn;
  l.l_pfp = l_fm + l.l_odn;
  return l;
}

}  // namespace aberforge
