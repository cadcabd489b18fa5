#pragma once

/**
 * @file plot.hpp
 * @brief Static raster charts: OIQ-vs-FoV curves and the subclass histogram.
 *
 * Charts are drawn into an ImageBuffer (white background) so they can be
 * written with save_image. Tick labels use a built-in 3x5 digit font.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "aberforge/error.hpp"
#include "aberforge/quantify.hpp"
#include "aberforge/simulate.hpp"

namespace aberforge::plot {

using Color = std::array<float, 3>;

inline constexpr Color kBlack{0.0F, 0.0F, 0.0F};
inline constexpr Color kGrid{0.85F, 0.85F, 0.85F};

inline Color palette(std::size_t i) {
  static constexpr std::array<Color, 8> kColors{{{0.12F, 0.47F, 0.71F},
                                                 {1.00F, 0.50F, 0.05F},
                                                 {0.17F, 0.63F, 0.17F},
                                                 {0.84F, 0.15F, 0.16F},
                                                 {0.58F, 0.40F, 0.74F},
                                                 {0.55F, 0.34F, 0.29F},
                                                 {0.89F, 0.47F, 0.76F},
                                                 {0.50F, 0.50F, 0.50F}}};
  return kColors[i % kColors.size()];
}

inline Color severity_color(Severity s) {
  switch (s) {
    case Severity::Strong: return {0.80F, 0.20F, 0.20F};
    case Severity::Medium: return {0.95F, 0.60F, 0.10F};
    case Severity::Mild: return {0.20F, 0.60F, 0.30F};
  }
  return kBlack;
}

struct Canvas {
  ImageBuffer img;

  Canvas(int h, int w) : img(h, w, 1.0F) {}

  void pixel(int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[static_cast<std::size_t>(k)];
  }

  void fill(int x0, int y0, int x1, int y1, const Color& c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) pixel(x, y, c);
  }

  void line(double x0, double y0, double x1, double y1, const Color& c, int thickness = 1) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    const int r = thickness / 2;
    for (int i = 0; i <= steps; ++i) {
      const double t = double(i) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      fill(x - r, y - r, x + r, y + r, c);
    }
  }

  // Digits, a few capitals, '.', '-' and '/' in a 3x5 font scaled by `scale`.
  void text(int x, int y, const std::string& s, const Color& c, int scale = 2) {
    for (char ch : s) {
      const auto glyph = glyph_rows(ch);
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (glyph[static_cast<std::size_t>(row)] & (4 >> col)) {
            fill(x + col * scale, y + row * scale, x + col * scale + scale - 1, y + row * scale + scale - 1, c);
          }
      x += 4 * scale;
    }
  }

  static std::array<int, 5> glyph_rows(char ch) {
    switch (ch) {
      case '0': return {7, 5, 5, 5, 7};
      case '1': return {2, 6, 2, 2, 7};
      case '2': return {7, 1, 7, 4, 7};
      case '3': return {7, 1, 7, 1, 7};
      case '4': return {5, 5, 7, 1, 1};
      case '5': return {7, 4, 7, 1, 7};
      case '6': return {7, 4, 7, 5, 7};
      case '7': return {7, 1, 1, 1, 1};
      case '8': return {7, 5, 7, 5, 7};
      case '9': return {7, 5, 7, 1, 7};
      case '.': return {0, 0, 0, 0, 2};
      case '-': return {0, 0, 7, 0, 0};
      case '/': return {1, 1, 2, 4, 4};
      case 'A': return {7, 5, 7, 5, 5};
      case 'C': return {7, 4, 4, 4, 7};
      case 'D': return {6, 5, 5, 5, 6};
      case 'E': return {7, 4, 6, 4, 7};
      case 'F': return {7, 4, 6, 4, 4};
      case 'G': return {7, 4, 5, 5, 7};
      case 'I': return {7, 2, 2, 2, 7};
      case 'L': return {4, 4, 4, 4, 7};
      case 'M': return {5, 7, 5, 5, 5};
      case 'N': return {6, 5, 5, 5, 5};
      case 'O': return {7, 5, 5, 5, 7};
      case 'Q': return {7, 5, 5, 7, 1};
      case 'R': return {6, 5, 6, 5, 5};
      case 'S': return {7, 4, 7, 1, 7};
      case 'T': return {7, 2, 2, 2, 2};
      case 'U': return {5, 5, 5, 5, 7};
      case 'V': return {5, 5, 5, 5, 2};
      default: return {0, 0, 0, 0, 0};
    }
  }
};

struct Frame {
  int left = 60, right = 20, top = 20, bottom = 50;
  int width = 640, height = 400;

  double px(double fx) const { return left + fx * (width - left - right); }
  double py(double fy) const { return height - bottom - fy * (height - top - bottom); }
};

inline std::string fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline void axes(Canvas& c, const Frame& f, int y_ticks, double y_max, int y_decimals) {
  for (int i = 0; i <= y_ticks; ++i) {
    const double y = f.py(double(i) / y_ticks);
    c.line(f.px(0), y, f.px(1), y, kGrid);
    c.text(4, static_cast<int>(y) - 5, fixed(y_max * i / y_ticks, y_decimals), kBlack);
  }
  c.line(f.px(0), f.py(0), f.px(1), f.py(0), kBlack, 2);
  c.line(f.px(0), f.py(0), f.px(0), f.py(1), kBlack, 2);
}

/**
 * One polyline per report: OIQ at the five knife-edge radii (x in [0, 1],
 * y in [0, 1]).
 */
inline ImageBuffer oiq_curves(const std::vector<OIQReport>& reports, int width = 640, int height = 400) {
  if (reports.empty()) throw DomainError("plot: no reports to draw");
  Frame f;
  f.width = width;
  f.height = height;
  Canvas c(height, width);
  axes(c, f, 5, 1.0, 1);
  for (double x : kKnifeEdgeFractions) {
    c.line(f.px(x), f.py(0), f.px(x), f.py(0) + 6, kBlack);
    c.text(static_cast<int>(f.px(x)) - 10, static_cast<int>(f.py(0)) + 12, fixed(x, 2), kBlack);
  }
  c.text(static_cast<int>(f.px(0.5)) - 10, height - 14, "FOV", kBlack);
  c.text(f.left + 8, 4, "OIQ", kBlack);
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const Color col = palette(r);
    for (std::size_t i = 0; i + 1 < 5; ++i) {
      const double y0 = std::clamp(reports[r].oiq[i], 0.0, 1.0), y1 = std::clamp(reports[r].oiq[i + 1], 0.0, 1.0);
      c.line(f.px(kKnifeEdgeFractions[i]), f.py(y0), f.px(kKnifeEdgeFractions[i + 1]), f.py(y1), col, 2);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      const int x = static_cast<int>(f.px(kKnifeEdgeFractions[i]));
      const int y = static_cast<int>(f.py(std::clamp(reports[r].oiq[i], 0.0, 1.0)));
      c.fill(x - 3, y - 3, x + 3, y + 3, col);
    }
  }
  return c.img;
}

// 18 bars in severity-major order (Strong, Medium, Mild × OD0..OD5).
inline ImageBuffer subclass_histogram_chart(const std::array<int, 18>& counts, int width = 720, int height = 400) {
  Frame f;
  f.width = width;
  f.height = height;
  Canvas c(height, width);
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  // Round the axis up to a multiple of 5 so tick labels stay integral.
  const int y_max = ((peak + 4) / 5) * 5;
  axes(c, f, 5, y_max, 0);
  const double slot = 1.0 / 18.0;
  for (int i = 0; i < 18; ++i) {
    const double x0 = f.px(i * slot + 0.15 * slot), x1 = f.px((i + 1) * slot - 0.15 * slot);
    const double y = f.py(double(counts[static_cast<std::size_t>(i)]) / y_max);
    if (counts[static_cast<std::size_t>(i)] > 0) {
      c.fill(static_cast<int>(x0), static_cast<int>(y), static_cast<int>(x1), static_cast<int>(f.py(0)) - 1,
             severity_color(static_cast<Severity>(i / 6)));
    }
    c.text(static_cast<int>(x0) + 2, static_cast<int>(f.py(0)) + 12, std::to_string(i % 6), kBlack);
  }
  static constexpr std::array<const char*, 3> kNames{"STRONG", "MEDIUM", "MILD"};
  for (int s = 0; s < 3; ++s) {
    const std::string name = kNames[static_cast<std::size_t>(s)];
    const int cx = static_cast<int>(f.px((s * 6 + 3) * slot));
    c.text(cx - static_cast<int>(name.size()) * 4, height - 14, name, severity_color(static_cast<Severity>(s)));
  }
  c.text(f.left + 8, 4, "OD", kBlack);
  return c.img;
}

}  // namespace aberforge::plot
