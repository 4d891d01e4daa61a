// Synthetic images, fields and oracles shared by the unit and acceptance suites.
#ifndef HISTREG_TESTS_SYNTHETIC_HPP
#define HISTREG_TESTS_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "histreg/core.hpp"
#include "histreg/filters.hpp"
#include "histreg/sampling.hpp"
#include "histreg/warp.hpp"

namespace histreg::testing {

inline double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double gaussian(std::mt19937_64& rng)
{
  const double u1 = std::max(uniform(rng), 1e-300), u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline ScalarImage random_image(int w, int h, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  ScalarImage img(w, h);
  for (double& v : img.data())
    v = uniform(rng);
  return img;
}

/// White noise smoothed by sigma and stretched to [0, 1].
inline ScalarImage smooth_noise(int w, int h, double sigma, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  ScalarImage img(w, h);
  for (double& v : img.data())
    v = gaussian(rng);
  img = gaussian_smooth(img, sigma);
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  const double a = *lo, b = *hi;
  for (double& v : img.data())
    v = (v - a) / (b - a);
  return img;
}

/**
 * Tissue-like test image: multi-scale smoothed noise inside a soft, irregular
 * blob (no rotational symmetry) on a zero background, bright tissue as in the
 * working intensity domain.
 */
inline ScalarImage tissue_texture(int w, int h, std::uint64_t seed)
{
  const ScalarImage fine = smooth_noise(w, h, 3.0, seed);
  const ScalarImage coarse = smooth_noise(w, h, 10.0, seed + 1000);
  ScalarImage out(w, h);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double radius = 0.36 * std::min(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      const double phi = std::atan2(y - cy, x - cx);
      const double outline = radius * (1.0 + 0.15 * std::cos(2.0 * phi) + 0.08 * std::sin(3.0 * phi + 1.0));
      const double r = std::hypot(x - cx, y - cy);
      const double envelope = 1.0 / (1.0 + std::exp((r - outline) / 3.0));
      out(x, y) = envelope * (0.2 + 0.8 * (0.5 * fine(x, y) + 0.5 * coarse(x, y)));
    }
  return out;
}

/**
 * Smooth random field: per-component white noise, Gaussian-smoothed, scaled to
 * a max vector length. The noise is drawn on a canvas padded by 4 sigma and
 * cropped, so edge replication does not concentrate the displacement at the
 * borders.
 */
inline DisplacementField random_smooth_field(int w, int h, double sigma, double max_disp, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  const int pad = static_cast<int>(std::ceil(4.0 * sigma));
  Raster<double> nx(w + 2 * pad, h + 2 * pad), ny(w + 2 * pad, h + 2 * pad);
  for (double& v : nx.data())
    v = gaussian(rng);
  for (double& v : ny.data())
    v = gaussian(rng);
  nx = gaussian_smooth(nx, sigma);
  ny = gaussian_smooth(ny, sigma);
  Raster<double> dx(w, h), dy(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      dx(x, y) = nx(x + pad, y + pad);
      dy(x, y) = ny(x + pad, y + pad);
    }
  DisplacementField f(dx, dy);
  double m = 0.0;
  for (std::size_t i = 0; i < f.dx().size(); ++i)
    m = std::max(m, std::hypot(f.dx().data()[i], f.dy().data()[i]));
  for (double& v : f.dx().data())
    v *= max_disp / m;
  for (double& v : f.dy().data())
    v *= max_disp / m;
  return f;
}

/// Direct dense 2D convolution with the truncated, renormalized Gaussian and clamp boundaries.
inline ScalarImage dense_gaussian_oracle(const ScalarImage& img, double sigma)
{
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k1(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i)
    s += (k1[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  ScalarImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
    {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        for (int i = -radius; i <= radius; ++i)
          acc += k1[i + radius] * k1[j + radius] / (s * s) * img.clamped(x + i, y + j);
      out(x, y) = acc;
    }
  return out;
}

/// Direct bilinear evaluation written independently of the library sampler.
inline double bilinear_oracle(const ScalarImage& img, double x, double y)
{
  const double cx = std::min(std::max(x, 0.0), img.width() - 1.0);
  const double cy = std::min(std::max(y, 0.0), img.height() - 1.0);
  const int i = static_cast<int>(cx), j = static_cast<int>(cy);
  const double a = cx - i, b = cy - j;
  double acc = 0.0;
  for (int dj = 0; dj <= 1; ++dj)
    for (int di = 0; di <= 1; ++di)
    {
      const double wgt = (di ? a : 1.0 - a) * (dj ? b : 1.0 - b);
      if (wgt != 0.0)
        acc += wgt * img.clamped(i + di, j + dj);
    }
  return acc;
}

/// Synthetic deformation y -> B(y + v(y)) used to build moving = fixed o H.
struct KnownWarp
{
  AffineTransform2D affine;
  DisplacementField field;

  Vec2 apply(Vec2 y) const
  {
    const Vec2 v{bilinear_oracle(field.dx(), y.x, y.y), bilinear_oracle(field.dy(), y.x, y.y)};
    return affine.apply(y + v);
  }

  ScalarImage pull_back(const ScalarImage& fixed) const
  {
    ScalarImage out(fixed.width(), fixed.height());
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
      {
        const Vec2 q = apply({static_cast<double>(x), static_cast<double>(y)});
        out(x, y) = bilinear_oracle(fixed, q.x, q.y);
      }
    return out;
  }
};

/// n x n grid spanning [lo, hi] on both axes.
inline LandmarkSet landmark_grid(int n, double lo, double hi)
{
  LandmarkSet s;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      s.points.push_back({lo + (hi - lo) * i / (n - 1), lo + (hi - lo) * j / (n - 1)});
  return s;
}

} // namespace histreg::testing

#endif // HISTREG_TESTS_SYNTHETIC_HPP
