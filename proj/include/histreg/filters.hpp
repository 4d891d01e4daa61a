#ifndef HISTREG_FILTERS_HPP
#define HISTREG_FILTERS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "histreg/core.hpp"

namespace histreg {

/// Normalized Gaussian taps for offsets -radius..radius, radius = ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma)
{
  if (!(sigma > 0.0))
    throw InvalidArgument("gaussian kernel needs sigma > 0");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i)
  {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps)
    t /= sum;
  return taps;
}

namespace detail {

// One separable pass with edge replication. `along_x` selects the axis.
inline Raster<double> convolve_axis(const Raster<double>& src, const std::vector<double>& taps, bool along_x)
{
  const int w = src.width(), h = src.height();
  const int radius = static_cast<int>(taps.size() / 2);
  Raster<double> out(w, h);
  const int n = along_x ? w : h;
  std::vector<double> line(static_cast<std::size_t>(n + 2 * radius));
  const int lines = along_x ? h : w;
  for (int l = 0; l < lines; ++l)
  {
    for (int i = -radius; i < n + radius; ++i)
    {
      const int c = std::clamp(i, 0, n - 1);
      line[i + radius] = along_x ? src(c, l) : src(l, c);
    }
    for (int i = 0; i < n; ++i)
    {
      const double* p = line.data() + i;
      double acc = 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k)
        acc += taps[k] * p[k];
      if (along_x)
        out(i, l) = acc;
      else
        out(l, i) = acc;
    }
  }
  return out;
}

} // namespace detail

/**
 * Isotropic Gaussian smoothing, separable FIR truncated at ceil(4 sigma)
 * with clamp-to-edge boundaries. sigma == 0 returns the input.
 */
inline ScalarImage gaussian_smooth(const ScalarImage& img, double sigma)
{
  if (!(sigma >= 0.0))
    throw InvalidArgument("gaussian_smooth: sigma must be non-negative");
  if (sigma == 0.0)
    return img;
  const auto taps = gaussian_kernel(sigma);
  return detail::convolve_axis(detail::convolve_axis(img, taps, true), taps, false);
}

inline DisplacementField smooth_field(const DisplacementField& field, double sigma)
{
  if (!(sigma >= 0.0))
    throw InvalidArgument("smooth_field: sigma must be non-negative");
  if (sigma == 0.0)
    return field;
  return DisplacementField(gaussian_smooth(field.dx(), sigma), gaussian_smooth(field.dy(), sigma));
}

/// Output size for point sampling every `factor` pixels from the origin.
inline int downsampled_extent(int n, int factor) { return (n + factor - 1) / factor; }

/// Point-sample every `factor` pixels starting at (0,0), no filtering.
template <typename T>
Raster<T> decimate(const Raster<T>& img, int factor)
{
  if (factor < 1)
    throw InvalidArgument("decimation factor must be >= 1");
  if (factor == 1)
    return img;
  const int w = downsampled_extent(img.width(), factor);
  const int h = downsampled_extent(img.height(), factor);
  Raster<T> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(x, y) = img(x * factor, y * factor);
  return out;
}

/// Anti-aliased downsampling: smooth with sigma = factor / 2, then decimate.
inline ScalarImage downsample(const ScalarImage& img, int factor)
{
  if (factor < 1)
    throw InvalidArgument("downsample: factor must be >= 1");
  if (factor == 1)
    return img;
  return decimate(gaussian_smooth(img, 0.5 * factor), factor);
}

struct Pyramid
{
  std::vector<ScalarImage> levels; // coarse -> fine
  std::vector<int> factors;
};

inline void validate_factors(const std::vector<int>& factors)
{
  if (factors.empty())
    throw InvalidArgument("pyramid needs at least one factor");
  for (std::size_t i = 0; i < factors.size(); ++i)
  {
    if (factors[i] < 1)
      throw InvalidArgument("pyramid factors must be >= 1");
    if (i > 0 && factors[i] >= factors[i - 1])
      throw InvalidArgument("pyramid factors must be strictly decreasing");
  }
  if (factors.back() != 1)
    throw InvalidArgument("last pyramid factor must be 1");
}

inline Pyramid build_pyramid(const ScalarImage& img, const std::vector<int>& factors)
{
  validate_factors(factors);
  Pyramid p;
  p.factors = factors;
  for (int f : factors)
    p.levels.push_back(downsample(img, f));
  return p;
}

} // namespace histreg

#endif // HISTREG_FILTERS_HPP
