#ifndef HISTREG_SAMPLING_HPP
#define HISTREG_SAMPLING_HPP

#include <algorithm>
#include <cmath>

#include "histreg/core.hpp"

namespace histreg {

/// Bilinear sample with clamp-to-edge; integer coordinates return the stored value exactly.
inline double sample_bilinear(const Raster<double>& img, double x, double y)
{
  const int w = img.width(), h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  // lerp form: constant neighborhoods reproduce their value exactly.
  const double top = img(x0, y0) + fx * (img(x1, y0) - img(x0, y0));
  const double bottom = img(x0, y1) + fx * (img(x1, y1) - img(x0, y1));
  return top + fy * (bottom - top);
}

inline Vec2 sample_bilinear(const DisplacementField& f, double x, double y)
{
  return {sample_bilinear(f.dx(), x, y), sample_bilinear(f.dy(), x, y)};
}

namespace detail {

// Slope along x of the clamped bilinear interpolant inside cell [x0, x0+1] at row coordinate y.
inline double cell_slope_x(const Raster<double>& img, int x0, double y)
{
  const int h = img.height();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int y1 = std::min(y0 + 1, h - 1);
  const double fy = y - y0;
  const double d0 = img.clamped(x0 + 1, y0) - img.clamped(x0, y0);
  const double d1 = img.clamped(x0 + 1, y1) - img.clamped(x0, y1);
  return (1.0 - fy) * d0 + fy * d1;
}

inline double cell_slope_y(const Raster<double>& img, int y0, double x)
{
  const int w = img.width();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int x1 = std::min(x0 + 1, w - 1);
  const double fx = x - x0;
  const double d0 = img.clamped(x0, y0 + 1) - img.clamped(x0, y0);
  const double d1 = img.clamped(x1, y0 + 1) - img.clamped(x1, y0);
  return (1.0 - fx) * d0 + fx * d1;
}

// Derivative along one axis: 0 outside the clamp range, the mean of the two
// one-sided slopes on a lattice line, the cell slope otherwise.
template <typename SlopeFn>
double axis_derivative(double coord, int extent, SlopeFn slope)
{
  if (coord < 0.0 || coord > static_cast<double>(extent - 1))
    return 0.0;
  const double fl = std::floor(coord);
  const int c0 = static_cast<int>(fl);
  if (coord == fl)
    return 0.5 * (slope(c0 - 1) + slope(c0));
  return slope(c0);
}

} // namespace detail

/**
 * Spatial gradient of the clamped bilinear interpolant at (x, y). On lattice
 * points this is the central difference, so for the zero field it coincides
 * with the central-difference gradient of the image itself.
 */
inline Vec2 bilinear_gradient(const Raster<double>& img, double x, double y)
{
  const double gx = detail::axis_derivative(
      x, img.width(), [&](int x0) { return detail::cell_slope_x(img, x0, y); });
  const double gy = detail::axis_derivative(
      y, img.height(), [&](int y0) { return detail::cell_slope_y(img, y0, x); });
  return {gx, gy};
}

} // namespace histreg

#endif // HISTREG_SAMPLING_HPP
