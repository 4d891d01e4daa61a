#ifndef HISTREG_WARP_HPP
#define HISTREG_WARP_HPP

#include <algorithm>
#include <limits>

#include "histreg/core.hpp"
#include "histreg/sampling.hpp"

namespace histreg {

/// Affine + deformable pair; fixed-frame x maps to moving-frame A(x + u(x)).
struct TotalTransform
{
  AffineTransform2D affine;
  DisplacementField field;

  Vec2 apply(Vec2 p) const
  {
    const Vec2 u = sample_bilinear(field, p.x, p.y);
    return affine.apply(p + u);
  }
};

// `fill` is accepted for interface stability; out-of-range samples use clamp-to-edge.
inline ScalarImage warp_image(const ScalarImage& moving, const DisplacementField& field, double fill = 0.0)
{
  (void)fill;
  if (!field.same_size(moving))
    throw InvalidArgument("warp_image: field and image sizes differ");
  ScalarImage out(moving.width(), moving.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out(x, y) = sample_bilinear(moving, x + field.dx()(x, y), y + field.dy()(x, y));
  return out;
}

inline ScalarImage warp_image_affine(const ScalarImage& moving, const AffineTransform2D& a, double fill = 0.0)
{
  (void)fill;
  ScalarImage out(moving.width(), moving.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
    {
      const Vec2 q = a.apply({static_cast<double>(x), static_cast<double>(y)});
      out(x, y) = sample_bilinear(moving, q.x, q.y);
    }
  return out;
}

/**
 * Displacement of x -> outer(inner(x)): u(x) = v(x) + w(x + v(x)) with
 * v = inner and w = outer sampled bilinearly (clamp).
 */
inline DisplacementField compose(const DisplacementField& outer, const DisplacementField& inner)
{
  if (!outer.same_size(inner))
    throw InvalidArgument("compose: field sizes differ");
  DisplacementField out(inner.width(), inner.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
    {
      const Vec2 v = inner.at(x, y);
      const Vec2 w = sample_bilinear(outer, x + v.x, y + v.y);
      out.set(x, y, v + w);
    }
  return out;
}

inline LandmarkSet map_landmarks(const LandmarkSet& points, const TotalTransform& t)
{
  LandmarkSet out;
  out.points.reserve(points.size());
  for (const Vec2& p : points.points)
    out.points.push_back(t.apply(p));
  return out;
}

namespace detail {

// Central difference in the interior, one-sided at the borders.
inline double diff_x(const Raster<double>& r, int x, int y)
{
  const int w = r.width();
  if (w == 1)
    return 0.0;
  if (x == 0)
    return r(1, y) - r(0, y);
  if (x == w - 1)
    return r(w - 1, y) - r(w - 2, y);
  return 0.5 * (r(x + 1, y) - r(x - 1, y));
}

inline double diff_y(const Raster<double>& r, int x, int y)
{
  const int h = r.height();
  if (h == 1)
    return 0.0;
  if (y == 0)
    return r(x, 1) - r(x, 0);
  if (y == h - 1)
    return r(x, h - 1) - r(x, h - 2);
  return 0.5 * (r(x, y + 1) - r(x, y - 1));
}

} // namespace detail

/// Determinant of the Jacobian of x -> x + u(x).
inline ScalarImage jacobian_det(const DisplacementField& field)
{
  ScalarImage out(field.width(), field.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
    {
      const double uxx = detail::diff_x(field.dx(), x, y);
      const double uxy = detail::diff_y(field.dx(), x, y);
      const double uyx = detail::diff_x(field.dy(), x, y);
      const double uyy = detail::diff_y(field.dy(), x, y);
      out(x, y) = (1.0 + uxx) * (1.0 + uyy) - uxy * uyx;
    }
  return out;
}

inline double min_value(const ScalarImage& img)
{
  double m = std::numeric_limits<double>::infinity();
  for (double v : img.data())
    m = std::min(m, v);
  return m;
}

} // namespace histreg

#endif // HISTREG_WARP_HPP
