#ifndef HISTREG_METRIC_HPP
#define HISTREG_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "histreg/core.hpp"
#include "histreg/sampling.hpp"
#include "histreg/warp.hpp"

namespace histreg {

namespace detail {

template <typename T>
Raster<double> pad_clamped(const Raster<T>& src, int pad)
{
  Raster<double> out(src.width() + 2 * pad, src.height() + 2 * pad);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out(x, y) = static_cast<double>(src.clamped(x - pad, y - pad));
  return out;
}

inline Raster<double> pad_zero(const Raster<double>& src, int pad)
{
  Raster<double> out(src.width() + 2 * pad, src.height() + 2 * pad, 0.0);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x)
      out(x + pad, y + pad) = src(x, y);
  return out;
}

/**
 * Sums over every (2r+1)^2 window fully inside `src`, by running sums along
 * rows then columns. Output pixel (x, y) covers src[x..x+2r] x [y..y+2r].
 */
inline Raster<double> box_sums(const Raster<double>& src, int r)
{
  const int d = 2 * r + 1;
  const int ow = src.width() - 2 * r, oh = src.height() - 2 * r;
  Raster<double> rows(ow, src.height());
  std::vector<double> prefix(static_cast<std::size_t>(std::max(src.width(), src.height()) + 1));
  for (int y = 0; y < src.height(); ++y)
  {
    prefix[0] = 0.0;
    for (int x = 0; x < src.width(); ++x)
      prefix[x + 1] = prefix[x] + src(x, y);
    for (int x = 0; x < ow; ++x)
      rows(x, y) = prefix[x + d] - prefix[x];
  }
  Raster<double> out(ow, oh);
  for (int x = 0; x < ow; ++x)
  {
    prefix[0] = 0.0;
    for (int y = 0; y < src.height(); ++y)
      prefix[y + 1] = prefix[y] + rows(x, y);
    for (int y = 0; y < oh; ++y)
      out(x, y) = prefix[y + d] - prefix[y];
  }
  return out;
}

} // namespace detail

/// NCC window radius floor(k/2), at least 1; the same pixel radius is used at every pyramid level.
inline int ncc_radius(int kernel_size) { return std::max(1, kernel_size / 2); }

/**
 * Windowed NCC terms. `value` is the dissimilarity (negative mean local
 * correlation over guarded, masked windows). When requested, `intensity_grad`
 * holds d value / d J(p) for every pixel of the moving image, accumulated over
 * all windows that contain p.
 */
struct NccTerms
{
  double value = 0.0;
  long n_valid = 0;
  Raster<double> intensity_grad;
  Mask window_valid;
};

inline NccTerms ncc_terms(const ScalarImage& fixed, const ScalarImage& moving, const Mask& mask, int r,
                          bool with_derivative)
{
  if (!fixed.same_size(moving) || !fixed.same_size(mask))
    throw InvalidArgument("ncc: image and mask sizes differ");
  if (r < 1)
    throw InvalidArgument("ncc: window radius must be >= 1");

  const int w = fixed.width(), h = fixed.height();
  const Raster<double> fp = detail::pad_clamped(fixed, r);
  const Raster<double> mp = detail::pad_clamped(moving, r);
  Raster<double> ff(fp.width(), fp.height()), mm(fp.width(), fp.height()), fm(fp.width(), fp.height());
  for (std::size_t i = 0; i < fp.size(); ++i)
  {
    const double f = fp.data()[i], m = mp.data()[i];
    ff.data()[i] = f * f;
    mm.data()[i] = m * m;
    fm.data()[i] = f * m;
  }
  const auto sf = detail::box_sums(fp, r);
  const auto sm = detail::box_sums(mp, r);
  const auto sff = detail::box_sums(ff, r);
  const auto smm = detail::box_sums(mm, r);
  const auto sfm = detail::box_sums(fm, r);

  const double n = static_cast<double>((2 * r + 1) * (2 * r + 1));
  const double eps_var = 1e-6 * n;

  NccTerms out;
  out.window_valid = Mask(w, h, 0);
  Raster<double> ca, cb, cc;
  if (with_derivative)
  {
    ca = Raster<double>(w, h, 0.0);
    cb = Raster<double>(w, h, 0.0);
    cc = Raster<double>(w, h, 0.0);
  }

  double total = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      if (!mask(x, y))
        continue;
      const double s_ii = sff(x, y) - sf(x, y) * sf(x, y) / n;
      const double s_jj = smm(x, y) - sm(x, y) * sm(x, y) / n;
      if (!(std::min(s_ii, s_jj) > eps_var))
        continue;
      const double s_ij = sfm(x, y) - sf(x, y) * sm(x, y) / n;
      const double denom = std::sqrt(s_ii * s_jj);
      const double score = s_ij / denom;
      total += score;
      ++out.n_valid;
      out.window_valid(x, y) = 1;
      if (with_derivative)
      {
        const double a = 1.0 / denom;
        const double b = -score / s_jj;
        ca(x, y) = a;
        cb(x, y) = b;
        cc(x, y) = -(sf(x, y) / n) * a - (sm(x, y) / n) * b;
      }
    }

  if (out.n_valid > 0)
    out.value = -total / static_cast<double>(out.n_valid);
  if (!std::isfinite(out.value))
    throw NumericError("ncc: non-finite metric value");

  if (!with_derivative)
    return out;

  out.intensity_grad = Raster<double>(w, h, 0.0);
  if (out.n_valid == 0)
    return out;

  // Window centers c whose window contains padded slot q satisfy q - 2r <= c <= q.
  const auto sa = detail::box_sums(detail::pad_zero(ca, 2 * r), r);
  const auto sb = detail::box_sums(detail::pad_zero(cb, 2 * r), r);
  const auto sc = detail::box_sums(detail::pad_zero(cc, 2 * r), r);
  const double scale = -1.0 / static_cast<double>(out.n_valid);
  for (int qy = 0; qy < fp.height(); ++qy)
  {
    const int y = std::clamp(qy - r, 0, h - 1);
    for (int qx = 0; qx < fp.width(); ++qx)
    {
      const int x = std::clamp(qx - r, 0, w - 1);
      const double d = fp(qx, qy) * sa(qx, qy) + mp(qx, qy) * sb(qx, qy) + sc(qx, qy);
      out.intensity_grad(x, y) += scale * d;
    }
  }
  return out;
}

inline double ncc_value(const ScalarImage& fixed, const ScalarImage& warped_moving, const Mask& mask, int r)
{
  return ncc_terms(fixed, warped_moving, mask, r, false).value;
}

struct MetricReport
{
  double value = 0.0;
  DisplacementField gradient;
  long n_valid = 0;
};

/**
 * Dissimilarity of fixed vs moving(x + u(x)) and its derivative with respect
 * to each displacement vector u(p). The spatial factor is the gradient of the
 * bilinear interpolant of `moving` at the sample point. Zero where the mask is
 * off or the pixel's own window fails the variance guard.
 */
inline MetricReport ncc_gradient(const ScalarImage& fixed, const ScalarImage& moving,
                                 const DisplacementField& field, const Mask& mask, int r)
{
  if (!fixed.same_size(moving) || !field.same_size(fixed) || !fixed.same_size(mask))
    throw InvalidArgument("ncc_gradient: raster sizes differ");
  const ScalarImage warped = warp_image(moving, field);
  NccTerms terms = ncc_terms(fixed, warped, mask, r, true);

  MetricReport rep;
  rep.value = terms.value;
  rep.n_valid = terms.n_valid;
  rep.gradient = DisplacementField(fixed.width(), fixed.height());
  for (int y = 0; y < fixed.height(); ++y)
    for (int x = 0; x < fixed.width(); ++x)
    {
      if (!mask(x, y) || !terms.window_valid(x, y))
        continue;
      const double d = terms.intensity_grad(x, y);
      if (d == 0.0)
        continue;
      const Vec2 g = bilinear_gradient(moving, x + field.dx()(x, y), y + field.dy()(x, y));
      rep.gradient.set(x, y, {d * g.x, d * g.y});
    }
  return rep;
}

inline Mask full_mask(int width, int height) { return Mask(width, height, 1); }

} // namespace histreg

#endif // HISTREG_METRIC_HPP
