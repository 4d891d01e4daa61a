#ifndef HISTREG_PREPROCESS_HPP
#define HISTREG_PREPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>

#include "histreg/core.hpp"
#include "histreg/filters.hpp"
#include "histreg/stains.hpp"

namespace histreg {

/// Either kind of decoded input slide.
using InputImage = std::variant<RgbImage, ScalarImage>;

struct PadOffset
{
  int left = 0;
  int top = 0;

  friend bool operator==(const PadOffset&, const PadOffset&) = default;
};

struct PreprocessedPair
{
  ScalarImage fixed;
  ScalarImage moving;
  Mask mask;
  int kernel_size = 1;
  PadOffset fixed_offset;
  PadOffset moving_offset;
  int resample_factor = 1;

  int width() const { return fixed.width(); }
  int height() const { return fixed.height(); }

  /// Input-image pixel coordinates to working-image coordinates.
  Vec2 fixed_to_working(Vec2 p) const { return to_working(p, fixed_offset); }
  Vec2 moving_to_working(Vec2 p) const { return to_working(p, moving_offset); }
  Vec2 working_to_moving(Vec2 p) const
  {
    return {(p.x - moving_offset.left) * resample_factor, (p.y - moving_offset.top) * resample_factor};
  }

private:
  Vec2 to_working(Vec2 p, PadOffset o) const
  {
    return {p.x / resample_factor + o.left, p.y / resample_factor + o.top};
  }
};

/// Inverted luminance: dark tissue on a white slide becomes bright on a dark background.
inline ScalarImage to_grayscale(const RgbImage& rgb)
{
  ScalarImage out(rgb.width(), rgb.height());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
    {
      const std::uint8_t* p = rgb.pixel(x, y);
      const double lum = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
      out(x, y) = 1.0 - lum;
    }
  return out;
}

/// Same inversion for sources that are already single-channel.
inline ScalarImage invert_intensity(const ScalarImage& img)
{
  ScalarImage out = img;
  for (double& v : out.data())
    v = 1.0 - v;
  return out;
}

/// Kernel size from the smaller image dimension, floor(min(w, h) / S), at least 1.
inline int compute_kernel_size(const ScalarImage& fixed, double scale)
{
  if (!(scale >= 1.0))
    throw InvalidArgument("ncc scale must be >= 1");
  const int size = std::min(fixed.width(), fixed.height());
  return std::max(1, static_cast<int>(std::floor(size / scale)));
}

inline double corner_mean(const ScalarImage& img)
{
  const int w = img.width() - 1, h = img.height() - 1;
  return 0.25 * (img(0, 0) + img(w, 0) + img(0, h) + img(w, h));
}

namespace detail {

inline ScalarImage pad_constant(const ScalarImage& img, int left, int top, int right, int bottom, double fill)
{
  ScalarImage out(img.width() + left + right, img.height() + top + bottom, fill);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(x + left, y + top) = img(x, y);
  return out;
}

} // namespace detail

/// 1 on pixels at distance >= band from every edge.
inline Mask boundary_mask(int width, int height, int band)
{
  Mask m(width, height, 0);
  for (int y = band; y < height - band; ++y)
    for (int x = band; x < width - band; ++x)
      m(x, y) = 1;
  return m;
}

/**
 * Equalize sizes by symmetric padding (extra pixel right/bottom), add a 4k
 * margin on every side, fill with each image's corner mean, and build the
 * boundary mask of band width k.
 */
inline PreprocessedPair pad_and_center(const ScalarImage& fixed, const ScalarImage& moving, int k)
{
  if (k < 1)
    throw InvalidArgument("kernel size must be >= 1");
  const int w = std::max(fixed.width(), moving.width());
  const int h = std::max(fixed.height(), moving.height());
  const int margin = 4 * k;

  auto pad = [&](const ScalarImage& img, PadOffset& off) {
    const int dx = w - img.width(), dy = h - img.height();
    const int left = dx / 2, top = dy / 2;
    off = {left + margin, top + margin};
    return detail::pad_constant(img, left + margin, top + margin, dx - left + margin, dy - top + margin,
                                corner_mean(img));
  };

  PreprocessedPair pair;
  pair.fixed = pad(fixed, pair.fixed_offset);
  pair.moving = pad(moving, pair.moving_offset);
  pair.kernel_size = k;
  pair.mask = boundary_mask(pair.fixed.width(), pair.fixed.height(), k);
  return pair;
}

struct DeconvFlags
{
  bool fixed = false;
  bool moving = false;
};

/// Stain removal configuration; only consulted when a flag is set.
struct StainRemoval
{
  std::optional<StainMatrix> matrix;
  int channel = 1;
};

inline ScalarImage working_intensity(const InputImage& input, bool deconv, const StainRemoval& stains)
{
  if (const auto* rgb = std::get_if<RgbImage>(&input))
  {
    if (deconv)
    {
      if (!stains.matrix)
        throw InvalidArgument("stain removal requested without a stain matrix");
      return to_grayscale(remove_stain(*rgb, *stains.matrix, stains.channel));
    }
    return to_grayscale(*rgb);
  }
  if (deconv)
    throw InvalidArgument("stain removal needs a color image");
  return invert_intensity(std::get<ScalarImage>(input));
}

/// Stain removal, grayscale, anti-aliased resampling, kernel size, padding.
inline PreprocessedPair prepare_pair(const InputImage& fixed, const InputImage& moving, const RegistrationParams& params,
                                     DeconvFlags deconv = {}, const StainRemoval& stains = {})
{
  const ScalarImage f = downsample(working_intensity(fixed, deconv.fixed, stains), params.resample_factor);
  const ScalarImage m = downsample(working_intensity(moving, deconv.moving, stains), params.resample_factor);
  const int k = compute_kernel_size(f, params.ncc_scale);
  PreprocessedPair pair = pad_and_center(f, m, k);
  pair.resample_factor = params.resample_factor;
  return pair;
}

} // namespace histreg

#endif // HISTREG_PREPROCESS_HPP
