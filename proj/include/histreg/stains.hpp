#ifndef HISTREG_STAINS_HPP
#define HISTREG_STAINS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "histreg/core.hpp"

namespace histreg {

using Rgb3 = std::array<double, 3>;
using Mat3 = std::array<Rgb3, 3>;

/**
 * Optical-density stain vectors, one unit-length row per stain, columns in
 * R, G, B order.
 */
class StainMatrix
{
public:
  explicit StainMatrix(const Mat3& rows)
    : m_rows(rows)
  {
    for (const auto& r : m_rows)
    {
      const double len = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
      if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-6)
        throw InvalidArgument("stain vectors must have unit length");
    }
    if (!(std::abs(determinant()) > 1e-6))
      throw NumericError("stain matrix is singular");
  }

  const Mat3& rows() const { return m_rows; }

  double determinant() const
  {
    const auto& m = m_rows;
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }

  /// OD = sum_s c_s * row_s.
  Rgb3 mix(const Rgb3& c) const
  {
    Rgb3 od{};
    for (int s = 0; s < 3; ++s)
      for (int ch = 0; ch < 3; ++ch)
        od[ch] += c[s] * m_rows[s][ch];
    return od;
  }

  /// Concentrations c with mix(c) == od (Cramer's rule on the transposed system).
  Rgb3 unmix(const Rgb3& od) const
  {
    const auto& m = m_rows;
    const double det = determinant();
    // Columns of M^T are the stain rows; replace column s by od.
    auto det3 = [](const Rgb3& c0, const Rgb3& c1, const Rgb3& c2) {
      return c0[0] * (c1[1] * c2[2] - c1[2] * c2[1]) - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1]) +
             c2[0] * (c0[1] * c1[2] - c0[2] * c1[1]);
    };
    return {det3(od, m[1], m[2]) / det, det3(m[0], od, m[2]) / det, det3(m[0], m[1], od) / det};
  }

private:
  Mat3 m_rows;
};

/// Nine whitespace-separated decimals, row-major.
inline StainMatrix read_stain_matrix(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open stain matrix file: " + path);
  Mat3 m{};
  for (auto& row : m)
    for (double& v : row)
      if (!(in >> v))
        throw FormatError("stain matrix file needs 9 numbers: " + path);
  double extra;
  if (in >> extra)
    throw FormatError("stain matrix file has more than 9 numbers: " + path);
  return StainMatrix(m);
}

inline double optical_density(std::uint8_t v)
{
  return -std::log10(std::max(static_cast<double>(v), 1.0) / 255.0);
}

inline Raster<Rgb3> od_transform(const RgbImage& rgb)
{
  Raster<Rgb3> out(rgb.width(), rgb.height());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
    {
      const std::uint8_t* p = rgb.pixel(x, y);
      out(x, y) = {optical_density(p[0]), optical_density(p[1]), optical_density(p[2])};
    }
  return out;
}

inline std::uint8_t intensity_from_od(double od)
{
  const double v = std::round(255.0 * std::pow(10.0, -od));
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

inline Raster<Rgb3> unmix_stains(const RgbImage& rgb, const StainMatrix& m)
{
  Raster<Rgb3> c = od_transform(rgb);
  for (auto& px : c.data())
    px = m.unmix(px);
  return c;
}

inline RgbImage remix_stains(const Raster<Rgb3>& conc, const StainMatrix& m)
{
  RgbImage out(conc.width(), conc.height());
  for (int y = 0; y < conc.height(); ++y)
    for (int x = 0; x < conc.width(); ++x)
    {
      const Rgb3 od = m.mix(conc(x, y));
      std::uint8_t* p = out.pixel(x, y);
      for (int ch = 0; ch < 3; ++ch)
        p[ch] = intensity_from_od(od[ch]);
    }
  return out;
}

/**
 * Color deconvolution with one stain zeroed. Negative concentrations are
 * clamped to zero before reconstruction.
 */
inline RgbImage remove_stain(const RgbImage& rgb, const StainMatrix& m, int channel)
{
  if (channel < 0 || channel > 2)
    throw InvalidArgument("stain channel index must be 0, 1 or 2");
  Raster<Rgb3> c = unmix_stains(rgb, m);
  for (auto& px : c.data())
  {
    for (double& v : px)
      v = std::max(v, 0.0);
    px[channel] = 0.0;
  }
  return remix_stains(c, m);
}

} // namespace histreg

#endif // HISTREG_STAINS_HPP
