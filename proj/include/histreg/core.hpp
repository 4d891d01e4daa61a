#ifndef HISTREG_CORE_HPP
#define HISTREG_CORE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace histreg {

// Error categories map onto CLI exit codes: usage 1, I/O and format 2, numeric 3.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class FormatError : public IoError
{
public:
  using IoError::IoError;
};

class NumericError : public Error
{
public:
  using Error::Error;
};

/** Row-major 2D raster. x is the column index, y the row index. */
template <typename T>
class Raster
{
public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, T fill = T{})
    : m_width(width), m_height(height)
  {
    if (width < 1 || height < 1)
      throw InvalidArgument("raster dimensions must be positive");
    m_data.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Raster(int width, int height, std::vector<T> data)
    : m_width(width), m_height(height), m_data(std::move(data))
  {
    if (width < 1 || height < 1)
      throw InvalidArgument("raster dimensions must be positive");
    if (m_data.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InvalidArgument("raster buffer length does not match width x height");
  }

  int width() const { return m_width; }
  int height() const { return m_height; }
  std::size_t size() const { return m_data.size(); }
  bool empty() const { return m_data.empty(); }

  T& operator()(int x, int y) { return m_data[index(x, y)]; }
  const T& operator()(int x, int y) const { return m_data[index(x, y)]; }

  /// Edge-replicating access.
  const T& clamped(int x, int y) const
  {
    x = x < 0 ? 0 : (x >= m_width ? m_width - 1 : x);
    y = y < 0 ? 0 : (y >= m_height ? m_height - 1 : y);
    return m_data[index(x, y)];
  }

  std::span<T> row(int y) { return {m_data.data() + index(0, y), static_cast<std::size_t>(m_width)}; }
  std::span<const T> row(int y) const
  {
    return {m_data.data() + index(0, y), static_cast<std::size_t>(m_width)};
  }

  std::span<T> data() { return m_data; }
  std::span<const T> data() const { return m_data; }
  const std::vector<T>& values() const { return m_data; }

  bool same_size(const Raster& other) const
  {
    return m_width == other.m_width && m_height == other.m_height;
  }

  template <typename U>
  bool same_size(const Raster<U>& other) const
  {
    return m_width == other.width() && m_height == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

private:
  std::size_t index(int x, int y) const
  {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(m_width) + static_cast<std::size_t>(x);
  }

  int m_width = 0;
  int m_height = 0;
  std::vector<T> m_data;
};

/// Single-channel intensity image; values live in [0,1] after preprocessing.
using ScalarImage = Raster<double>;

/// Binary mask, 1 = pixel participates.
using Mask = Raster<std::uint8_t>;

/** Interleaved 8-bit RGB raster. */
class RgbImage
{
public:
  RgbImage() = default;

  RgbImage(int width, int height)
    : m_width(width), m_height(height)
  {
    if (width < 1 || height < 1)
      throw InvalidArgument("image dimensions must be positive");
    m_data.assign(3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  }

  RgbImage(int width, int height, std::vector<std::uint8_t> data)
    : m_width(width), m_height(height), m_data(std::move(data))
  {
    if (width < 1 || height < 1)
      throw InvalidArgument("image dimensions must be positive");
    if (m_data.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InvalidArgument("rgb buffer length does not match 3 x width x height");
  }

  int width() const { return m_width; }
  int height() const { return m_height; }

  std::uint8_t* pixel(int x, int y) { return m_data.data() + offset(x, y); }
  const std::uint8_t* pixel(int x, int y) const { return m_data.data() + offset(x, y); }

  std::span<const std::uint8_t> data() const { return m_data; }
  std::span<std::uint8_t> data() { return m_data; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
  std::size_t offset(int x, int y) const
  {
    return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(m_width) + static_cast<std::size_t>(x));
  }

  int m_width = 0;
  int m_height = 0;
  std::vector<std::uint8_t> m_data;
};

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

/**
 * Per-pixel displacement u(x) in pixel units. The represented map is
 * x -> x + u(x), so the zero field is the identity.
 */
class DisplacementField
{
public:
  DisplacementField() = default;

  DisplacementField(int width, int height)
    : m_dx(width, height, 0.0), m_dy(width, height, 0.0)
  {
  }

  DisplacementField(Raster<double> dx, Raster<double> dy)
    : m_dx(std::move(dx)), m_dy(std::move(dy))
  {
    if (!m_dx.same_size(m_dy))
      throw InvalidArgument("displacement components differ in size");
    for (std::size_t i = 0; i < m_dx.size(); ++i)
      if (!std::isfinite(m_dx.data()[i]) || !std::isfinite(m_dy.data()[i]))
        throw InvalidArgument("displacement field contains non-finite values");
  }

  int width() const { return m_dx.width(); }
  int height() const { return m_dx.height(); }

  Raster<double>& dx() { return m_dx; }
  Raster<double>& dy() { return m_dy; }
  const Raster<double>& dx() const { return m_dx; }
  const Raster<double>& dy() const { return m_dy; }

  Vec2 at(int x, int y) const { return {m_dx(x, y), m_dy(x, y)}; }
  void set(int x, int y, Vec2 v)
  {
    m_dx(x, y) = v.x;
    m_dy(x, y) = v.y;
  }

  bool same_size(const DisplacementField& other) const { return m_dx.same_size(other.m_dx); }

  template <typename U>
  bool same_size(const Raster<U>& r) const
  {
    return m_dx.same_size(r);
  }

  friend bool operator==(const DisplacementField&, const DisplacementField&) = default;

private:
  Raster<double> m_dx;
  Raster<double> m_dy;
};

/**
 * Planar affine T(x) = a (x - c) + c + t.
 *
 * The matrix part and center are kept separate from the translation so that
 * rotation about the image center does not couple into t.
 */
struct AffineTransform2D
{
  double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;
  double cx = 0.0, cy = 0.0;

  static AffineTransform2D identity(double cx = 0.0, double cy = 0.0)
  {
    AffineTransform2D a;
    a.cx = cx;
    a.cy = cy;
    return a;
  }

  /// Rigid transform: rotation by theta (radians) about c, then translation t.
  static AffineTransform2D rigid(double theta, double tx, double ty, double cx, double cy)
  {
    const double c = std::cos(theta), s = std::sin(theta);
    AffineTransform2D a{c, -s, s, c, tx, ty, cx, cy};
    a.validate();
    return a;
  }

  double det() const { return a11 * a22 - a12 * a21; }

  void validate() const
  {
    for (double v : {a11, a12, a21, a22, tx, ty, cx, cy})
      if (!std::isfinite(v))
        throw InvalidArgument("affine transform has non-finite entries");
    if (std::abs(det()) <= 1e-12)
      throw InvalidArgument("affine transform is singular");
  }

  Vec2 apply(Vec2 p) const
  {
    const double rx = p.x - cx, ry = p.y - cy;
    return {a11 * rx + a12 * ry + cx + tx, a21 * rx + a22 * ry + cy + ty};
  }

  friend bool operator==(const AffineTransform2D&, const AffineTransform2D&) = default;
};

/// Ordered 2D points; the index is the pairing key between fixed and moving sets.
struct LandmarkSet
{
  std::vector<Vec2> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

struct RegistrationParams
{
  double sigma_s = 6.0;
  double sigma_t = 5.0;
  std::vector<int> iters_per_level{100, 50, 10};
  double ncc_scale = 25.0;
  double epsilon_max = 1.0;
  std::uint64_t seed = 42;
  int n_candidates = 5000;
  std::vector<int> pyramid_factors{4, 2, 1};
  int resample_factor = 25;

  void validate() const
  {
    if (!(sigma_s >= 0.0) || !(sigma_t >= 0.0))
      throw InvalidArgument("smoothing sigmas must be non-negative");
    if (pyramid_factors.empty())
      throw InvalidArgument("pyramid needs at least one level");
    if (iters_per_level.size() != pyramid_factors.size())
      throw InvalidArgument("iterations per level must match the number of pyramid levels");
    for (std::size_t i = 0; i < pyramid_factors.size(); ++i)
    {
      if (pyramid_factors[i] < 1)
        throw InvalidArgument("pyramid factors must be >= 1");
      if (i > 0 && pyramid_factors[i] >= pyramid_factors[i - 1])
        throw InvalidArgument("pyramid factors must be strictly decreasing");
    }
    if (pyramid_factors.back() != 1)
      throw InvalidArgument("last pyramid factor must be 1");
    for (int n : iters_per_level)
      if (n < 0)
        throw InvalidArgument("iteration counts must be non-negative");
    if (!(ncc_scale >= 1.0))
      throw InvalidArgument("ncc scale must be >= 1");
    if (resample_factor < 1)
      throw InvalidArgument("resample factor must be >= 1");
    if (!(epsilon_max > 0.0))
      throw InvalidArgument("epsilon_max must be positive");
    if (n_candidates < 1)
      throw InvalidArgument("need at least one brute-force candidate");
  }
};

inline RegistrationParams default_params() { return RegistrationParams{}; }

} // namespace histreg

#endif // HISTREG_CORE_HPP
