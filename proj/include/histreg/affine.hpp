#ifndef HISTREG_AFFINE_HPP
#define HISTREG_AFFINE_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "histreg/core.hpp"
#include "histreg/filters.hpp"
#include "histreg/lbfgs.hpp"
#include "histreg/metric.hpp"
#include "histreg/preprocess.hpp"
#include "histreg/sampling.hpp"
#include "histreg/warp.hpp"

namespace histreg {

struct AffineResult
{
  AffineTransform2D transform;
  double final_value = 0.0;
  long n_evals = 0;
  double init_value = 0.0;
};

/// One resolution level of a preprocessed pair.
struct PairLevel
{
  ScalarImage fixed;
  ScalarImage moving;
  Mask mask;
  int factor = 1;
  int radius = 1;
};

inline std::vector<PairLevel> build_pair_levels(const ScalarImage& fixed, const ScalarImage& moving, const Mask& mask,
                                                int kernel_size, const std::vector<int>& factors)
{
  const Pyramid pf = build_pyramid(fixed, factors);
  const Pyramid pm = build_pyramid(moving, factors);
  std::vector<PairLevel> levels;
  for (std::size_t i = 0; i < factors.size(); ++i)
    levels.push_back({pf.levels[i], pm.levels[i], decimate(mask, factors[i]), factors[i],
                      ncc_radius(kernel_size)});
  return levels;
}

/// Express a working-resolution transform on a level sampled every `factor` pixels.
inline AffineTransform2D affine_to_level(AffineTransform2D a, int factor)
{
  const double s = 1.0 / factor;
  a.tx *= s;
  a.ty *= s;
  a.cx *= s;
  a.cy *= s;
  return a;
}

inline AffineTransform2D affine_from_level(AffineTransform2D a, int factor)
{
  a.tx *= factor;
  a.ty *= factor;
  a.cx *= factor;
  a.cy *= factor;
  return a;
}

inline Vec2 image_center(int width, int height) { return {0.5 * (width - 1), 0.5 * (height - 1)}; }

/**
 * NCC dissimilarity of fixed vs moving(A x) as a function of the six affine
 * parameters (a11, a12, a21, a22, tx, ty); the center stays fixed.
 */
class AffineObjective
{
public:
  using Gradient = std::array<double, 6>;

  AffineObjective(const ScalarImage& fixed, const ScalarImage& moving, const Mask& mask, int radius)
    : m_fixed(fixed), m_moving(moving), m_mask(mask), m_radius(radius)
  {
  }

  double value(const AffineTransform2D& a) const
  {
    return ncc_value(m_fixed, warp_image_affine(m_moving, a), m_mask, m_radius);
  }

  double value_and_gradient(const AffineTransform2D& a, Gradient& grad) const
  {
    const NccTerms terms = ncc_terms(m_fixed, warp_image_affine(m_moving, a), m_mask, m_radius, true);
    grad.fill(0.0);
    for (int y = 0; y < m_fixed.height(); ++y)
      for (int x = 0; x < m_fixed.width(); ++x)
      {
        const double d = terms.intensity_grad(x, y);
        if (d == 0.0)
          continue;
        const Vec2 q = a.apply({static_cast<double>(x), static_cast<double>(y)});
        const Vec2 g = bilinear_gradient(m_moving, q.x, q.y);
        const double rx = x - a.cx, ry = y - a.cy;
        const double gx = d * g.x, gy = d * g.y;
        grad[0] += gx * rx;
        grad[1] += gx * ry;
        grad[2] += gy * rx;
        grad[3] += gy * ry;
        grad[4] += gx;
        grad[5] += gy;
      }
    return terms.value;
  }

private:
  const ScalarImage& m_fixed;
  const ScalarImage& m_moving;
  const Mask& m_mask;
  int m_radius;
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; independent of the standard library's distributions.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace detail

/**
 * Seeded random search over rigid transforms at the coarsest pyramid level.
 * Candidate 0 is the identity; the lowest-index minimum wins.
 */
inline AffineTransform2D brute_force_init(const PreprocessedPair& pair, const RegistrationParams& params)
{
  params.validate();
  const int factor = params.pyramid_factors.front();
  const ScalarImage fixed = downsample(pair.fixed, factor);
  const ScalarImage moving = downsample(pair.moving, factor);
  const Mask mask = decimate(pair.mask, factor);
  const int r = ncc_radius(pair.kernel_size);

  const Vec2 c = image_center(pair.width(), pair.height());
  const double cx = c.x / factor, cy = c.y / factor;
  const double range_x = 0.25 * fixed.width(), range_y = 0.25 * fixed.height();

  std::mt19937_64 rng(params.seed);
  AffineTransform2D best = AffineTransform2D::identity(cx, cy);
  double best_value = ncc_value(fixed, moving, mask, r);
  for (int i = 1; i <= params.n_candidates; ++i)
  {
    const double theta = 2.0 * std::numbers::pi * detail::uniform01(rng);
    const double tx = (2.0 * detail::uniform01(rng) - 1.0) * range_x;
    const double ty = (2.0 * detail::uniform01(rng) - 1.0) * range_y;
    const AffineTransform2D cand = AffineTransform2D::rigid(theta, tx, ty, cx, cy);
    const double v = ncc_value(fixed, warp_image_affine(moving, cand), mask, r);
    if (v < best_value)
    {
      best_value = v;
      best = cand;
    }
  }
  return affine_from_level(best, factor);
}

namespace detail {

// Optimization variables: matrix entries scaled by a length so all six move pixels.
inline std::vector<double> pack(const AffineTransform2D& a, double len)
{
  return {a.a11 * len, a.a12 * len, a.a21 * len, a.a22 * len, a.tx, a.ty};
}

inline AffineTransform2D unpack(const std::vector<double>& z, double len, double cx, double cy)
{
  return {z[0] / len, z[1] / len, z[2] / len, z[3] / len, z[4], z[5], cx, cy};
}

} // namespace detail

/**
 * LBFGS refinement of all six affine parameters, coarse to fine, warm-started
 * per level. Never returns a transform worse than A0 at working resolution.
 */
inline AffineResult lbfgs_refine(const PreprocessedPair& pair, const AffineTransform2D& a0,
                                 const RegistrationParams& params)
{
  params.validate();
  a0.validate();
  const auto levels =
      build_pair_levels(pair.fixed, pair.moving, pair.mask, pair.kernel_size, params.pyramid_factors);

  AffineResult res;
  {
    const PairLevel& fine = levels.back();
    res.init_value = AffineObjective(fine.fixed, fine.moving, fine.mask, fine.radius).value(a0);
    ++res.n_evals;
  }

  LbfgsOptions opt;
  opt.memory = 10;
  opt.max_iterations = 100;
  opt.grad_tol = 1e-6;
  opt.c1 = 1e-4;
  opt.c2 = 0.9;

  AffineTransform2D current = a0;
  double current_value = res.init_value;
  for (const PairLevel& lv : levels)
  {
    const AffineObjective obj(lv.fixed, lv.moving, lv.mask, lv.radius);
    const AffineTransform2D start = affine_to_level(current, lv.factor);
    const double len = 0.5 * std::max(lv.fixed.width(), lv.fixed.height());
    auto fn = [&](const std::vector<double>& z, std::vector<double>& g) {
      AffineObjective::Gradient ga;
      const double v = obj.value_and_gradient(detail::unpack(z, len, start.cx, start.cy), ga);
      for (int j = 0; j < 4; ++j)
        g[j] = ga[j] / len;
      g[4] = ga[4];
      g[5] = ga[5];
      return v;
    };
    const LbfgsResult lr = lbfgs_minimize(fn, detail::pack(start, len), opt);
    res.n_evals += lr.evaluations;
    if (!std::isfinite(lr.value))
      throw NumericError("affine refinement produced a non-finite objective");
    if (lr.first_linesearch_failed)
      continue;
    current = affine_from_level(detail::unpack(lr.x, len, start.cx, start.cy), lv.factor);
    // Keep the working-resolution center bit-exact across levels.
    current.cx = a0.cx;
    current.cy = a0.cy;
  }

  const PairLevel& fine = levels.back();
  current_value = AffineObjective(fine.fixed, fine.moving, fine.mask, fine.radius).value(current);
  ++res.n_evals;
  if (!std::isfinite(current_value))
    throw NumericError("affine refinement produced a non-finite objective");
  if (current_value <= res.init_value && std::abs(current.det()) > 1e-12)
  {
    res.transform = current;
    res.final_value = current_value;
  }
  else
  {
    res.transform = a0;
    res.final_value = res.init_value;
  }
  return res;
}

/// Brute-force initialization followed by LBFGS refinement.
inline AffineResult register_affine(const PreprocessedPair& pair, const RegistrationParams& params)
{
  return lbfgs_refine(pair, brute_force_init(pair, params), params);
}

} // namespace histreg

#endif // HISTREG_AFFINE_HPP
