#ifndef HISTREG_DIFFEO_HPP
#define HISTREG_DIFFEO_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "histreg/core.hpp"
#include "histreg/filters.hpp"
#include "histreg/metric.hpp"
#include "histreg/sampling.hpp"
#include "histreg/warp.hpp"

namespace histreg {

struct DiffeoResult
{
  DisplacementField field;
  std::vector<double> per_level_values;
  double min_jacobian = 1.0;
};

/// Bilinear transport of a coarse field onto a finer grid, values scaled by `ratio`.
inline DisplacementField upsample_field(const DisplacementField& coarse, int width, int height, double ratio)
{
  DisplacementField out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
    {
      const Vec2 v = sample_bilinear(coarse, x / ratio, y / ratio);
      out.set(x, y, ratio * v);
    }
  return out;
}

/// Point-sampled field on a level `factor` times coarser, in that level's pixels.
inline DisplacementField downsample_field(const DisplacementField& field, int factor)
{
  if (factor == 1)
    return field;
  Raster<double> dx = decimate(field.dx(), factor), dy = decimate(field.dy(), factor);
  for (double& v : dx.data())
    v /= factor;
  for (double& v : dy.data())
    v /= factor;
  return DisplacementField(std::move(dx), std::move(dy));
}

inline double max_magnitude(const DisplacementField& f)
{
  double m = 0.0;
  for (std::size_t i = 0; i < f.dx().size(); ++i)
    m = std::max(m, std::hypot(f.dx().data()[i], f.dy().data()[i]));
  return m;
}

/// Per-level smoothing width: sigma / factor, floored at 0.25 px unless smoothing is off.
inline double level_sigma(double sigma, int factor)
{
  if (sigma == 0.0)
    return 0.0;
  return std::max(0.25, sigma / factor);
}

struct GreedyStep
{
  DisplacementField phi;  // updated total field
  DisplacementField psi;  // scaled, smoothed update
  double value = 0.0;     // dissimilarity before the update
  bool skipped = false;   // zero descent direction
};

/**
 * One update: psi = eps * G_s * (-grad), rescaled so its largest vector has
 * length eps_max; phi <- G_t * (phi o psi).
 */
inline GreedyStep greedy_step(const ScalarImage& fixed, const ScalarImage& moving, const DisplacementField& phi,
                              const Mask& mask, int radius, double sigma_s, double sigma_t, double eps_max)
{
  const MetricReport rep = ncc_gradient(fixed, moving, phi, mask, radius);
  GreedyStep step;
  step.value = rep.value;

  DisplacementField descent = rep.gradient;
  for (double& v : descent.dx().data())
    v = -v;
  for (double& v : descent.dy().data())
    v = -v;
  DisplacementField s = smooth_field(descent, sigma_s);

  const double mag = max_magnitude(s);
  if (mag == 0.0)
  {
    step.phi = phi;
    step.psi = DisplacementField(phi.width(), phi.height());
    step.skipped = true;
    return step;
  }
  const double eps = eps_max / mag;
  for (double& v : s.dx().data())
    v *= eps;
  for (double& v : s.dy().data())
    v *= eps;
  step.phi = smooth_field(compose(phi, s), sigma_t);
  step.psi = std::move(s);
  for (double v : step.phi.dx().data())
    if (!std::isfinite(v))
      throw NumericError("greedy update produced a non-finite field");
  for (double v : step.phi.dy().data())
    if (!std::isfinite(v))
      throw NumericError("greedy update produced a non-finite field");
  return step;
}

/**
 * Greedy diffeomorphic registration of `moving` onto `fixed` over the
 * pyramid in `params`. `initial`, if given, is a working-resolution field the
 * coarsest level starts from (zero field otherwise).
 */
inline DiffeoResult greedy_register(const ScalarImage& fixed, const ScalarImage& moving,
                                    const RegistrationParams& params, int kernel_size,
                                    const std::optional<DisplacementField>& initial = std::nullopt)
{
  params.validate();
  if (!fixed.same_size(moving))
    throw InvalidArgument("greedy_register: fixed and moving sizes differ");
  if (initial && !initial->same_size(fixed))
    throw InvalidArgument("greedy_register: initial field size differs from the images");

  const Pyramid pf = build_pyramid(fixed, params.pyramid_factors);
  const Pyramid pm = build_pyramid(moving, params.pyramid_factors);

  DiffeoResult res;
  DisplacementField phi;
  int prev_factor = 0;
  for (std::size_t lv = 0; lv < pf.levels.size(); ++lv)
  {
    const int factor = params.pyramid_factors[lv];
    const ScalarImage& f = pf.levels[lv];
    const ScalarImage& m = pm.levels[lv];
    if (lv == 0)
      phi = initial ? downsample_field(*initial, factor) : DisplacementField(f.width(), f.height());
    else
      phi = upsample_field(phi, f.width(), f.height(), static_cast<double>(prev_factor) / factor);
    prev_factor = factor;

    const Mask mask = full_mask(f.width(), f.height());
    const int r = ncc_radius(kernel_size);
    const double ss = level_sigma(params.sigma_s, factor);
    const double st = level_sigma(params.sigma_t, factor);
    for (int it = 0; it < params.iters_per_level[lv]; ++it)
    {
      GreedyStep step = greedy_step(f, m, phi, mask, r, ss, st, params.epsilon_max);
      if (!step.skipped)
        phi = std::move(step.phi);
    }
    res.per_level_values.push_back(ncc_value(f, warp_image(m, phi), mask, r));
  }
  res.min_jacobian = min_value(jacobian_det(phi));
  res.field = std::move(phi);
  return res;
}

} // namespace histreg

#endif // HISTREG_DIFFEO_HPP
