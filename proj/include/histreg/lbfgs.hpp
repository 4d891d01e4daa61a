#ifndef HISTREG_LBFGS_HPP
#define HISTREG_LBFGS_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <vector>

namespace histreg {

struct LbfgsOptions
{
  int memory = 10;
  int max_iterations = 100;
  double grad_tol = 1e-6;    // on the infinity norm
  double c1 = 1e-4;          // sufficient decrease
  double c2 = 0.9;           // curvature (strong Wolfe)
  int max_linesearch = 30;   // evaluations per line search
  double first_step = 1.0;   // infinity-norm length of the first trial step
};

struct LbfgsResult
{
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool first_linesearch_failed = false;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b)
{
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double inf_norm(const std::vector<double>& a)
{
  double m = 0.0;
  for (double v : a)
    m = std::max(m, std::abs(v));
  return m;
}

// Minimizer of the cubic through (a, fa, ga), (b, fb, gb), safeguarded to the
// inner 80% of the bracket; falls back to bisection.
inline double cubic_step(double a, double fa, double ga, double b, double fb, double gb)
{
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  double t = 0.5 * (a + b);
  if (disc >= 0.0)
  {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0)
      t = b - (b - a) * (gb + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin)
    t = 0.5 * (a + b);
  return t;
}

} // namespace detail

/**
 * Limited-memory BFGS with a strong-Wolfe line search.
 *
 * `fn(x, grad)` returns f(x) and writes the gradient. A line search that
 * cannot satisfy the Wolfe conditions still accepts the best point with
 * sufficient decrease; with no decrease at all the run stops.
 */
template <typename Fn>
LbfgsResult lbfgs_minimize(Fn&& fn, std::vector<double> x0, const LbfgsOptions& opt = {})
{
  const std::size_t n = x0.size();
  LbfgsResult res;
  std::vector<double> g(n), d(n), xt(n), gt(n);
  double f = fn(x0, g);
  res.evaluations = 1;
  res.x = x0;
  res.value = f;
  if (!std::isfinite(f))
    return res;

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> x = std::move(x0);

  for (int it = 0; it < opt.max_iterations; ++it)
  {
    if (detail::inf_norm(g) < opt.grad_tol)
    {
      res.converged = true;
      break;
    }

    // Two-loop recursion.
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;)
    {
      alpha[i] = rho_hist[i] * detail::dot(s_hist[i], d);
      for (std::size_t j = 0; j < n; ++j)
        d[j] -= alpha[i] * y_hist[i][j];
    }
    if (!s_hist.empty())
    {
      const double gamma = detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
      for (double& v : d)
        v *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i)
    {
      const double beta = rho_hist[i] * detail::dot(y_hist[i], d);
      for (std::size_t j = 0; j < n; ++j)
        d[j] += s_hist[i][j] * (alpha[i] - beta);
    }
    for (double& v : d)
      v = -v;

    double dphi0 = detail::dot(g, d);
    if (!(dphi0 < 0.0))
    {
      // Lost descent; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < n; ++j)
        d[j] = -g[j];
      dphi0 = detail::dot(g, d);
    }

    const double phi0 = f;
    double step = s_hist.empty() ? opt.first_step / std::max(detail::inf_norm(d), 1e-300) : 1.0;

    auto eval = [&](double a, double& dphi) {
      for (std::size_t j = 0; j < n; ++j)
        xt[j] = x[j] + a * d[j];
      const double v = fn(xt, gt);
      ++res.evaluations;
      dphi = detail::dot(gt, d);
      return v;
    };

    // Best accepted point of this line search.
    double best_a = 0.0, best_f = phi0;
    std::vector<double> best_g = g;
    bool wolfe = false;
    int evals = 0;

    auto record = [&](double a, double v) {
      if (std::isfinite(v) && v < best_f && v <= phi0 + opt.c1 * a * dphi0)
      {
        best_a = a;
        best_f = v;
        best_g = gt;
      }
    };

    double a_prev = 0.0, f_prev = phi0, dphi_prev = dphi0;
    double lo = 0.0, f_lo = phi0, dphi_lo = dphi0, hi = 0.0, f_hi = 0.0, dphi_hi = 0.0;
    bool zoom = false;
    while (evals < opt.max_linesearch)
    {
      double dphi;
      const double v = eval(step, dphi);
      ++evals;
      record(step, v);
      if (!std::isfinite(v) || v > phi0 + opt.c1 * step * dphi0 || (evals > 1 && v >= f_prev))
      {
        lo = a_prev, f_lo = f_prev, dphi_lo = dphi_prev;
        hi = step, f_hi = std::isfinite(v) ? v : 1e300, dphi_hi = std::isfinite(dphi) ? dphi : 0.0;
        zoom = true;
        break;
      }
      if (std::abs(dphi) <= -opt.c2 * dphi0)
      {
        wolfe = true;
        break;
      }
      if (dphi >= 0.0)
      {
        lo = step, f_lo = v, dphi_lo = dphi;
        hi = a_prev, f_hi = f_prev, dphi_hi = dphi_prev;
        zoom = true;
        break;
      }
      a_prev = step, f_prev = v, dphi_prev = dphi;
      step *= 2.0;
    }

    while (zoom && !wolfe && evals < opt.max_linesearch)
    {
      const double a = detail::cubic_step(lo, f_lo, dphi_lo, hi, f_hi, dphi_hi);
      if (std::abs(hi - lo) < 1e-14 * std::max(1.0, std::abs(lo)))
        break;
      double dphi;
      const double v = eval(a, dphi);
      ++evals;
      record(a, v);
      if (!std::isfinite(v) || v > phi0 + opt.c1 * a * dphi0 || v >= f_lo)
      {
        hi = a, f_hi = std::isfinite(v) ? v : 1e300, dphi_hi = std::isfinite(dphi) ? dphi : 0.0;
        continue;
      }
      if (std::abs(dphi) <= -opt.c2 * dphi0)
      {
        wolfe = true;
        break;
      }
      if (dphi * (hi - lo) >= 0.0)
        hi = lo, f_hi = f_lo, dphi_hi = dphi_lo;
      lo = a, f_lo = v, dphi_lo = dphi;
    }

    if (best_a == 0.0)
    {
      if (it == 0)
        res.first_linesearch_failed = true;
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j)
    {
      s[j] = best_a * d[j];
      y[j] = best_g[j] - g[j];
      x[j] += s[j];
    }
    g = best_g;
    f = best_f;
    ++res.iterations;
    res.x = x;
    res.value = f;

    const double sy = detail::dot(s, y);
    if (sy > 1e-16 * detail::dot(y, y))
    {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory)
      {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  if (detail::inf_norm(g) < opt.grad_tol)
    res.converged = true;
  return res;
}

} // namespace histreg

#endif // HISTREG_LBFGS_HPP
