#ifndef HISTREG_EVAL_HPP
#define HISTREG_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "histreg/core.hpp"

namespace histreg {

struct PairScore
{
  std::vector<double> tres;
  std::vector<double> rtres;
  double median_rtre = 0.0;
  double robustness = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct ScoreSummary
{
  double mean_median_rtre = 0.0;
  double mean_robustness = 0.0;
  std::size_t n_pairs = 0;
};

/// Euclidean distance per landmark, paired by index.
inline std::vector<double> tre(const LandmarkSet& target, const LandmarkSet& warped)
{
  if (target.size() != warped.size())
    throw InvalidArgument("tre: landmark sets differ in length");
  std::vector<double> out;
  out.reserve(target.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    out.push_back(norm(warped.points[i] - target.points[i]));
  return out;
}

/// TRE normalized by the image diagonal.
inline std::vector<double> rtre(const std::vector<double>& tres, double w, double h)
{
  if (!(w >= 1.0) || !(h >= 1.0))
    throw InvalidArgument("rtre: image dimensions must be >= 1");
  const double diag = std::sqrt(w * w + h * h);
  std::vector<double> out;
  out.reserve(tres.size());
  for (double t : tres)
    out.push_back(t / diag);
  return out;
}

/// Median; for even counts the mean of the two central order statistics.
inline double median(std::vector<double> v)
{
  if (v.empty())
    throw InvalidArgument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/**
 * Scores one pair. Robustness is the fraction of landmarks whose TRE
 * strictly decreased from `warped_before` to `warped_after`.
 */
inline PairScore score_pair(const LandmarkSet& target, const LandmarkSet& warped_before,
                            const LandmarkSet& warped_after, double w, double h)
{
  if (target.empty())
    throw InvalidArgument("score_pair: empty landmark set");
  if (warped_before.size() != target.size() || warped_after.size() != target.size())
    throw InvalidArgument("score_pair: landmark sets differ in length");
  PairScore s;
  s.w = w;
  s.h = h;
  s.tres = tre(target, warped_after);
  s.rtres = rtre(s.tres, w, h);
  s.median_rtre = median(s.rtres);
  const std::vector<double> before = tre(target, warped_before);
  std::size_t improved = 0;
  for (std::size_t i = 0; i < before.size(); ++i)
    if (s.tres[i] < before[i])
      ++improved;
  s.robustness = static_cast<double>(improved) / static_cast<double>(before.size());
  return s;
}

inline ScoreSummary aggregate(const std::vector<PairScore>& scores)
{
  if (scores.empty())
    throw InvalidArgument("aggregate: no pair scores");
  ScoreSummary out;
  for (const auto& s : scores)
  {
    out.mean_median_rtre += s.median_rtre;
    out.mean_robustness += s.robustness;
  }
  out.n_pairs = scores.size();
  out.mean_median_rtre /= static_cast<double>(scores.size());
  out.mean_robustness /= static_cast<double>(scores.size());
  return out;
}

} // namespace histreg

#endif // HISTREG_EVAL_HPP
