#include <gtest/gtest.h>

#include <random>

#include "histreg/eval.hpp"

using namespace histreg;

TEST(Eval, ThreeFourFive)
{
  const LandmarkSet target{{{0, 0}}}, after{{{3, 4}}}, before{{{6, 8}}};
  const PairScore s = score_pair(target, before, after, 100, 100);
  EXPECT_EQ(s.tres[0], 5.0);
  EXPECT_EQ(s.rtres[0], 5.0 / std::sqrt(20000.0));
  EXPECT_NEAR(s.median_rtre, 0.0353553, 1e-7);
  EXPECT_EQ(s.robustness, 1.0);
}

TEST(Eval, Median)
{
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_EQ(median({7.0}), 7.0);
  EXPECT_THROW(median({}), InvalidArgument);
}

TEST(Eval, Aggregate)
{
  PairScore a, b;
  a.median_rtre = 0.004;
  b.median_rtre = 0.006;
  a.robustness = 1.0;
  b.robustness = 0.5;
  const ScoreSummary s = aggregate({a, b});
  EXPECT_NEAR(s.mean_median_rtre, 0.005, 1e-15);
  EXPECT_EQ(s.mean_robustness, 0.75);
  EXPECT_EQ(s.n_pairs, 2u);
  EXPECT_THROW(aggregate({}), InvalidArgument);
}

TEST(Eval, RobustnessNeedsStrictImprovement)
{
  const LandmarkSet target{{{0, 0}, {10, 10}, {20, 20}, {30, 30}}};
  const LandmarkSet before{{{1, 0}, {10, 12}, {20, 23}, {30, 30}}};
  const LandmarkSet after{{{0.5, 0}, {10, 12}, {20, 24}, {30, 30}}};
  const PairScore s = score_pair(target, before, after, 50, 50);
  // improved, tie, worse, tie at zero
  EXPECT_EQ(s.robustness, 0.25);
}

TEST(Eval, InputValidation)
{
  const LandmarkSet a{{{0, 0}}}, b{{{0, 0}, {1, 1}}};
  EXPECT_THROW(score_pair(a, b, a, 10, 10), InvalidArgument);
  EXPECT_THROW(score_pair(LandmarkSet{}, LandmarkSet{}, LandmarkSet{}, 10, 10), InvalidArgument);
  EXPECT_THROW(rtre({1.0}, 0.0, 0.0), InvalidArgument);
}

TEST(Eval, ScalingInvariance)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  LandmarkSet t, b, a;
  for (int i = 0; i < 15; ++i)
  {
    t.points.push_back({u(rng), u(rng)});
    b.points.push_back({u(rng), u(rng)});
    a.points.push_back({u(rng), u(rng)});
  }
  const PairScore s = score_pair(t, b, a, 120, 80);
  for (double k : {0.5, 2.0, 4.0})
  {
    LandmarkSet ts = t, bs = b, as = a;
    for (auto* set : {&ts, &bs, &as})
      for (Vec2& p : set->points)
        p = {p.x * k, p.y * k};
    const PairScore sk = score_pair(ts, bs, as, 120 * k, 80 * k);
    EXPECT_NEAR(sk.median_rtre, s.median_rtre, 1e-12);
    EXPECT_EQ(sk.robustness, s.robustness);
  }
}

TEST(Eval, MedianIsBoundedByExtremes)
{
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int n = 1; n < 30; ++n)
  {
    std::vector<double> v(n);
    for (double& x : v)
      x = u(rng);
    const double m = median(v);
    EXPECT_GE(m, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(m, *std::max_element(v.begin(), v.end()));
  }
}
