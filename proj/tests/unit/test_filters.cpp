#include <gtest/gtest.h>

#include <numeric>

#include "histreg/filters.hpp"
#include "support/synthetic.hpp"

using namespace histreg;
namespace ht = histreg::testing;

namespace {

double max_abs_diff(const ScalarImage& a, const ScalarImage& b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double mean(const ScalarImage& img)
{
  return std::accumulate(img.data().begin(), img.data().end(), 0.0) / static_cast<double>(img.size());
}

} // namespace

TEST(Filters, KernelIsNormalizedAndSymmetric)
{
  for (double s : {0.25, 0.8, 2.0, 6.0})
  {
    const auto k = gaussian_kernel(s);
    EXPECT_EQ(k.size(), 2 * static_cast<std::size_t>(std::ceil(4 * s)) + 1);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < k.size(); ++i)
      EXPECT_EQ(k[i], k[k.size() - 1 - i]);
  }
  EXPECT_THROW(gaussian_kernel(0.0), InvalidArgument);
}

TEST(Filters, SigmaZeroIsIdentity)
{
  const ScalarImage img = ht::random_image(13, 7, 1);
  EXPECT_EQ(gaussian_smooth(img, 0.0), img);
  EXPECT_THROW(gaussian_smooth(img, -1.0), InvalidArgument);
}

TEST(Filters, ImpulseResponseSumsToOne)
{
  ScalarImage img(33, 33, 0.0);
  img(16, 16) = 1.0;
  const ScalarImage out = gaussian_smooth(img, 2.0);
  EXPECT_NEAR(std::accumulate(out.data().begin(), out.data().end(), 0.0), 1.0, 1e-6);
}

TEST(Filters, MatchesDenseConvolutionOracle)
{
  for (double s : {1.0, 2.0, 3.0, 6.0})
  {
    const ScalarImage img = ht::random_image(32, 32, static_cast<std::uint64_t>(10 * s));
    EXPECT_LT(max_abs_diff(gaussian_smooth(img, s), ht::dense_gaussian_oracle(img, s)), 1e-3) << "sigma " << s;
  }
}

TEST(Filters, SmoothingPreservesMeanAwayFromBoundaryEffects)
{
  // Periodic-free check on an image whose border region is constant, so clamping adds no mass.
  ScalarImage img(64, 64, 0.25);
  const ScalarImage noise = ht::random_image(32, 32, 4);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img(x + 16, y + 16) = noise(x, y);
  EXPECT_NEAR(mean(gaussian_smooth(img, 2.0)), mean(img), 1e-6);
  const ScalarImage flat(20, 11, 0.7);
  EXPECT_NEAR(mean(gaussian_smooth(flat, 5.0)), 0.7, 1e-12);
}

TEST(Filters, SemigroupInInterior)
{
  const ScalarImage img = ht::random_image(96, 96, 9);
  const double s1 = 1.5, s2 = 2.0, s12 = std::hypot(s1, s2);
  const ScalarImage a = gaussian_smooth(gaussian_smooth(img, s1), s2);
  const ScalarImage b = gaussian_smooth(img, s12);
  const int margin = static_cast<int>(std::ceil(4 * (s1 + s2)));
  double m = 0.0;
  for (int y = margin; y < img.height() - margin; ++y)
    for (int x = margin; x < img.width() - margin; ++x)
      m = std::max(m, std::abs(a(x, y) - b(x, y)));
  EXPECT_LT(m, 5e-3);
}

TEST(Filters, FieldSmoothing)
{
  const DisplacementField zero(12, 9);
  EXPECT_EQ(smooth_field(zero, 3.0), zero);

  DisplacementField c(12, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
      c.set(x, y, {1.25, -3.5});
  const DisplacementField sc = smooth_field(c, 4.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
    {
      EXPECT_NEAR(sc.at(x, y).x, 1.25, 1e-6);
      EXPECT_NEAR(sc.at(x, y).y, -3.5, 1e-6);
    }

  const DisplacementField f = ht::random_smooth_field(32, 24, 1.0, 3.0, 7);
  const DisplacementField sf = smooth_field(f, 2.0);
  EXPECT_LT(max_abs_diff(sf.dx(), ht::dense_gaussian_oracle(f.dx(), 2.0)), 1e-3);
  EXPECT_LT(max_abs_diff(sf.dy(), ht::dense_gaussian_oracle(f.dy(), 2.0)), 1e-3);
}

TEST(Filters, DownsampleShapes)
{
  const ScalarImage img = ht::random_image(100, 80, 2);
  EXPECT_EQ(downsample(img, 1), img);
  const ScalarImage d = downsample(img, 25);
  EXPECT_EQ(d.width(), 4);
  EXPECT_EQ(d.height(), 4);

  const ScalarImage flat(60, 37, 0.5);
  const ScalarImage df = downsample(flat, 25);
  EXPECT_EQ(df.width(), 3);
  EXPECT_EQ(df.height(), 2);
  for (double v : df.data())
    EXPECT_NEAR(v, 0.5, 1e-12);
  EXPECT_THROW(downsample(img, 0), InvalidArgument);
}

TEST(Filters, DownsampleReproducesBlockValues)
{
  // Blocks of 8x8 output pixels, aligned to the factor grid; samples whose
  // support (4 sigma = 2 factor) stays inside one block must reproduce it.
  const int factor = 4, block = 8 * factor;
  const ScalarImage vals = ht::random_image(4, 4, 12);
  ScalarImage img(4 * block, 4 * block);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      img(x, y) = vals(x / block, y / block);
  const ScalarImage d = downsample(img, factor);
  const int support = 2 * factor;
  auto inside = [&](int p) {
    const int offset = (p * factor) % block;
    return offset >= support && offset <= block - 1 - support;
  };
  int checked = 0;
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (inside(x) && inside(y))
      {
        EXPECT_NEAR(d(x, y), vals(x * factor / block, y * factor / block), 1e-3);
        ++checked;
      }
  EXPECT_GT(checked, 0);
}

TEST(Filters, PyramidLevels)
{
  const ScalarImage img = ht::random_image(128, 128, 3);
  const Pyramid single = build_pyramid(img, {1});
  ASSERT_EQ(single.levels.size(), 1u);
  EXPECT_EQ(single.levels[0], img);

  const Pyramid p = build_pyramid(img, {4, 2, 1});
  ASSERT_EQ(p.levels.size(), 3u);
  EXPECT_EQ(p.levels[0].width(), 32);
  EXPECT_EQ(p.levels[1].width(), 64);
  EXPECT_EQ(p.levels[2].width(), 128);
  EXPECT_EQ(p.levels[2], img);

  const Pyramid odd = build_pyramid(ht::random_image(101, 50, 3), {4, 2, 1});
  EXPECT_EQ(odd.levels[0].width(), 26);
  EXPECT_EQ(odd.levels[0].height(), 13);
  EXPECT_EQ(odd.levels[1].width(), 51);

  EXPECT_THROW(build_pyramid(img, {2, 4, 1}), InvalidArgument);
  EXPECT_THROW(build_pyramid(img, {4, 2}), InvalidArgument);
  EXPECT_THROW(build_pyramid(img, {}), InvalidArgument);
}
