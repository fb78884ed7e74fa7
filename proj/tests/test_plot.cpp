#include <vkde/data_io.hpp>
#include <vkde/fixed_point.hpp>
#include <vkde/plot.hpp>

#include <gtest/gtest.h>

#include <regex>
#include <sstream>

using namespace vkde;

TEST(MassRadius, ChiSquareQuantiles)
{
  // d = 2: P(r^2 <= t) = 1 - exp(-t/2).
  EXPECT_NEAR(mass_radius_sq(0.8, 2), -2.0 * std::log(0.2), 1e-12);
  EXPECT_NEAR(mass_radius_sq(0.5, 2), 2.0 * std::log(2.0), 1e-12);
  // d = 1: r = Phi^{-1}((1 + p) / 2); Phi^{-1}(0.9) = 1.2815515655446004.
  EXPECT_NEAR(mass_radius_sq(0.8, 1), 1.2815515655446004 * 1.2815515655446004,
              1e-10);
  EXPECT_THROW(mass_radius_sq(0.0, 2), ConfigError);
  EXPECT_THROW(mass_radius_sq(1.0, 2), ConfigError);
}

TEST(SpreadIndices, EvenAndBounded)
{
  EXPECT_EQ(spread_indices(5, 9), (std::vector<std::size_t>{ 0, 1, 2, 3, 4 }));
  EXPECT_EQ(spread_indices(10, 1), (std::vector<std::size_t>{ 5 }));
  EXPECT_TRUE(spread_indices(0, 3).empty());
  const auto idx = spread_indices(40, 9);
  ASSERT_EQ(idx.size(), 9u);
  EXPECT_EQ(idx.front(), 0u);
  EXPECT_EQ(idx.back(), 39u);
  for (std::size_t k = 1; k < idx.size(); ++k)
    EXPECT_GT(idx[k], idx[k - 1]);
}

TEST(MarchingSquares, LinearFieldGivesStraightLine)
{
  const QuadratureGrid g({ 0.0, 0.0 }, { 1.0, 1.0 }, { 11, 11 });
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec x = g.point(i);
    f[i] = x(0) + 2.0 * x(1);
  }
  const double level = 1.3;
  const auto segs = marching_squares(g, f, level);
  ASSERT_FALSE(segs.empty());
  for (const auto& s : segs) {
    EXPECT_NEAR(s.a[0] + 2.0 * s.a[1], level, 1e-12);
    EXPECT_NEAR(s.b[0] + 2.0 * s.b[1], level, 1e-12);
  }
  // The line x1 + 2 x2 = 1.3 crosses x2 in [0.15, 0.65]: one segment per
  // crossed cell.
  double length = 0.0;
  for (const auto& s : segs)
    length += std::hypot(s.b[0] - s.a[0], s.b[1] - s.a[1]);
  EXPECT_NEAR(length, std::hypot(1.0, 0.5), 1e-12);
}

TEST(MarchingSquares, ClosedContourOfBump)
{
  const QuadratureGrid g({ -2.0, -2.0 }, { 2.0, 2.0 }, { 81, 81 });
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    f[i] = std::exp(-0.5 * g.point(i).squaredNorm());
  const double r = 1.0;
  const auto segs = marching_squares(g, f, std::exp(-0.5 * r * r));
  double length = 0.0;
  for (const auto& s : segs) {
    EXPECT_NEAR(std::hypot(s.a[0], s.a[1]), r, 2e-3);
    length += std::hypot(s.b[0] - s.a[0], s.b[1] - s.a[1]);
  }
  EXPECT_NEAR(length, 2.0 * kPi * r, 1e-2);
  EXPECT_THROW(marching_squares(g, std::vector<double>(3), 0.5), DomainError);
}

TEST(KernelEllipse, MahalanobisRadius)
{
  Vec y(2);
  y << 1.0, -2.0;
  Mat h(2, 2);
  h << 2.0, 0.5, 0.0, 1.0;
  const Mat cov_inv = (h * h.transpose()).inverse();
  const auto pts = kernel_ellipse(y, h, 1.7, 36);
  ASSERT_EQ(pts.size(), 36u);
  for (const auto& p : pts) {
    Vec x(2);
    x << p[0], p[1];
    const Vec dx = x - y;
    EXPECT_NEAR(std::sqrt(dx.dot(cov_inv * dx)), 1.7, 1e-12);
  }
}

TEST(Svg, StructureAndHeader)
{
  const auto s = sample_banana(12, 4.0, 5.0, 3);
  const VkdeEstimate est(s, silverman_init(s));
  const auto g = banana_grid();
  const auto v = grid_values(est, g);
  SvgOptions opt;
  opt.kernels = 9;
  opt.levels = 5;
  opt.comment = "vkde test seed=3";
  std::ostringstream out;
  write_svg(out, g, v, est, opt);
  const std::string svg = out.str();
  EXPECT_NE(svg.find("<!-- vkde test seed=3 -->"), std::string::npos);
  const auto count = [&](const std::string& pat) {
    const std::regex re(pat);
    return std::distance(std::sregex_iterator(svg.begin(), svg.end(), re),
                         std::sregex_iterator());
  };
  EXPECT_EQ(count("class=\"kernel\""), 9);
  EXPECT_EQ(count("<circle "), 12);
  EXPECT_EQ(count("<path d=\"M"), 5);
  EXPECT_EQ(svg.substr(svg.size() - 7), "</svg>\n");
}

TEST(GridCsv, RoundTripsValues)
{
  const QuadratureGrid g({ 0.0, 1.0 }, { 1.0, 2.0 }, { 2, 3 });
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 0.1 * static_cast<double>(i) + 1.0 / 3.0;
  std::ostringstream out;
  write_grid_csv(out, g, v, "hdr");
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# hdr");
  std::getline(in, line);
  EXPECT_EQ(line, "x1,x2,density");
  for (std::size_t i = 0; i < v.size(); ++i) {
    ASSERT_TRUE(std::getline(in, line));
    const auto x = g.point(i);
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    EXPECT_EQ(std::stod(a), x(0));
    EXPECT_EQ(std::stod(b), x(1));
    EXPECT_EQ(std::stod(c), v[i]);
  }
  EXPECT_FALSE(std::getline(in, line));

  std::ostringstream bw;
  Mat h(2, 2);
  h << 1.0, 2.0, 3.0, 4.0;
  write_bandwidths_csv(bw, { h });
  EXPECT_EQ(bw.str(), "n,h_11,h_21,h_12,h_22\n0,1,3,2,4\n");
}
