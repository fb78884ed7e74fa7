#pragma once

// Grid export and SVG rendering: density contours by marching squares and
// probability-mass ellipses of individual kernels.

#include "evaluation.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <array>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace vkde {

//! Squared Mahalanobis radius enclosing probability p of a d-dimensional
//! Gaussian.
inline double
mass_radius_sq(double p, int d)
{
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError("mass fraction must lie in (0, 1)");
  }
  return boost::math::quantile(boost::math::chi_squared_distribution<>(d), p);
}

//! k indices spread evenly over 0..n-1 (all of them when k >= n).
inline std::vector<std::size_t>
spread_indices(std::size_t n, std::size_t k)
{
  std::vector<std::size_t> out;
  if (n == 0 || k == 0)
    return out;
  if (k >= n) {
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(i);
    return out;
  }
  if (k == 1)
    return { n / 2 };
  for (std::size_t i = 0; i < k; ++i)
    out.push_back((i * (n - 1) + (k - 1) / 2) / (k - 1));
  return out;
}

struct Segment
{
  std::array<double, 2> a, b;
};

//! Iso-line segments of a 2-D grid field at `level` (field index runs with
//! x2 fastest, as QuadratureGrid::point). Saddle cells are resolved by the
//! cell-centre average.
inline std::vector<Segment>
marching_squares(const QuadratureGrid& g, const std::vector<double>& f,
                 double level)
{
  if (g.dim() != 2 || f.size() != g.size()) {
    throw DomainError("marching squares needs a 2-D grid and matching field");
  }
  const int n0 = g.steps[0], n1 = g.steps[1];
  auto at = [&](int i, int j) { return f[static_cast<std::size_t>(i) * n1 + j]; };
  auto lerp = [&](int i0, int j0, int i1, int j1) {
    const double v0 = at(i0, j0), v1 = at(i1, j1);
    const double t = (level - v0) / (v1 - v0);
    return std::array<double, 2>{
      g.coord(0, i0) + t * (g.coord(0, i1) - g.coord(0, i0)),
      g.coord(1, j0) + t * (g.coord(1, j1) - g.coord(1, j0)) };
  };
  std::vector<Segment> out;
  for (int i = 0; i + 1 < n0; ++i) {
    for (int j = 0; j + 1 < n1; ++j) {
      // Corners counter-clockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1).
      const int code = (at(i, j) > level ? 1 : 0) |
                       (at(i + 1, j) > level ? 2 : 0) |
                       (at(i + 1, j + 1) > level ? 4 : 0) |
                       (at(i, j + 1) > level ? 8 : 0);
      if (code == 0 || code == 15)
        continue;
      const auto e0 = [&] { return lerp(i, j, i + 1, j); };
      const auto e1 = [&] { return lerp(i + 1, j, i + 1, j + 1); };
      const auto e2 = [&] { return lerp(i, j + 1, i + 1, j + 1); };
      const auto e3 = [&] { return lerp(i, j, i, j + 1); };
      switch (code) {
        case 1: case 14: out.push_back({ e3(), e0() }); break;
        case 2: case 13: out.push_back({ e0(), e1() }); break;
        case 3: case 12: out.push_back({ e3(), e1() }); break;
        case 4: case 11: out.push_back({ e1(), e2() }); break;
        case 6: case 9:  out.push_back({ e0(), e2() }); break;
        case 7: case 8:  out.push_back({ e3(), e2() }); break;
        case 5: case 10: {
          const double centre = 0.25 * (at(i, j) + at(i + 1, j) +
                                        at(i + 1, j + 1) + at(i, j + 1));
          const bool joined = (centre > level) == (code == 5);
          if (joined) {
            out.push_back({ e3(), e2() });
            out.push_back({ e0(), e1() });
          } else {
            out.push_back({ e3(), e0() });
            out.push_back({ e1(), e2() });
          }
          break;
        }
        default: break;
      }
    }
  }
  return out;
}

//! Points on {y + r h u : |u| = 1}, the Mahalanobis-r contour of a kernel
//! with covariance h h^T.
inline std::vector<std::array<double, 2>>
kernel_ellipse(const Vec& y, const Mat& h, double r, int points = 72)
{
  if (y.size() != 2 || h.rows() != 2 || h.cols() != 2) {
    throw DomainError("kernel ellipses are two-dimensional");
  }
  std::vector<std::array<double, 2>> out;
  for (int k = 0; k < points; ++k) {
    const double t = 2.0 * kPi * k / points;
    Vec u(2);
    u << std::cos(t), std::sin(t);
    const Vec x = y + r * h * u;
    out.push_back({ x(0), x(1) });
  }
  return out;
}

struct SvgOptions
{
  int width = 640;
  int height = 480;
  int levels = 8;               //!< contour levels, equally spaced below the peak
  std::size_t kernels = 6;      //!< kernels drawn as mass ellipses
  double mass = 0.8;            //!< probability inside each ellipse
  std::string comment;          //!< emitted as an XML comment
};

//! Density contours on `g` plus the sample points and mass ellipses of an
//! evenly spread subset of the kernels.
inline void
write_svg(std::ostream& out, const QuadratureGrid& g,
          const std::vector<double>& values, const VkdeEstimate& est,
          const SvgOptions& opt = {})
{
  if (g.dim() != 2 || est.dim() != 2) {
    throw DomainError("SVG output is two-dimensional");
  }
  const double x0 = g.lo[0], x1 = g.hi[0], y0 = g.lo[1], y1 = g.hi[1];
  const double sx = opt.width / (x1 - x0), sy = opt.height / (y1 - y0);
  auto px = [&](double x) { return (x - x0) * sx; };
  auto py = [&](double y) { return opt.height - (y - y0) * sy; };
  char buf[256];
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!opt.comment.empty())
    out << "<!-- " << opt.comment << " -->\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                opt.width, opt.height, opt.width, opt.height);
  out << buf;
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  double peak = 0.0;
  for (double v : values)
    peak = std::max(peak, v);
  out << "<g class=\"contours\" fill=\"none\" stroke=\"#1f4e79\" "
         "stroke-width=\"0.8\">\n";
  for (int l = 1; l <= opt.levels && peak > 0.0; ++l) {
    const double level = peak * l / (opt.levels + 1);
    out << "<path d=\"";
    for (const auto& s : marching_squares(g, values, level)) {
      std::snprintf(buf, sizeof buf, "M%.2f %.2fL%.2f %.2f", px(s.a[0]),
                    py(s.a[1]), px(s.b[0]), py(s.b[1]));
      out << buf;
    }
    out << "\"/>\n";
  }
  out << "</g>\n";

  out << "<g class=\"samples\" fill=\"black\">\n";
  for (const auto& y : est.samples().points) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.5\"/>\n",
                  px(y(0)), py(y(1)));
    out << buf;
  }
  out << "</g>\n";

  const double r = std::sqrt(mass_radius_sq(opt.mass, 2));
  out << "<g class=\"ellipses\" fill=\"none\" stroke=\"#b22222\" "
         "stroke-width=\"1.2\">\n";
  for (std::size_t n : spread_indices(est.size(), opt.kernels)) {
    out << "<polygon class=\"kernel\" data-index=\"" << n << "\" points=\"";
    bool first = true;
    for (const auto& p :
         kernel_ellipse(est.samples()[n], est.bandwidths()[n], r)) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", first ? "" : " ", px(p[0]),
                    py(p[1]));
      out << buf;
      first = false;
    }
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
}

//! Rows "x1,...,xd,value" over the grid.
inline void
write_grid_csv(std::ostream& out, const QuadratureGrid& g,
               const std::vector<double>& values, const std::string& comment = {})
{
  if (!comment.empty())
    out << "# " << comment << '\n';
  for (int a = 0; a < g.dim(); ++a)
    out << 'x' << a + 1 << ',';
  out << "density\n";
  char buf[64];
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec x = g.point(i);
    for (int a = 0; a < g.dim(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", x(a));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", values[i]);
    out << buf;
  }
}

//! Rows "n,h_11,h_21,...,h_dd" (column-major vec of h_n).
inline void
write_bandwidths_csv(std::ostream& out, const std::vector<Mat>& hs,
                     const std::string& comment = {})
{
  if (!comment.empty())
    out << "# " << comment << '\n';
  if (hs.empty())
    return;
  const int d = static_cast<int>(hs.front().rows());
  out << 'n';
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r)
      out << ",h_" << r + 1 << c + 1;
  out << '\n';
  char buf[64];
  for (std::size_t n = 0; n < hs.size(); ++n) {
    out << n;
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < d; ++r) {
        std::snprintf(buf, sizeof buf, ",%.17g", hs[n](r, c));
        out << buf;
      }
    out << '\n';
  }
}

} // namespace vkde
