#pragma once

// Error measures and experiment drivers: ISE on tensor grids and in closed
// form, Monte-Carlo MISE, MISE-optimal constants, the five-column banana
// benchmark, invariance-axiom reports and the two-cluster splitting gap.

#include "data_io.hpp"
#include "fixed_point.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace vkde {

// ------------------------------------------------------------------ grids

//! Tensor-product trapezoid rule. Flat index runs with the last axis
//! fastest.
struct QuadratureGrid
{
  std::vector<double> lo, hi;
  std::vector<int> steps; //!< nodes per axis, >= 2

  QuadratureGrid() = default;
  QuadratureGrid(std::vector<double> lo_, std::vector<double> hi_,
                 std::vector<int> steps_)
    : lo(std::move(lo_))
    , hi(std::move(hi_))
    , steps(std::move(steps_))
  {
    validate();
  }

  int dim() const { return static_cast<int>(steps.size()); }

  void validate() const
  {
    if (lo.size() != hi.size() || lo.size() != steps.size() || lo.empty()) {
      throw ConfigError("grid ranges and step counts must match");
    }
    check_dim(dim());
    for (int a = 0; a < dim(); ++a) {
      if (!(lo[a] < hi[a]) || steps[a] < 2) {
        throw ConfigError("grid axis " + std::to_string(a) +
                          " needs min < max and at least 2 nodes");
      }
    }
  }

  double spacing(int a) const { return (hi[a] - lo[a]) / (steps[a] - 1); }
  double coord(int a, int k) const { return lo[a] + k * spacing(a); }

  std::size_t size() const
  {
    std::size_t n = 1;
    for (int s : steps)
      n *= static_cast<std::size_t>(s);
    return n;
  }

  std::size_t stride(int a) const
  {
    std::size_t s = 1;
    for (int b = dim() - 1; b > a; --b)
      s *= static_cast<std::size_t>(steps[b]);
    return s;
  }

  Vec point(std::size_t idx) const
  {
    Vec x(dim());
    for (int a = dim() - 1; a >= 0; --a) {
      x(a) = coord(a, static_cast<int>(idx % steps[a]));
      idx /= steps[a];
    }
    return x;
  }

  double weight(std::size_t idx) const
  {
    double w = 1.0;
    for (int a = dim() - 1; a >= 0; --a) {
      const int k = static_cast<int>(idx % steps[a]);
      idx /= steps[a];
      w *= spacing(a) * ((k == 0 || k == steps[a] - 1) ? 0.5 : 1.0);
    }
    return w;
  }

  QuadratureGrid shifted(const Vec& a) const
  {
    QuadratureGrid g = *this;
    for (int i = 0; i < dim(); ++i) {
      g.lo[i] += a(i);
      g.hi[i] += a(i);
    }
    return g;
  }

  QuadratureGrid refined() const
  {
    QuadratureGrid g = *this;
    for (auto& s : g.steps)
      s = 2 * s - 1;
    return g;
  }
};

//! Default grid for the banana benchmark. The x2 range reaches the 4.4
//! sigma tail of x1 mapped through alpha (x1/sigma)^2.
inline QuadratureGrid
banana_grid(int steps1 = 201, int steps2 = 401)
{
  return { { -22.0, -6.0 }, { 22.0, 82.0 }, { steps1, steps2 } };
}

inline double
grid_integral(const QuadratureGrid& g, const std::function<double(const Vec&)>& f)
{
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    s += g.weight(i) * f(g.point(i));
  return s;
}

inline void
check_grid_mass(const DensityAccess& truth, const QuadratureGrid& g,
                double tol = 1e-4)
{
  if (g.dim() != truth.dim()) {
    throw DomainError("grid dimension does not match the density");
  }
  const double m =
    grid_integral(g, [&](const Vec& x) { return truth.value(x); });
  if (!(m >= 1.0 - tol)) {
    throw DomainError("grid covers only " + std::to_string(m) +
                      " of the density's mass");
  }
}

namespace detail {

//! Adds w * G_{y, cov}(x) (or its axis-derivative) to every grid node
//! within squared Mahalanobis radius 80 of y.
inline void
splat_gaussian(const QuadratureGrid& g, const Vec& y, const Mat& cov,
               double w, int deriv_axis, std::vector<double>& out)
{
  constexpr double kR2 = 80.0;
  const int d = g.dim();
  const auto llt = spd_factor(cov, "kernel covariance");
  const Mat prec = symmetrize(llt.solve(identity(d)));
  const double log_c = std::log(w) - 0.5 * log_det_spd(llt) - 0.5 * d * kLog2Pi;
  std::vector<int> k0(d), k1(d), k(d);
  for (int a = 0; a < d; ++a) {
    const double half = std::sqrt(kR2 * cov(a, a));
    const double h = g.spacing(a);
    k0[a] = std::max(0, static_cast<int>(std::ceil((y(a) - half - g.lo[a]) / h)));
    k1[a] = std::min(g.steps[a] - 1,
                     static_cast<int>(std::floor((y(a) + half - g.lo[a]) / h)));
    if (k0[a] > k1[a])
      return;
  }
  k = k0;
  Vec x(d);
  for (;;) {
    std::size_t idx = 0;
    for (int a = 0; a < d; ++a) {
      x(a) = g.coord(a, k[a]);
      idx += static_cast<std::size_t>(k[a]) * g.stride(a);
    }
    const Vec r = x - y;
    const Vec pr = prec * r;
    const double q = r.dot(pr);
    if (q <= kR2) {
      const double v = std::exp(log_c - 0.5 * q);
      out[idx] += deriv_axis < 0 ? v : -v * pr(deriv_axis);
    }
    int a = d - 1;
    while (a >= 0 && ++k[a] > k1[a]) {
      k[a] = k0[a];
      --a;
    }
    if (a < 0)
      break;
  }
}

} // namespace detail

//! Values of the estimate (deriv_axis < 0) or of its partial derivative
//! along deriv_axis at every grid node.
inline std::vector<double>
grid_values(const VkdeEstimate& est, const QuadratureGrid& g, int deriv_axis = -1)
{
  if (g.dim() != est.dim()) {
    throw DomainError("grid dimension does not match the estimate");
  }
  std::vector<double> out(g.size(), 0.0);
  if (est.gaussian()) {
    const auto& m = est.mixture();
    for (std::size_t n = 0; n < m.size(); ++n) {
      detail::splat_gaussian(g, m.components()[n].mean, m.components()[n].cov,
                             m.weights()[n], deriv_axis, out);
    }
    return out;
  }
  if (deriv_axis >= 0) {
    throw DomainError("derivatives require the Gaussian kernel");
  }
  for (std::size_t i = 0; i < g.size(); ++i)
    out[i] = est.eval(g.point(i));
  return out;
}

//! int (est - truth)^2 by the grid's trapezoid rule.
inline double
ise(const VkdeEstimate& est, const DensityAccess& truth, const QuadratureGrid& g)
{
  check_grid_mass(truth, g);
  const auto v = grid_values(est, g);
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = v[i] - truth.value(g.point(i));
    s += g.weight(i) * e * e;
  }
  return s;
}

//! int (d/dx_axis est - d/dx_axis truth)^2 by the grid's trapezoid rule.
inline double
derivative_ise(const VkdeEstimate& est, const DensityAccess& truth,
               const QuadratureGrid& g, int axis)
{
  check_grid_mass(truth, g);
  if (axis < 0 || axis >= g.dim()) {
    throw DomainError("derivative axis out of range");
  }
  const auto v = grid_values(est, g, axis);
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = v[i] - truth.gradient(g.point(i))(axis);
    s += g.weight(i) * e * e;
  }
  return s;
}

// ------------------------------------------------------ closed-form ISE

struct IseValues
{
  double value = 0.0;      //!< ISE of the density
  double derivative = 0.0; //!< ISE of its derivative along the axis
};

namespace detail {

//! int G_{a,A} G_{b,B} and int d_k G_{a,A} d_k G_{b,B}.
inline void
gauss_l2_pair(const Vec& a, const Mat& sa, const Vec& b, const Mat& sb,
              int axis, double& v, double& dv)
{
  const Mat s = sa + sb;
  const auto llt = spd_factor(s, "A + B");
  const Vec r = a - b;
  const double g = std::exp(log_gauss(llt, r));
  const Mat sinv = llt.solve(identity(static_cast<int>(r.size())));
  const Vec sr = sinv * r;
  v = g;
  dv = g * (sinv(axis, axis) - sr(axis) * sr(axis));
}

inline double
normal_pdf(double x, double var)
{
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * kPi * var);
}

} // namespace detail

//! ISE against a Gaussian-mixture or banana truth without a grid:
//! int est^2 - 2 int est truth + int truth^2. Mixture-mixture overlaps are
//! closed form; for the banana the x2 integral is Gaussian in closed form
//! and the remaining x1 integral is adaptive Gauss-Kronrod.
class ClosedFormIse
{
public:
  ClosedFormIse(const DensityAccess& truth, int axis)
    : truth_(truth)
    , axis_(axis)
  {
    if (axis < 0 || axis >= truth.dim()) {
      throw DomainError("derivative axis out of range");
    }
    if (const auto* m = dynamic_cast<const GaussianMixture*>(&truth)) {
      mixture_ = m;
      for (std::size_t i = 0; i < m->size(); ++i) {
        for (std::size_t j = 0; j < m->size(); ++j) {
          double v, dv;
          detail::gauss_l2_pair(m->components()[i].mean, m->components()[i].cov,
                                m->components()[j].mean, m->components()[j].cov,
                                axis, v, dv);
          const double w = m->weights()[i] * m->weights()[j];
          truth_sq_.value += w * v;
          truth_sq_.derivative += w * dv;
        }
      }
    } else if (const auto* b = dynamic_cast<const BananaDensity*>(&truth)) {
      banana_ = b;
      if (axis != 1) {
        throw DomainError("closed-form banana ISE supports the x2 axis only");
      }
      truth_sq_.value = 1.0 / (4.0 * kPi * b->sigma());
      truth_sq_.derivative = 1.0 / (8.0 * kPi * b->sigma());
    } else {
      throw DomainError("no closed-form ISE for this density");
    }
  }

  static bool supports(const DensityAccess& truth, int axis)
  {
    if (dynamic_cast<const GaussianMixture*>(&truth))
      return axis >= 0 && axis < truth.dim();
    return dynamic_cast<const BananaDensity*>(&truth) && axis == 1;
  }

  //! Equal-weight Gaussian estimate with the given means and bandwidths.
  IseValues operator()(const std::vector<Vec>& ys, const std::vector<Mat>& hs) const
  {
    const std::size_t n = ys.size();
    std::vector<Mat> cov(n);
    for (std::size_t i = 0; i < n; ++i)
      cov[i] = symmetrize(hs[i] * hs[i].transpose());
    const double w = 1.0 / static_cast<double>(n);
    IseValues est_sq;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double v, dv;
        detail::gauss_l2_pair(ys[i], cov[i], ys[j], cov[j], axis_, v, dv);
        const double f = (i == j ? 1.0 : 2.0) * w * w;
        est_sq.value += f * v;
        est_sq.derivative += f * dv;
      }
    }
    IseValues cross;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = kernel_cross(ys[i], cov[i]);
      cross.value += w * c.value;
      cross.derivative += w * c.derivative;
    }
    return { est_sq.value - 2.0 * cross.value + truth_sq_.value,
             est_sq.derivative - 2.0 * cross.derivative + truth_sq_.derivative };
  }

  const IseValues& truth_squared() const { return truth_sq_; }

private:
  IseValues kernel_cross(const Vec& y, const Mat& cov) const
  {
    IseValues out;
    if (mixture_) {
      for (std::size_t k = 0; k < mixture_->size(); ++k) {
        double v, dv;
        detail::gauss_l2_pair(y, cov, mixture_->components()[k].mean,
                              mixture_->components()[k].cov, axis_, v, dv);
        out.value += mixture_->weights()[k] * v;
        out.derivative += mixture_->weights()[k] * dv;
      }
      return out;
    }
    // Kernel = N(x1; y1, c11) N(x2; y2 + beta (x1 - y1), v); banana =
    // N(x1; 0, s^2) N(x2; a x1^2 / s^2, 1). Integrating x2 first leaves
    // N(r; 0, v + 1) (value) and N(r; 0, S)(1/S - r^2/S^2) (x2-derivative)
    // with r the difference of the two conditional means.
    using boost::math::quadrature::gauss_kronrod;
    const double a = banana_->alpha();
    const double s2 = banana_->sigma() * banana_->sigma();
    const double c11 = cov(0, 0);
    const double beta = cov(1, 0) / c11;
    const double var = std::max(cov(1, 1) - cov(1, 0) * beta, 0.0) + 1.0;
    const double vp = 1.0 / (1.0 / c11 + 1.0 / s2);
    const double mp = vp * y(0) / c11;
    const double pre = detail::normal_pdf(y(0), c11 + s2);
    const double half = 12.0 * std::sqrt(vp);
    auto resid = [&](double x1) {
      return y(1) + beta * (x1 - y(0)) - a * x1 * x1 / s2;
    };
    out.value = pre * gauss_kronrod<double, 31>::integrate(
                        [&](double x1) {
                          return detail::normal_pdf(x1 - mp, vp) *
                                 detail::normal_pdf(resid(x1), var);
                        },
                        mp - half, mp + half, 12, 1e-12);
    out.derivative =
      pre * gauss_kronrod<double, 31>::integrate(
              [&](double x1) {
                const double r = resid(x1);
                return detail::normal_pdf(x1 - mp, vp) *
                       detail::normal_pdf(r, var) * (1.0 / var - r * r / (var * var));
              },
              mp - half, mp + half, 12, 1e-12);
    return out;
  }

  const DensityAccess& truth_;
  int axis_;
  const GaussianMixture* mixture_ = nullptr;
  const BananaDensity* banana_ = nullptr;
  IseValues truth_sq_;
};

//! ISE and derivative ISE by the closed form when available, otherwise on
//! the grid.
class IseEvaluator
{
public:
  IseEvaluator(const DensityAccess& truth, QuadratureGrid grid, int axis,
               bool prefer_closed_form = true)
    : truth_(truth)
    , grid_(std::move(grid))
    , axis_(axis)
  {
    if (prefer_closed_form && ClosedFormIse::supports(truth, axis)) {
      closed_.emplace(truth, axis);
    } else {
      check_grid_mass(truth, grid_);
      truth_values_.resize(grid_.size());
      truth_derivs_.resize(grid_.size());
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        const Vec x = grid_.point(i);
        truth_values_[i] = truth.value(x);
        truth_derivs_[i] = truth.gradient(x)(axis);
      }
    }
  }

  IseValues operator()(const SampleSet& s, const std::vector<Mat>& hs) const
  {
    if (closed_)
      return (*closed_)(s.points, hs);
    const VkdeEstimate est(s, hs);
    const auto v = grid_values(est, grid_);
    const auto dv = grid_values(est, grid_, axis_);
    IseValues out;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const double w = grid_.weight(i);
      out.value += w * std::pow(v[i] - truth_values_[i], 2);
      out.derivative += w * std::pow(dv[i] - truth_derivs_[i], 2);
    }
    return out;
  }

  bool closed_form() const { return closed_.has_value(); }

private:
  const DensityAccess& truth_;
  QuadratureGrid grid_;
  int axis_;
  std::optional<ClosedFormIse> closed_;
  std::vector<double> truth_values_, truth_derivs_;
};

// ---------------------------------------------------------- Monte Carlo

enum class PilotMode
{
  oracle,  //!< the selector sees the true density
  estimate //!< bandwidths from the fixed-point iteration on the estimate
};

using Sampler = std::function<SampleSet(std::size_t n, std::uint64_t seed)>;

struct MiseOptions
{
  std::size_t n = 40;
  int reps = 200;
  std::uint64_t seed = 1;
  PilotMode mode = PilotMode::oracle;
  int fpi_steps = 10;
  int axis = 1;
};

//! Per-replication results; failed replications have ok = false and are
//! excluded from the means.
struct MiseResult
{
  std::vector<double> ise, dise;
  std::vector<char> ok;
  double constant = 0.0;

  std::size_t failed() const
  {
    return static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
  }
  std::size_t succeeded() const { return ok.size() - failed(); }

  static std::pair<double, double> mean_std(const std::vector<double>& v,
                                            const std::vector<char>& ok)
  {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!ok[i])
        continue;
      s += v[i];
      ++n;
    }
    if (n == 0)
      return { std::numeric_limits<double>::quiet_NaN(),
               std::numeric_limits<double>::quiet_NaN() };
    const double m = s / n;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (ok[i])
        s2 += (v[i] - m) * (v[i] - m);
    return { m, n > 1 ? std::sqrt(s2 / (n - 1)) : 0.0 };
  }

  std::pair<double, double> ise_stats() const { return mean_std(ise, ok); }
  std::pair<double, double> dise_stats() const { return mean_std(dise, ok); }
};

inline std::uint64_t
replication_seed(std::uint64_t seed, int rep)
{
  return derive_seed(seed, static_cast<std::uint64_t>(rep));
}

//! Bandwidths for one replication; throws DomainError on failure.
inline std::vector<Mat>
replication_bandwidths(const DensityAccess& truth, const SampleSet& s,
                       const SelectorConfig& cfg, const MiseOptions& opt)
{
  if (opt.mode == PilotMode::oracle) {
    return select_bandwidths(cfg, truth, s.points, s.size());
  }
  const auto trace = iterate_bandwidths(s, cfg, opt.fpi_steps);
  if (trace.error) {
    throw DomainError("fixed-point step " + std::to_string(trace.error->step) +
                        ": " + trace.error->message,
                      trace.error->index);
  }
  return trace.last();
}

inline MiseResult
mise_mc(const DensityAccess& truth, const Sampler& sample,
        const SelectorConfig& cfg, const MiseOptions& opt,
        const IseEvaluator& eval)
{
  if (opt.reps < 1) {
    throw ConfigError("reps must be at least 1");
  }
  MiseResult out;
  out.constant = tuning_constant(cfg);
  for (int r = 0; r < opt.reps; ++r) {
    const auto s = sample(opt.n, replication_seed(opt.seed, r));
    try {
      const auto hs = replication_bandwidths(truth, s, cfg, opt);
      const auto v = eval(s, hs);
      out.ise.push_back(v.value);
      out.dise.push_back(v.derivative);
      out.ok.push_back(1);
    } catch (const DomainError&) {
      out.ise.push_back(std::numeric_limits<double>::quiet_NaN());
      out.dise.push_back(std::numeric_limits<double>::quiet_NaN());
      out.ok.push_back(0);
    }
  }
  return out;
}

inline std::vector<double>
geometric_grid(double lo, double hi, int n)
{
  if (!(lo > 0.0 && hi >= lo) || n < 1) {
    throw ConfigError("constant grid needs 0 < lo <= hi and n >= 1");
  }
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return g;
}

struct ConstantSearch
{
  double best = 0.0;
  std::size_t best_index = 0;
  bool at_endpoint = false; //!< minimum on the boundary of the grid
  std::vector<double> constants;
  std::vector<double> mean_ise;
  MiseResult at_best; //!< per-replication results at the optimum
};

//! Constant minimizing mean ISE over the grid (ties go to the smaller
//! constant). Replications that fail at any constant are excluded
//! throughout so every constant is judged on the same draws. In oracle mode
//! the bandwidths are an exact power of the constant, so each replication's
//! bandwidths are computed once and rescaled.
inline ConstantSearch
optimize_constant(const DensityAccess& truth, const Sampler& sample,
                  const SelectorConfig& cfg, const MiseOptions& opt,
                  const IseEvaluator& eval, std::vector<double> constants)
{
  if (constants.empty()) {
    throw ConfigError("constant grid is empty");
  }
  std::sort(constants.begin(), constants.end());
  const std::size_t m = constants.size();
  const int d = truth.dim();
  std::vector<MiseResult> per(m);
  for (auto& p : per) {
    p.ise.assign(opt.reps, std::numeric_limits<double>::quiet_NaN());
    p.dise = p.ise;
    p.ok.assign(opt.reps, 0);
  }
  for (std::size_t c = 0; c < m; ++c)
    per[c].constant = constants[c];

  const double c0 = tuning_constant(cfg);
  for (int r = 0; r < opt.reps; ++r) {
    const auto s = sample(opt.n, replication_seed(opt.seed, r));
    std::vector<Mat> base;
    bool failed = false;
    if (opt.mode == PilotMode::oracle) {
      try {
        base = replication_bandwidths(truth, s, cfg, opt);
      } catch (const DomainError&) {
        failed = true;
      }
    }
    std::vector<IseValues> vals(m);
    for (std::size_t c = 0; c < m && !failed; ++c) {
      try {
        std::vector<Mat> hs;
        if (opt.mode == PilotMode::oracle) {
          const double f = tuning_factor(cfg, d, c0, constants[c]);
          hs.reserve(base.size());
          for (const auto& h : base)
            hs.push_back(f * h);
        } else {
          hs = replication_bandwidths(
            truth, s, with_tuning_constant(cfg, constants[c]), opt);
        }
        vals[c] = eval(s, hs);
      } catch (const DomainError&) {
        failed = true;
      }
    }
    if (failed)
      continue;
    for (std::size_t c = 0; c < m; ++c) {
      per[c].ise[r] = vals[c].value;
      per[c].dise[r] = vals[c].derivative;
      per[c].ok[r] = 1;
    }
  }

  ConstantSearch out;
  out.constants = constants;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < m; ++c) {
    const double mean = per[c].ise_stats().first;
    out.mean_ise.push_back(mean);
    if (mean < best) {
      best = mean;
      out.best_index = c;
    }
  }
  if (!std::isfinite(best)) {
    throw DomainError("every replication failed during the constant search");
  }
  out.best = constants[out.best_index];
  out.at_endpoint = m > 1 && (out.best_index == 0 || out.best_index == m - 1);
  out.at_best = per[out.best_index];
  return out;
}

// ------------------------------------------------------------ benchmark

struct BenchmarkColumn
{
  std::string label;
  SelectorConfig selector;
  PilotMode mode = PilotMode::oracle;
  double constant = 0.0;
  bool constant_at_endpoint = false;
  MiseResult result;
};

struct BenchmarkReport
{
  std::size_t n = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  int fpi_steps = 0;
  std::string truth;
  std::vector<BenchmarkColumn> columns;

  const BenchmarkColumn& column(const std::string& label) const
  {
    for (const auto& c : columns)
      if (c.label == label)
        return c;
    throw DomainError("no benchmark column " + label);
  }
};

struct BenchmarkSpec
{
  std::size_t n = 40;
  int reps = 200;
  std::uint64_t seed = 1;
  int fpi_steps = 10;
  int constant_points = 41;
  bool include_fpi = true;
};

//! Fraction of replications (successful in both) with a[r] < b[r].
inline double
fraction_less(const MiseResult& a, const MiseResult& b, bool derivative = false)
{
  const auto& va = derivative ? a.dise : a.ise;
  const auto& vb = derivative ? b.dise : b.ise;
  std::size_t n = 0, wins = 0;
  for (std::size_t i = 0; i < std::min(va.size(), vb.size()); ++i) {
    if (!a.ok[i] || !b.ok[i])
      continue;
    ++n;
    wins += va[i] < vb[i] ? 1 : 0;
  }
  return n ? static_cast<double>(wins) / n : 0.0;
}

//! The five-column comparison on the banana density: standard KDE,
//! power law (beta = 1/2), multivariate Parzen and the axiomatic rule with
//! oracle densities and MISE-optimal constants, plus the axiomatic rule
//! through the fixed-point iteration with the oracle-optimal kappa.
inline BenchmarkReport
run_banana_benchmark(const BenchmarkSpec& spec)
{
  const BananaDensity truth;
  const Sampler sampler = [&](std::size_t n, std::uint64_t seed) {
    return sample_banana(n, truth.alpha(), truth.sigma(), seed);
  };
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.n = spec.n;
  opt.reps = spec.reps;
  opt.seed = spec.seed;
  opt.fpi_steps = spec.fpi_steps;
  opt.axis = 1;

  BenchmarkReport rep;
  rep.n = spec.n;
  rep.reps = spec.reps;
  rep.seed = spec.seed;
  rep.fpi_steps = spec.fpi_steps;
  rep.truth = "banana(alpha=4,sigma=5)";

  const int k = spec.constant_points;
  const std::vector<std::pair<std::string, std::pair<SelectorConfig, std::vector<double>>>>
    families = {
      { "standard", { FixedSelector{}, geometric_grid(0.2, 20.0, k) } },
      { "power_law", { PowerLawSelector{ 0.5, 1.0 }, geometric_grid(0.01, 2.0, k) } },
      { "parzen", { ParzenMultiSelector{}, geometric_grid(0.05, 10.0, k) } },
      { "axiomatic", { AxiomaticSelector{}, geometric_grid(1e-8, 1e4, k) } },
    };
  double kappa = 1.0;
  for (const auto& [label, fam] : families) {
    const auto search =
      optimize_constant(truth, sampler, fam.first, opt, eval, fam.second);
    BenchmarkColumn col;
    col.label = label;
    col.selector = with_tuning_constant(fam.first, search.best);
    col.mode = PilotMode::oracle;
    col.constant = search.best;
    col.constant_at_endpoint = search.at_endpoint;
    col.result = search.at_best;
    if (label == "axiomatic")
      kappa = search.best;
    rep.columns.push_back(std::move(col));
  }
  if (spec.include_fpi) {
    BenchmarkColumn col;
    col.label = "axiomatic_fpi";
    col.selector = with_tuning_constant(AxiomaticSelector{}, kappa);
    col.mode = PilotMode::estimate;
    col.constant = kappa;
    MiseOptions o = opt;
    o.mode = PilotMode::estimate;
    col.result = mise_mc(truth, sampler, col.selector, o, eval);
    rep.columns.push_back(std::move(col));
  }
  return rep;
}

namespace detail {

inline std::string
fmt(double v, const char* f = "%.9e")
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

} // namespace detail

inline nlohmann::json
to_json(const BenchmarkReport& r)
{
  nlohmann::json j;
  j["truth"] = r.truth;
  j["n"] = r.n;
  j["reps"] = r.reps;
  j["seed"] = r.seed;
  j["fpi_steps"] = r.fpi_steps;
  j["columns"] = nlohmann::json::array();
  for (const auto& c : r.columns) {
    nlohmann::json cj;
    cj["label"] = c.label;
    cj["selector"] = selector_to_json(c.selector);
    cj["mode"] = c.mode == PilotMode::oracle ? "oracle" : "estimate";
    cj["constant"] = c.constant;
    cj["constant_at_endpoint"] = c.constant_at_endpoint;
    const auto [m, s] = c.result.ise_stats();
    const auto [dm, ds] = c.result.dise_stats();
    cj["mean_ise"] = m;
    cj["std_ise"] = s;
    cj["mean_dise"] = dm;
    cj["std_dise"] = ds;
    cj["replications"] = c.result.succeeded();
    cj["failed"] = c.result.failed();
    nlohmann::json ise = nlohmann::json::array(), dise = nlohmann::json::array();
    for (std::size_t i = 0; i < c.result.ise.size(); ++i) {
      ise.push_back(c.result.ok[i] ? nlohmann::json(c.result.ise[i]) : nlohmann::json());
      dise.push_back(c.result.ok[i] ? nlohmann::json(c.result.dise[i]) : nlohmann::json());
    }
    cj["ise"] = ise;
    cj["dise"] = dise;
    j["columns"].push_back(cj);
  }
  return j;
}

//! Two rows (ISE and x2-derivative ISE) by one column per method, followed
//! by the constants and failure counts.
inline std::string
to_text_table(const BenchmarkReport& r)
{
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "# %s, N=%zu, reps=%d, seed=%llu\n",
                r.truth.c_str(), r.n, r.reps,
                static_cast<unsigned long long>(r.seed));
  out += buf;
  std::snprintf(buf, sizeof buf, "%-22s", "method");
  out += buf;
  for (const auto& c : r.columns) {
    std::snprintf(buf, sizeof buf, " %16s", c.label.c_str());
    out += buf;
  }
  out += '\n';
  auto row = [&](const char* name, auto get) {
    std::snprintf(buf, sizeof buf, "%-22s", name);
    out += buf;
    for (const auto& c : r.columns) {
      std::snprintf(buf, sizeof buf, " %16s", get(c).c_str());
      out += buf;
    }
    out += '\n';
  };
  row("MISE", [](const BenchmarkColumn& c) {
    return detail::fmt(c.result.ise_stats().first, "%.6e");
  });
  row("MISE d/dx2", [](const BenchmarkColumn& c) {
    return detail::fmt(c.result.dise_stats().first, "%.6e");
  });
  row("std ISE", [](const BenchmarkColumn& c) {
    return detail::fmt(c.result.ise_stats().second, "%.6e");
  });
  row("constant", [](const BenchmarkColumn& c) {
    return detail::fmt(c.constant, "%.6e") + (c.constant_at_endpoint ? "*" : "");
  });
  row("failed", [](const BenchmarkColumn& c) {
    return std::to_string(c.result.failed());
  });
  return out;
}

// ------------------------------------------------------------ invariance

struct InvarianceEntry
{
  std::string axiom; //!< "I1" .. "I4"
  bool pass = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string note;
};

struct InvarianceReport
{
  std::string selector;
  std::vector<InvarianceEntry> entries;

  bool all_pass() const
  {
    return std::all_of(entries.begin(), entries.end(),
                       [](const auto& e) { return e.pass; });
  }
  const InvarianceEntry& entry(const std::string& axiom) const
  {
    for (const auto& e : entries)
      if (e.axiom == axiom)
        return e;
    throw DomainError("no entry " + axiom);
  }
};

struct InvarianceOptions
{
  double tol_shift = 1e-12;
  double tol_scalar = 1e-6;
  double tol_affine = 1e-6;
  double tol_locality = 1e-3;
  //! Changes below this are treated as equal in the monotonicity check.
  double noise_floor = 1e-12;
  std::vector<double> separations = { 10.0, 20.0, 40.0 };
};

//! A second, differently shaped reference mixture for the locality checks.
inline GaussianMixture
locality_partner(int d)
{
  if (d == 1) {
    return { { 0.7, 0.3 },
             { make_component({ 0.0 }, { 0.5 }), make_component({ 1.2 }, { 0.2 }) } };
  }
  return { { 0.6, 0.4 },
           { make_component({ 0.0, 0.0 }, { 0.5, -0.2, -0.2, 0.9 }),
             make_component({ 1.0, -1.0 }, { 0.3, 0.0, 0.0, 0.3 }) } };
}

//! Checks I1-I4 for Phi = the selector with N = 1 on reference Gaussian
//! mixtures (two-dimensional, or one-dimensional for the univariate Parzen
//! rule).
inline InvarianceReport
invariance_report(const SelectorConfig& cfg, const InvarianceOptions& opt = {})
{
  validate(cfg);
  const bool uni = std::holds_alternative<ParzenUniSelector>(cfg);
  const int d = uni ? 1 : 2;
  const GaussianMixture rho = uni ? demo_density_1d() : test_mixture_2d();
  std::vector<Vec> ys;
  if (uni) {
    for (double v : { -3.1, -0.4, 2.7 })
      ys.push_back(Vec::Constant(1, v));
  } else {
    const double pts[3][2] = { { 0.3, -0.2 }, { 1.6, 1.1 }, { -1.2, 1.4 } };
    for (const auto& p : pts) {
      Vec y(2);
      y << p[0], p[1];
      ys.push_back(y);
    }
  }
  auto phi = [&](const DensityAccess& f, const std::vector<Vec>& pts) {
    return select_bandwidths(cfg, f, pts, 1);
  };
  InvarianceReport rep;
  rep.selector = selector_kind(cfg);
  const auto base = phi(rho, ys);

  {
    Vec a(d);
    if (uni)
      a << 3.7;
    else
      a << 3.7, -1.2;
    std::vector<Vec> moved;
    for (const auto& y : ys)
      moved.push_back(y + a);
    const auto got = phi(rho.shifted(a), moved);
    double r = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i)
      r = std::max(r, rel_frobenius(got[i], base[i]));
    rep.entries.push_back({ "I1", r < opt.tol_shift, r, opt.tol_shift,
                            "shift by a" });
  }
  {
    double r = 0.0;
    for (double alpha : { 2.0, 0.3 }) {
      const auto got = phi(rho.scaled(alpha), ys);
      const double f = std::pow(alpha, -1.0 / (d + 4));
      for (std::size_t i = 0; i < ys.size(); ++i)
        r = std::max(r, rel_frobenius(got[i], Mat(f * base[i])));
    }
    rep.entries.push_back({ "I2", r < opt.tol_scalar, r, opt.tol_scalar,
                            "alpha in {2, 0.3}" });
  }
  {
    std::vector<Mat> maps;
    if (uni) {
      maps.push_back(Mat::Constant(1, 1, 4.0));
      maps.push_back(Mat::Constant(1, 1, -0.7));
    } else {
      Mat a = Mat::Zero(2, 2);
      a(0, 0) = 1.0;
      a(1, 1) = 4.0;
      maps.push_back(a);
      Mat b(2, 2);
      b << 0.8, 0.5, -0.3, 1.7;
      maps.push_back(b);
    }
    double r = 0.0;
    for (const auto& a : maps) {
      const Mat ainv = a.inverse();
      std::vector<Vec> moved;
      for (const auto& y : ys)
        moved.push_back(ainv * y);
      const auto got = phi(rho.affine(a), moved);
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const Mat want = ainv * base[i] * base[i].transpose() * ainv.transpose();
        r = std::max(r, rel_frobenius(Mat(got[i] * got[i].transpose()), want));
      }
    }
    rep.entries.push_back({ "I3", r < opt.tol_affine, r, opt.tol_affine,
                            uni ? "A in {4, -0.7}" : "A in {diag(1,4), general}" });
  }
  {
    const auto partner = locality_partner(d);
    std::vector<double> res;
    for (double t : opt.separations) {
      Vec shift = Vec::Zero(d);
      shift(0) = t;
      const auto combined = rho.plus(partner.shifted(shift));
      const auto got = phi(combined, ys);
      double r = 0.0;
      for (std::size_t i = 0; i < ys.size(); ++i)
        r = std::max(r, rel_frobenius(got[i], base[i]));
      res.push_back(r);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < res.size(); ++i)
      decreasing = decreasing && res[i] <= res[i - 1] + opt.noise_floor;
    std::string note = "residuals";
    for (double v : res)
      note += " " + detail::fmt(v, "%.3e");
    rep.entries.push_back({ "I4", decreasing && res.back() < opt.tol_locality,
                            res.back(), opt.tol_locality, note });
  }
  return rep;
}

// ---------------------------------------------------------- splitting

struct SplittingResult
{
  std::vector<double> separations;
  std::vector<double> relative_gap; //!< sup |gap| / peak over both windows
};

//! Oracle axiomatic bandwidths for rho0 = a rho1 + (1 - a) rho2(. - t e1),
//! a = N1 / N0, against a rho1_hat + (1 - a) rho2_hat(. - t e1) built from
//! the same points with their stand-alone bandwidths.
inline SplittingResult
splitting_gap(const AxiomaticSelector& cfg, std::size_t n1, std::size_t n2,
              std::uint64_t seed, const std::vector<double>& separations,
              int window_steps = 61)
{
  const auto rho1 = test_mixture_2d();
  const auto rho2 = locality_partner(2);
  const auto y1 = sample_mixture(n1, rho1, derive_seed(seed, 0));
  const auto y2 = sample_mixture(n2, rho2, derive_seed(seed, 1));
  const double n0 = static_cast<double>(n1 + n2);
  const double a = n1 / n0;
  const SelectorConfig sel = cfg;
  const auto h1 = select_bandwidths(sel, rho1, y1.points, n1);
  const auto h2 = select_bandwidths(sel, rho2, y2.points, n2);
  const VkdeEstimate e1(y1, h1), e2(y2, h2);

  auto window = [&](const SampleSet& s, const Vec& shift) {
    Vec lo = s.points.front(), hi = lo;
    for (const auto& p : s.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    lo -= Vec::Constant(2, 3.0);
    hi += Vec::Constant(2, 3.0);
    return QuadratureGrid({ lo(0) + shift(0), lo(1) + shift(1) },
                          { hi(0) + shift(0), hi(1) + shift(1) },
                          { window_steps, window_steps });
  };

  SplittingResult out;
  for (double t : separations) {
    Vec shift = Vec::Zero(2);
    shift(0) = t;
    const auto rho0 = rho1.scaled(a).plus(rho2.shifted(shift).scaled(1.0 - a));
    std::vector<Vec> pts = y1.points;
    for (const auto& p : y2.points)
      pts.push_back(p + shift);
    const SampleSet y0(2, pts);
    const auto h0 = select_bandwidths(sel, rho0, y0.points, y0.size());
    const VkdeEstimate e0(y0, h0);
    double gap = 0.0, peak = 0.0;
    for (const auto& g : { window(y1, Vec::Zero(2)), window(y2, shift) }) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec x = g.point(i);
        const double split = a * e1.eval(x) + (1.0 - a) * e2.eval(x - shift);
        gap = std::max(gap, std::abs(e0.eval(x) - split));
        peak = std::max(peak, split);
      }
    }
    out.separations.push_back(t);
    out.relative_gap.push_back(gap / peak);
  }
  return out;
}

} // namespace vkde
