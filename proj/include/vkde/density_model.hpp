#pragma once

#include "gauss_algebra.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace vkde {

//! Ordered set of N >= 1 points in R^d. Bandwidths are index aligned.
struct SampleSet
{
  int dim = 0;
  std::vector<Vec> points;

  SampleSet() = default;
  SampleSet(int d, std::vector<Vec> pts)
    : dim(d)
    , points(std::move(pts))
  {
    validate();
  }

  std::size_t size() const { return points.size(); }
  const Vec& operator[](std::size_t i) const { return points[i]; }

  void validate() const
  {
    check_dim(dim);
    if (points.empty()) {
      throw DomainError("sample set is empty");
    }
    for (std::size_t n = 0; n < points.size(); ++n) {
      if (points[n].size() != dim || !points[n].allFinite()) {
        throw DomainError("sample " + std::to_string(n) +
                            " has wrong dimension or non-finite entries",
                          n);
      }
    }
  }
};

//! Radially symmetric kernel K(x) = gamma(|x|^2), normalized in R^d.
struct KernelSpec
{
  std::string name;
  bool gaussian = false;
  std::function<double(double squared_norm, int d)> profile;
  //! Radius outside which the kernel vanishes (infinite for unbounded).
  double support = std::numeric_limits<double>::infinity();

  double operator()(const Vec& x) const
  {
    return profile(x.squaredNorm(), static_cast<int>(x.size()));
  }
};

inline KernelSpec
gaussian_kernel()
{
  return { "gaussian",
           true,
           [](double s, int d) {
             return std::exp(-0.5 * s - 0.5 * d * kLog2Pi);
           },
           std::numeric_limits<double>::infinity() };
}

//! Uniform kernel on the ball of radius sqrt(d + 2) (unit covariance); in
//! one dimension this is the box on [-sqrt 3, sqrt 3].
inline KernelSpec
box_kernel(int d)
{
  const double r = std::sqrt(d + 2.0);
  const double vol =
    std::pow(kPi, 0.5 * d) * std::pow(r, d) / std::tgamma(0.5 * d + 1.0);
  return { "box",
           false,
           [r2 = r * r, inv = 1.0 / vol](double s, int) {
             return s <= r2 ? inv : 0.0;
           },
           r };
}

//! K_sigma(x) = sigma^-d K(x / sigma).
inline KernelSpec
scaled_kernel(const KernelSpec& k, double sigma)
{
  auto base = k.profile;
  return { k.name + "_scaled",
           false,
           [base, sigma](double s, int d) {
             return std::pow(sigma, -d) * base(s / (sigma * sigma), d);
           },
           k.support * sigma };
}

//! Read access to a density and its derivatives, as consumed by the
//! bandwidth selectors. Implemented by closed-form reference densities and
//! by Gaussian-mixture estimates.
class DensityAccess
{
public:
  virtual ~DensityAccess() = default;

  virtual int dim() const = 0;
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  virtual Mat hessian(const Vec& x) const = 0;
  virtual Tensor4 fourth(const Vec& x) const = 0;
  //! Covariance of the normalized density; seeds the adaptation iteration.
  virtual Mat covariance() const = 0;

  double delta4(const Vec& x, const Mat& h) const
  {
    return contract_delta4(fourth(x), h);
  }
};

//! Weighted sum of Gaussians, sum_n w_n G_{y_n, Sigma_n}. Weights need not
//! sum to one (scaled densities are used by the invariance checks).
class GaussianMixture : public DensityAccess
{
public:
  GaussianMixture() = default;

  GaussianMixture(std::vector<double> weights,
                  std::vector<GaussianComponent> components)
    : weights_(std::move(weights))
    , components_(std::move(components))
  {
    if (components_.empty() || weights_.size() != components_.size()) {
      throw DomainError("mixture needs matching, nonempty weights/components");
    }
    d_ = components_.front().dim();
    check_dim(d_);
    cache_.reserve(components_.size());
    for (std::size_t n = 0; n < components_.size(); ++n) {
      const auto& c = components_[n];
      if (c.dim() != d_ || c.cov.rows() != d_ || c.cov.cols() != d_) {
        throw DomainError("component dimension mismatch", n);
      }
      if (!(weights_[n] > 0.0) || !std::isfinite(weights_[n])) {
        throw DomainError("mixture weight must be positive", n);
      }
      Eigen::LLT<Mat> llt(c.cov);
      if (llt.info() != Eigen::Success || !c.cov.allFinite()) {
        throw DomainError("component covariance is not SPD", n);
      }
      Cached cc;
      cc.precision = symmetrize(llt.solve(identity(d_)));
      cc.log_coeff = std::log(weights_[n]) - 0.5 * log_det_spd(llt) -
                     0.5 * d_ * kLog2Pi;
      cache_.push_back(std::move(cc));
    }
  }

  int dim() const override { return d_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<GaussianComponent>& components() const
  {
    return components_;
  }
  const Mat& precision(std::size_t n) const { return cache_[n].precision; }
  double log_coeff(std::size_t n) const { return cache_[n].log_coeff; }

  //! w_n G_n(x)
  double component_value(std::size_t n, const Vec& x) const
  {
    const Vec r = x - components_[n].mean;
    return std::exp(cache_[n].log_coeff -
                    0.5 * r.dot(cache_[n].precision * r));
  }

  double value(const Vec& x) const override
  {
    check(x);
    double s = 0.0;
    for (std::size_t n = 0; n < size(); ++n)
      s += component_value(n, x);
    return s;
  }

  Vec gradient(const Vec& x) const override
  {
    check(x);
    Vec g = Vec::Zero(d_);
    for (std::size_t n = 0; n < size(); ++n) {
      const Vec a = cache_[n].precision * (x - components_[n].mean);
      g -= component_value(n, x) * a;
    }
    return g;
  }

  Mat hessian(const Vec& x) const override
  {
    check(x);
    Mat h = Mat::Zero(d_, d_);
    for (std::size_t n = 0; n < size(); ++n) {
      const Mat& p = cache_[n].precision;
      const Vec a = p * (x - components_[n].mean);
      h += component_value(n, x) * (a * a.transpose() - p);
    }
    return symmetrize(h);
  }

  //! Fourth derivatives via the tensor Hermite polynomial
  //!   a_i a_j a_k a_l - (P_ij a_k a_l + 5 perms) + (P_ij P_kl + 2 perms),
  //! with P the component precision and a = P (x - y).
  Tensor4 fourth(const Vec& x) const override
  {
    check(x);
    Tensor4 t(d_);
    for (std::size_t n = 0; n < size(); ++n) {
      const Mat& p = cache_[n].precision;
      const Vec a = p * (x - components_[n].mean);
      const double g = component_value(n, x);
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j)
          for (int k = 0; k < d_; ++k)
            for (int l = 0; l < d_; ++l) {
              const double h4 =
                a(i) * a(j) * a(k) * a(l) -
                (p(i, j) * a(k) * a(l) + p(i, k) * a(j) * a(l) +
                 p(i, l) * a(j) * a(k) + p(j, k) * a(i) * a(l) +
                 p(j, l) * a(i) * a(k) + p(k, l) * a(i) * a(j)) +
                p(i, j) * p(k, l) + p(i, k) * p(j, l) + p(i, l) * p(j, k);
              t(i, j, k, l) += g * h4;
            }
    }
    return t;
  }

  Mat covariance() const override
  {
    double wsum = 0.0;
    Vec mean = Vec::Zero(d_);
    for (std::size_t n = 0; n < size(); ++n) {
      wsum += weights_[n];
      mean += weights_[n] * components_[n].mean;
    }
    mean /= wsum;
    Mat cov = Mat::Zero(d_, d_);
    for (std::size_t n = 0; n < size(); ++n) {
      const Vec r = components_[n].mean - mean;
      cov += (weights_[n] / wsum) * (components_[n].cov + r * r.transpose());
    }
    return symmetrize(cov);
  }

  double total_weight() const
  {
    double s = 0.0;
    for (double w : weights_)
      s += w;
    return s;
  }

  //! alpha * rho
  GaussianMixture scaled(double alpha) const
  {
    auto w = weights_;
    for (auto& v : w)
      v *= alpha;
    return { std::move(w), components_ };
  }

  //! rho(. - a)
  GaussianMixture shifted(const Vec& a) const
  {
    auto c = components_;
    for (auto& comp : c)
      comp.mean += a;
    return { weights_, std::move(c) };
  }

  //! |det A| rho(A .): means A^-1 y, covariances A^-1 Sigma A^-T.
  GaussianMixture affine(const Mat& a) const
  {
    const Mat ainv = a.inverse();
    auto c = components_;
    for (auto& comp : c) {
      comp.mean = ainv * comp.mean;
      comp.cov = symmetrize(ainv * comp.cov * ainv.transpose());
    }
    return { weights_, std::move(c) };
  }

  //! Sum of two mixtures (unnormalized).
  GaussianMixture plus(const GaussianMixture& o) const
  {
    auto w = weights_;
    auto c = components_;
    w.insert(w.end(), o.weights_.begin(), o.weights_.end());
    c.insert(c.end(), o.components_.begin(), o.components_.end());
    return { std::move(w), std::move(c) };
  }

private:
  struct Cached
  {
    Mat precision;
    double log_coeff;
  };

  void check(const Vec& x) const
  {
    if (x.size() != d_) {
      throw DomainError("evaluation point has wrong dimension");
    }
  }

  int d_ = 0;
  std::vector<double> weights_;
  std::vector<GaussianComponent> components_;
  std::vector<Cached> cache_;
};

//! The sample-point estimator MM_K[Y, h] = (1/N) sum |det h_n|^-1
//! K(h_n^-1 (x - y_n)). With a Gaussian kernel this is a Gaussian mixture
//! with component covariances h_n h_n^T.
class VkdeEstimate
{
public:
  VkdeEstimate(SampleSet samples, std::vector<Mat> bandwidths,
               KernelSpec kernel = gaussian_kernel())
    : samples_(std::move(samples))
    , bandwidths_(std::move(bandwidths))
    , kernel_(std::move(kernel))
  {
    samples_.validate();
    const int d = samples_.dim;
    if (bandwidths_.size() != samples_.size()) {
      throw DomainError("bandwidth count does not match sample count");
    }
    inverses_.reserve(size());
    log_abs_det_.reserve(size());
    for (std::size_t n = 0; n < size(); ++n) {
      const Mat& h = bandwidths_[n];
      if (h.rows() != d || h.cols() != d || !h.allFinite()) {
        throw DomainError("bandwidth " + std::to_string(n) + " is malformed",
                          n);
      }
      Eigen::PartialPivLU<Mat> lu(h);
      const double det = lu.determinant();
      if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
        throw DomainError("bandwidth " + std::to_string(n) + " is singular",
                          n);
      }
      inverses_.push_back(lu.inverse());
      log_abs_det_.push_back(std::log(std::abs(det)));
    }
    if (kernel_.gaussian) {
      std::vector<GaussianComponent> comps;
      comps.reserve(size());
      for (std::size_t n = 0; n < size(); ++n) {
        const Mat& h = bandwidths_[n];
        comps.push_back({ samples_[n], symmetrize(h * h.transpose()) });
      }
      try {
        mixture_ = GaussianMixture(
          std::vector<double>(size(), 1.0 / static_cast<double>(size())),
          std::move(comps));
      } catch (const DomainError& e) {
        throw DomainError(std::string("bandwidth ") +
                            std::to_string(e.index().value_or(0)) +
                            " gives a degenerate kernel covariance",
                          e.index());
      }
    }
  }

  int dim() const { return samples_.dim; }
  std::size_t size() const { return samples_.size(); }
  const SampleSet& samples() const { return samples_; }
  const std::vector<Mat>& bandwidths() const { return bandwidths_; }
  const KernelSpec& kernel() const { return kernel_; }
  bool gaussian() const { return kernel_.gaussian; }

  const GaussianMixture& mixture() const
  {
    if (!kernel_.gaussian) {
      throw DomainError("derivatives require the Gaussian kernel");
    }
    return mixture_;
  }

  double eval(const Vec& x) const
  {
    if (kernel_.gaussian) {
      return mixture_.value(x);
    }
    double s = 0.0;
    for (std::size_t n = 0; n < size(); ++n) {
      const Vec u = inverses_[n] * (x - samples_[n]);
      s += std::exp(-log_abs_det_[n]) * kernel_(u);
    }
    return s / static_cast<double>(size());
  }

private:
  SampleSet samples_;
  std::vector<Mat> bandwidths_;
  KernelSpec kernel_;
  std::vector<Mat> inverses_;
  std::vector<double> log_abs_det_;
  GaussianMixture mixture_;
};

inline double
mm_eval(const VkdeEstimate& est, const Vec& x)
{
  return est.eval(x);
}

inline Vec
mm_gradient(const VkdeEstimate& est, const Vec& x)
{
  return est.mixture().gradient(x);
}

inline Mat
mm_hessian(const VkdeEstimate& est, const Vec& x)
{
  return est.mixture().hessian(x);
}

inline Tensor4
mm_fourth(const VkdeEstimate& est, const Vec& x)
{
  return est.mixture().fourth(x);
}

//! Fourth-derivative contraction against the entries of h h.
inline double
mm_delta4(const VkdeEstimate& est, const Vec& x, const Mat& h)
{
  return contract_delta4(est.mixture().fourth(x), h);
}

//! rho(x) = (2 pi sigma)^-1 exp(-1/2 [(x1/sigma)^2 + (x2 - alpha (x1/sigma)^2)^2])
//!
//! Written as exp(g) with g a quartic polynomial; derivatives follow from
//! the exponential Faa di Bruno formula over set partitions of the indices.
class BananaDensity : public DensityAccess
{
public:
  explicit BananaDensity(double alpha = 4.0, double sigma = 5.0)
    : alpha_(alpha)
    , sigma_(sigma)
  {
    if (!(sigma > 0.0)) {
      throw DomainError("banana density needs sigma > 0");
    }
  }

  double alpha() const { return alpha_; }
  double sigma() const { return sigma_; }
  int dim() const override { return 2; }

  double value(const Vec& x) const override { return std::exp(log_value(x)); }

  double log_value(const Vec& x) const
  {
    check(x);
    const double u = x(0) / sigma_;
    const double s = x(1) - alpha_ * u * u;
    return -std::log(2.0 * kPi * sigma_) - 0.5 * (u * u + s * s);
  }

  Vec gradient(const Vec& x) const override
  {
    return value(x) * grad_g(x);
  }

  Mat hessian(const Vec& x) const override
  {
    const Vec g1 = grad_g(x);
    return value(x) * (g1 * g1.transpose() + hess_g(x));
  }

  Tensor4 fourth(const Vec& x) const override
  {
    const double rho = value(x);
    const Vec g1 = grad_g(x);
    const Mat g2 = hess_g(x);
    const double u = x(0) / sigma_;
    const double s3 = sigma_ * sigma_ * sigma_;
    // third derivatives of g: only g_111 and g_112 (and permutations) live
    auto g3 = [&](int i, int j, int k) {
      const int ones = (i == 0) + (j == 0) + (k == 0);
      if (ones == 3)
        return -12.0 * alpha_ * alpha_ * u / s3;
      if (ones == 2)
        return 2.0 * alpha_ / (sigma_ * sigma_);
      return 0.0;
    };
    const double g1111 =
      -12.0 * alpha_ * alpha_ / (sigma_ * sigma_ * sigma_ * sigma_);
    auto g4 = [&](int i, int j, int k, int l) {
      return (i == 0 && j == 0 && k == 0 && l == 0) ? g1111 : 0.0;
    };
    Tensor4 t(2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) {
            double v = g4(i, j, k, l);
            v += g3(i, j, k) * g1(l) + g3(i, j, l) * g1(k) +
                 g3(i, k, l) * g1(j) + g3(j, k, l) * g1(i);
            v += g2(i, j) * g2(k, l) + g2(i, k) * g2(j, l) +
                 g2(i, l) * g2(j, k);
            v += g2(i, j) * g1(k) * g1(l) + g2(i, k) * g1(j) * g1(l) +
                 g2(i, l) * g1(j) * g1(k) + g2(j, k) * g1(i) * g1(l) +
                 g2(j, l) * g1(i) * g1(k) + g2(k, l) * g1(i) * g1(j);
            v += g1(i) * g1(j) * g1(k) * g1(l);
            t(i, j, k, l) = rho * v;
          }
    return t;
  }

  //! x1 ~ N(0, sigma^2), x2 = alpha u^2 + e with u standard normal.
  Mat covariance() const override
  {
    Mat c = Mat::Zero(2, 2);
    c(0, 0) = sigma_ * sigma_;
    c(1, 1) = 2.0 * alpha_ * alpha_ + 1.0;
    return c;
  }

private:
  void check(const Vec& x) const
  {
    if (x.size() != 2) {
      throw DomainError("banana density is two dimensional");
    }
  }

  Vec grad_g(const Vec& x) const
  {
    check(x);
    const double u = x(0) / sigma_;
    const double s = x(1) - alpha_ * u * u;
    Vec g(2);
    g(0) = -u / sigma_ + 2.0 * alpha_ * u * s / sigma_;
    g(1) = -s;
    return g;
  }

  Mat hess_g(const Vec& x) const
  {
    const double u = x(0) / sigma_;
    const double s = x(1) - alpha_ * u * u;
    const double s2 = sigma_ * sigma_;
    Mat h(2, 2);
    h(0, 0) = (-1.0 - 4.0 * alpha_ * alpha_ * u * u + 2.0 * alpha_ * s) / s2;
    h(0, 1) = h(1, 0) = 2.0 * alpha_ * u / sigma_;
    h(1, 1) = -1.0;
    return h;
  }

  double alpha_;
  double sigma_;
};

//! rho'(x) = scale * rho(A x + b). Covers shifts (A = I, b = -a), scalar
//! multiples (A = I, b = 0) and affine maps (scale = |det A|).
class TransformedDensity : public DensityAccess
{
public:
  TransformedDensity(const DensityAccess& base, double scale, Mat a, Vec b)
    : base_(base)
    , scale_(scale)
    , a_(std::move(a))
    , b_(std::move(b))
  {
    if (a_.rows() != base.dim() || a_.cols() != base.dim() ||
        b_.size() != base.dim()) {
      throw DomainError("transform dimension mismatch");
    }
  }

  static TransformedDensity shift(const DensityAccess& base, const Vec& a)
  {
    return { base, 1.0, identity(base.dim()), -a };
  }
  static TransformedDensity scaled(const DensityAccess& base, double alpha)
  {
    return { base, alpha, identity(base.dim()), Vec::Zero(base.dim()) };
  }
  static TransformedDensity affine(const DensityAccess& base, const Mat& a)
  {
    return { base, std::abs(a.determinant()), a, Vec::Zero(base.dim()) };
  }

  int dim() const override { return base_.dim(); }
  double value(const Vec& x) const override
  {
    return scale_ * base_.value(map(x));
  }
  Vec gradient(const Vec& x) const override
  {
    return scale_ * a_.transpose() * base_.gradient(map(x));
  }
  Mat hessian(const Vec& x) const override
  {
    return symmetrize(scale_ * a_.transpose() * base_.hessian(map(x)) * a_);
  }
  Tensor4 fourth(const Vec& x) const override
  {
    const Tensor4 t = base_.fourth(map(x));
    const int d = dim();
    Tensor4 out(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) {
            double s = 0.0;
            for (int p = 0; p < d; ++p)
              for (int q = 0; q < d; ++q)
                for (int r = 0; r < d; ++r)
                  for (int v = 0; v < d; ++v)
                    s += a_(p, i) * a_(q, j) * a_(r, k) * a_(v, l) *
                         t(p, q, r, v);
            out(i, j, k, l) = scale_ * s;
          }
    return out;
  }
  Mat covariance() const override
  {
    const Mat ainv = a_.inverse();
    return symmetrize(ainv * base_.covariance() * ainv.transpose());
  }

private:
  Vec map(const Vec& x) const { return a_ * x + b_; }

  const DensityAccess& base_;
  double scale_;
  Mat a_;
  Vec b_;
};

inline GaussianComponent
make_component(std::initializer_list<double> mean,
               std::initializer_list<double> cov_row_major)
{
  const int d = static_cast<int>(mean.size());
  GaussianComponent c{ Vec(d), Mat(d, d) };
  int i = 0;
  for (double v : mean)
    c.mean(i++) = v;
  i = 0;
  for (double v : cov_row_major) {
    c.cov(i / d, i % d) = v;
    ++i;
  }
  return c;
}

//! One-dimensional stand-in for the flat-plus-peaked demonstration density:
//! 0.6 N(-2, 2^2) + 0.4 N(3, 0.4^2).
inline GaussianMixture
demo_density_1d()
{
  return { { 0.6, 0.4 },
           { make_component({ -2.0 }, { 4.0 }),
             make_component({ 3.0 }, { 0.16 }) } };
}

//! Anisotropic three-component test density in the plane.
inline GaussianMixture
test_mixture_2d()
{
  return { { 0.5, 0.3, 0.2 },
           { make_component({ 0.0, 0.0 }, { 1.0, 0.3, 0.3, 0.5 }),
             make_component({ 2.0, 1.0 }, { 0.4, -0.1, -0.1, 0.8 }),
             make_component({ -1.5, 1.5 }, { 0.6, 0.0, 0.0, 0.3 }) } };
}

} // namespace vkde
