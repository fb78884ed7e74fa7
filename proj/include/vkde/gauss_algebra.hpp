#pragma once

// Closed-form algebra of Gaussian densities: evaluation, products, and the
// convolutions against a squared Gaussian that appear in the adaptation
// function of a Gaussian mixture.
//
// Notation: G_{y,Q} is the normal density with mean y and covariance Q,
// G_Q = G_{0,Q}. Everything is evaluated in log space and exponentiated at
// the end so that far-apart products underflow to 0 rather than NaN.

#include "linalg.hpp"

#include <cmath>

namespace vkde {

struct GaussianComponent
{
  Vec mean;
  Mat cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

namespace detail {

inline void
check_same_dim(const Vec& a, const Vec& b)
{
  if (a.size() != b.size()) {
    throw DomainError("dimension mismatch");
  }
}

//! log G_{0,Q}(r) given a factorization of Q.
inline double
log_gauss(const Eigen::LLT<Mat>& q, const Vec& r)
{
  const double d = static_cast<double>(r.size());
  const Vec z = q.matrixL().solve(r);
  return -0.5 * z.squaredNorm() - 0.5 * log_det_spd(q) - 0.5 * d * kLog2Pi;
}

} // namespace detail

inline double
gauss_log_eval(const GaussianComponent& g, const Vec& x)
{
  detail::check_same_dim(g.mean, x);
  const auto llt = spd_factor(g.cov, "covariance");
  return detail::log_gauss(llt, x - g.mean);
}

//! Normal density G_{mean,cov}(x).
inline double
gauss_eval(const GaussianComponent& g, const Vec& x)
{
  return std::exp(gauss_log_eval(g, x));
}

//! Quantities shared by the two convolution identities. For a pair of
//! Gaussians (y1, Q1), (y2, Q2):
//!   Q12 = (Q1^-1 + Q2^-1)^-1,  y12 = Q12 (Q1^-1 y1 + Q2^-1 y2),
//! and log G_{Q1+Q2}(y1 - y2), the overlap factor of the product.
struct GaussianPair
{
  Vec y1, y2;
  Mat p1, p2; // precisions Q1^-1, Q2^-1
  Mat q12;
  Vec y12;
  double log_overlap = 0.0;

  GaussianPair() = default;

  GaussianPair(const GaussianComponent& g1, const GaussianComponent& g2)
    : y1(g1.mean)
    , y2(g2.mean)
  {
    detail::check_same_dim(g1.mean, g2.mean);
    const int d = g1.dim();
    const auto l1 = spd_factor(g1.cov, "covariance Q1");
    const auto l2 = spd_factor(g2.cov, "covariance Q2");
    p1 = l1.solve(identity(d));
    p2 = l2.solve(identity(d));
    p1 = symmetrize(p1);
    p2 = symmetrize(p2);
    const auto lsum = spd_factor(g1.cov + g2.cov, "Q1 + Q2");
    log_overlap = detail::log_gauss(lsum, g1.mean - g2.mean);
    const auto lp = spd_factor(p1 + p2, "Q1^-1 + Q2^-1");
    q12 = symmetrize(lp.solve(identity(d)));
    y12 = q12 * (p1 * y1 + p2 * y2);
  }
};

//! Moments of the t-density proportional to G_{y12,Q12}(t) G_{x,Q3/2}(t),
//! together with log G_{y12, Q12 + Q3/2}(x).
struct SmoothedPairMoments
{
  double log_value = 0.0; // log G_{y12, Q12 + Q3/2}(x)
  Vec mean;               // Q1234 (Q12^-1 y12 + 2 Q3^-1 x)
  Mat cov;                // Q1234 = (Q12^-1 + 2 Q3^-1)^-1
};

inline SmoothedPairMoments
smoothed_pair_moments(const Mat& q12, const Vec& y12, const Mat& q3_half,
                      const Vec& x)
{
  // Woodbury form avoids inverting Q12 and Q3 separately:
  //   Q1234 = Q12 - Q12 S^-1 Q12,  mean = y12 + Q12 S^-1 (x - y12),
  // with S = Q12 + Q3/2.
  const Mat s = q12 + q3_half;
  const auto ls = spd_factor(s, "Q12 + Q3/2");
  const Vec r = x - y12;
  SmoothedPairMoments out;
  out.log_value = detail::log_gauss(ls, r);
  out.mean = y12 + q12 * ls.solve(r);
  out.cov = symmetrize(q12 - q12 * ls.solve(q12));
  return out;
}

//! Bracket of the gradient/Hessian identity:
//!   (Q1^-1 - Q2^-1) Q1234 Q2^-1 + (a1 - a2) a2^T + Q2^-1,
//! with a_j = Q_j^-1 (mean - y_j). It is the expectation of
//! (a1(t) - a2(t)) a2(t)^T + Q2^-1 under t ~ N(mean, Q1234).
inline Mat
gradhess_bracket(const Mat& p1, const Mat& p2, const Vec& y1, const Vec& y2,
                 const SmoothedPairMoments& m)
{
  const Vec a1 = p1 * (m.mean - y1);
  const Vec a2 = p2 * (m.mean - y2);
  return (p1 - p2) * m.cov * p2 + (a1 - a2) * a2.transpose() + p2;
}

//! log of the scalar prefactor |det Q3|^{-1/2} (4 pi)^{-d/2} shared by both
//! identities.
inline double
log_sq_prefactor(const Mat& q3)
{
  const auto l3 = spd_factor(q3, "Q3");
  const double d = static_cast<double>(q3.rows());
  return -0.5 * log_det_spd(l3) - 0.5 * d * std::log(4.0 * kPi);
}

//! (G_{y1,Q1} G_{y2,Q2}) * G_{Q3}^2 evaluated at x.
inline double
product_conv_sq(const GaussianComponent& g1, const GaussianComponent& g2,
                const Mat& q3, const Vec& x)
{
  detail::check_same_dim(g1.mean, x);
  const GaussianPair pair(g1, g2);
  const auto m = smoothed_pair_moments(pair.q12, pair.y12, 0.5 * q3, x);
  return std::exp(log_sq_prefactor(q3) + pair.log_overlap + m.log_value);
}

//! (grad G1 grad G2^T - G1 D^2 G2) * G_{Q3}^2 evaluated at x.
inline Mat
gradhess_conv_sq(const GaussianComponent& g1, const GaussianComponent& g2,
                 const Mat& q3, const Vec& x)
{
  detail::check_same_dim(g1.mean, x);
  const GaussianPair pair(g1, g2);
  const auto m = smoothed_pair_moments(pair.q12, pair.y12, 0.5 * q3, x);
  const double scale =
    std::exp(log_sq_prefactor(q3) + pair.log_overlap + m.log_value);
  return scale * gradhess_bracket(pair.p1, pair.p2, pair.y1, pair.y2, m);
}

} // namespace vkde
