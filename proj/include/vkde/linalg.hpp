#pragma once

#include "errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <sstream>
#include <string>

namespace vkde {

//! Largest supported dimension. Matrices are dynamically sized with a fixed
//! capacity so the inner loops never touch the heap.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double,
                          Eigen::Dynamic,
                          Eigen::Dynamic,
                          Eigen::ColMajor,
                          kMaxDim,
                          kMaxDim>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLog2Pi = 1.83787706640934548356;

inline void
check_dim(int d)
{
  if (d < 1 || d > kMaxDim) {
    throw DomainError("dimension " + std::to_string(d) +
                      " outside supported range [1, " +
                      std::to_string(kMaxDim) + "]");
  }
}

inline Mat
identity(int d)
{
  return Mat::Identity(d, d);
}

inline Mat
symmetrize(const Mat& m)
{
  return 0.5 * (m + m.transpose());
}

//! ||a - b||_F / ||b||_F, falling back to the absolute distance when b = 0.
inline double
rel_frobenius(const Mat& a, const Mat& b)
{
  const double nb = b.norm();
  const double diff = (a - b).norm();
  return nb > 0.0 ? diff / nb : diff;
}

inline double
rel_error(double a, double b)
{
  const double nb = std::abs(b);
  return nb > 0.0 ? std::abs(a - b) / nb : std::abs(a - b);
}

//! Symmetric positive definite factorization with a domain error on failure.
inline Eigen::LLT<Mat>
spd_factor(const Mat& m, const char* what = "matrix")
{
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    throw DomainError(std::string(what) + " is not symmetric positive definite");
  }
  return llt;
}

inline double
log_det_spd(const Eigen::LLT<Mat>& llt)
{
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

//! Eigenvalue floor used when clamping near-singular SPD matrices.
inline double
eigen_floor(const Mat& m)
{
  return 1e-12 * m.trace() / static_cast<double>(m.rows());
}

struct ClampResult
{
  Mat matrix;
  bool clamped = false;
};

//! Raises all eigenvalues of a symmetric matrix to at least `floor`.
inline ClampResult
clamp_eigenvalues(const Mat& m, double floor)
{
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw DomainError("eigen decomposition failed");
  }
  Vec ev = es.eigenvalues();
  bool clamped = false;
  for (int i = 0; i < ev.size(); ++i) {
    if (!(ev(i) >= floor)) {
      ev(i) = floor;
      clamped = true;
    }
  }
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return { symmetrize(out), clamped };
}

//! Principal square root of a symmetric positive definite matrix.
//!
//! Eigenvalues in (-eps, eps) with eps = 1e-12 * trace(M) / d are raised to
//! eps; anything more negative is reported as a domain error.
inline Mat
sqrt_spd(const Mat& m)
{
  if (m.rows() != m.cols()) {
    throw DomainError("sqrt_spd: matrix is not square");
  }
  if (!m.allFinite()) {
    throw DomainError("sqrt_spd: matrix has non-finite entries");
  }
  const double eps = eigen_floor(m);
  if (!(eps > 0.0)) {
    throw DomainError("sqrt_spd: trace is not positive");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  Vec ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) <= -eps) {
      std::ostringstream msg;
      msg << "sqrt_spd: matrix is indefinite, eigenvalues [";
      for (int j = 0; j < ev.size(); ++j) {
        msg << (j ? ", " : "") << ev(j);
      }
      msg << "]";
      throw DomainError(msg.str());
    }
    ev(i) = std::sqrt(std::max(ev(i), eps));
  }
  Mat s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return symmetrize(s);
}

//! Inverse principal square root, (M)^{-1/2}.
inline Mat
inv_sqrt_spd(const Mat& m)
{
  Mat s = sqrt_spd(m);
  return symmetrize(s.inverse());
}

//! Dense rank-4 tensor of fourth partial derivatives.
class Tensor4
{
public:
  explicit Tensor4(int d = 1)
    : d_(d)
  {
    check_dim(d);
    data_.fill(0.0);
  }

  int dim() const { return d_; }

  double& operator()(int i, int j, int k, int l)
  {
    return data_[((i * d_ + j) * d_ + k) * d_ + l];
  }
  double operator()(int i, int j, int k, int l) const
  {
    return data_[((i * d_ + j) * d_ + k) * d_ + l];
  }

  Tensor4& operator+=(const Tensor4& o)
  {
    for (std::size_t i = 0; i < data_.size(); ++i)
      data_[i] += o.data_[i];
    return *this;
  }
  Tensor4& operator*=(double s)
  {
    for (auto& v : data_)
      v *= s;
    return *this;
  }

private:
  int d_;
  std::array<double, kMaxDim * kMaxDim * kMaxDim * kMaxDim> data_;
};

//! Sum_{ijkl} T_ijkl (W_ij W_kl + W_ik W_jl + W_il W_jk) with W = h h.
inline double
contract_delta4(const Tensor4& t, const Mat& h)
{
  const int d = t.dim();
  const Mat w = h * h;
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
          s += t(i, j, k, l) *
               (w(i, j) * w(k, l) + w(i, k) * w(j, l) + w(i, l) * w(j, k));
  return s;
}

} // namespace vkde
