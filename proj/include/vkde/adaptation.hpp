#pragma once

// The adaptation function mu_f of a density f is defined implicitly by
//
//   mu^2(x) = [(grad f grad f^T - f D^2 f) * G^2_{Q(x)}](x)
//             / [(2 - lambda^2) (f^2 * G^2_{Q(x)})](x),   Q(x) = (lambda mu(x))^-2
//
// and solved pointwise for mu^2 (Newton with a damped fixed-point fallback). For
// Gaussian mixtures both convolutions are closed form (sums over ordered
// pairs of components); for other densities they are computed by tensor
// Gauss-Hermite quadrature in the coordinates of the smoothing Gaussian.

#include "density_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vkde {

struct AdaptationConfig
{
  double lambda = 1.0;
  double tol = 1e-10;
  int max_iter = 200;
  double damping = 0.5;
  //! Gauss-Hermite nodes per axis for non-mixture densities.
  int quadrature_order = 32;

  void validate() const
  {
    if (!(lambda > 0.0 && lambda < std::sqrt(2.0))) {
      throw ConfigError("adaptation lambda must lie in (0, sqrt 2)");
    }
    if (!(tol > 0.0)) {
      throw ConfigError("adaptation tol must be positive");
    }
    if (max_iter < 1) {
      throw ConfigError("adaptation max_iter must be positive");
    }
    if (!(damping > 0.0 && damping <= 1.0)) {
      throw ConfigError("adaptation damping must lie in (0, 1]");
    }
    if (quadrature_order < 2 || quadrature_order > 128) {
      throw ConfigError("adaptation quadrature_order must lie in [2, 128]");
    }
  }
};

struct AdaptationResult
{
  Vec x;
  Mat mu;         //!< principal square root of mu_squared
  Mat mu_squared; //!< symmetric positive definite
  int iterations = 0;
  bool converged = false;
  //! ||ratio(mu^2) - mu^2||_F / ||mu^2||_F at the returned mu^2.
  double residual = std::numeric_limits<double>::infinity();
  bool clamped = false; //!< eigenvalue floor active at the last update
  std::string error;    //!< set by mu_field when the solve threw
};

//! Fixed-point driver. Subclasses supply the right-hand side of the
//! implicit equation for a given current mu^2.
class AdaptationSolver
{
public:
  static constexpr double kNewtonRadius = 1e-2;

  virtual ~AdaptationSolver() = default;

  virtual int dim() const = 0;

  //! Right-hand side evaluated with smoothing covariance lambda^-2 mu_sq^-1.
  virtual Mat ratio(const Vec& x, const Mat& mu_sq, double lambda) const = 0;

  //! Affine-equivariant starting point: inverse covariance of the density.
  virtual Mat initial_mu_squared() const = 0;

  //! Damped fixed-point steps m <- (1 - delta) m + delta clamp(ratio(m))
  //! until the relative residual drops below kNewtonRadius, then Newton's
  //! method on G(m) = clamp(ratio(m)) - m over symmetric m with a
  //! forward-difference Jacobian and backtracking on ||G||. A Newton step
  //! that cannot reduce the residual falls back to a damped step; delta is
  //! halved whenever the residual grows.
  AdaptationResult solve(const Vec& x, const AdaptationConfig& cfg,
                         const std::optional<Mat>& init = std::nullopt) const
  {
    cfg.validate();
    const int d = dim();
    if (x.size() != d) {
      throw DomainError("adaptation point has wrong dimension");
    }
    const int p = d * (d + 1) / 2;
    auto vech = [&](const Mat& m) {
      Eigen::VectorXd v(p);
      int k = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i)
          v(k++) = m(i, j);
      return v;
    };
    auto unvech = [&](const Eigen::VectorXd& v) {
      Mat m(d, d);
      int k = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i)
          m(i, j) = m(j, i) = v(k++);
      return m;
    };
    struct Eval
    {
      Mat f;
      bool clamped = false;
      double residual = 0.0;
    };
    auto evaluate = [&](const Mat& m) {
      const Mat r = ratio(x, m, cfg.lambda);
      if (!r.allFinite()) {
        throw DomainError("adaptation ratio is not finite");
      }
      const auto c = clamp_eigenvalues(r, eigen_floor(m));
      return Eval{ c.matrix, c.clamped, rel_frobenius(c.matrix, m) };
    };
    auto try_evaluate = [&](const Mat& m) -> std::optional<Eval> {
      try {
        return evaluate(m);
      } catch (const DomainError&) {
        return std::nullopt;
      }
    };
    auto usable = [&](const Mat& m) {
      Eigen::LLT<Mat> llt(m);
      return m.allFinite() && llt.info() == Eigen::Success &&
             Eigen::SelfAdjointEigenSolver<Mat>(m).eigenvalues().minCoeff() >
               eigen_floor(m);
    };

    AdaptationResult res;
    res.x = x;
    Mat mu_sq = init ? *init : initial_mu_squared();
    Eval cur = evaluate(mu_sq);
    double delta = cfg.damping;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= cfg.max_iter; ++it) {
      res.iterations = it;
      res.residual = cur.residual;
      res.clamped = cur.clamped;
      if (cur.residual < cfg.tol) {
        res.converged = true;
        break;
      }
      bool stepped = false;
      const Eigen::VectorXd g = vech(cur.f - mu_sq);
      Eigen::MatrixXd jac(p, p);
      const double scale = mu_sq.norm();
      bool jac_ok = cur.residual < kNewtonRadius;
      for (int k = 0; k < p && jac_ok; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
        e(k) = 1e-7 * scale;
        const Mat m2 = unvech(vech(mu_sq) + e);
        if (!usable(m2)) {
          jac_ok = false;
          break;
        }
        const auto e2 = try_evaluate(m2);
        if (!e2) {
          jac_ok = false;
          break;
        }
        jac.col(k) = (vech(e2->f - m2) - g) / e(k);
      }
      if (jac_ok) {
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (lu.isInvertible()) {
          const Eigen::VectorXd step = lu.solve(-g);
          double t = 1.0;
          for (int bt = 0; bt < 6 && !stepped; ++bt, t *= 0.5) {
            const Mat trial = unvech(vech(mu_sq) + t * step);
            if (!usable(trial))
              continue;
            const auto e2 = try_evaluate(trial);
            if (e2 && e2->residual < cur.residual) {
              mu_sq = trial;
              cur = *e2;
              stepped = true;
            }
          }
        }
      }
      if (!stepped) {
        if (cur.residual > prev && delta > 1.0 / 64.0) {
          delta *= 0.5;
        }
        mu_sq = symmetrize((1.0 - delta) * mu_sq + delta * cur.f);
        cur = evaluate(mu_sq);
      }
      prev = res.residual;
    }
    if (!res.converged && cur.residual < res.residual) {
      res.residual = cur.residual;
      res.clamped = cur.clamped;
      res.converged = cur.residual < cfg.tol;
    }
    res.mu_squared = mu_sq;
    res.mu = sqrt_spd(mu_sq);
    return res;
  }
};

//! Closed-form right-hand side for a weighted Gaussian mixture.
class MixtureAdaptation : public AdaptationSolver
{
public:
  explicit MixtureAdaptation(const GaussianMixture& m)
    : mixture_(m)
  {
    const std::size_t n = m.size();
    pairs_.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        const auto& ci = m.components()[i];
        const auto& cj = m.components()[j];
        Pair p;
        p.i = i;
        p.j = j;
        const GaussianPair gp(ci, cj);
        p.q12 = gp.q12;
        p.y12 = gp.y12;
        p.log_weight =
          std::log(m.weights()[i]) + std::log(m.weights()[j]) + gp.log_overlap;
        pairs_.push_back(std::move(p));
      }
    }
  }

  int dim() const override { return mixture_.dim(); }

  Mat initial_mu_squared() const override
  {
    return symmetrize(spd_factor(mixture_.covariance(), "mixture covariance")
                        .solve(identity(dim())));
  }

  Mat ratio(const Vec& x, const Mat& mu_sq, double lambda) const override
  {
    const int d = dim();
    const Mat q3 = symmetrize(spd_factor(mu_sq, "mu^2").solve(identity(d))) /
                   (lambda * lambda);
    const Mat q3_half = 0.5 * q3;
    Mat num = Mat::Zero(d, d);
    double den = 0.0;
    double max_log = -std::numeric_limits<double>::infinity();
    for (const auto& p : pairs_) {
      const auto mom = smoothed_pair_moments(p.q12, p.y12, q3_half, x);
      const double le = p.log_weight + mom.log_value;
      if (!(le > -std::numeric_limits<double>::infinity())) {
        continue;
      }
      if (le > max_log) {
        const double s = std::exp(max_log - le);
        num *= s;
        den *= s;
        max_log = le;
      }
      const double w = std::exp(le - max_log);
      const Mat& pi = mixture_.precision(p.i);
      if (p.i == p.j) {
        num += w * pi;
        den += w;
      } else {
        const Mat& pj = mixture_.precision(p.j);
        const Vec& yi = mixture_.components()[p.i].mean;
        const Vec& yj = mixture_.components()[p.j].mean;
        num += w * (gradhess_bracket(pi, pj, yi, yj, mom) +
                    gradhess_bracket(pj, pi, yj, yi, mom));
        den += 2.0 * w;
      }
    }
    if (!(den > 0.0)) {
      throw DomainError("adaptation denominator vanished");
    }
    return symmetrize(num) / ((2.0 - lambda * lambda) * den);
  }

private:
  struct Pair
  {
    std::size_t i, j;
    double log_weight; // log(w_i w_j G_{Qi+Qj}(y_i - y_j))
    Mat q12;
    Vec y12;
  };

  GaussianMixture mixture_;
  std::vector<Pair> pairs_;
};

//! Nodes and weights of the n-point Gauss-Hermite rule for the standard
//! normal weight (weights sum to one), by the Golub-Welsch eigenproblem.
struct HermiteRule
{
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit HermiteRule(int n)
  {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
      jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    nodes.resize(n);
    weights.resize(n);
    for (int k = 0; k < n; ++k) {
      nodes[k] = es.eigenvalues()(k);
      weights[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    }
  }
};

//! Quadrature right-hand side for densities without mixture structure.
//! The smoothing Gaussian G^2_Q is proportional to G_{Q/2}, so both
//! convolutions are expectations over x + (Q/2)^{1/2} z, z standard normal.
class QuadratureAdaptation : public AdaptationSolver
{
public:
  QuadratureAdaptation(const DensityAccess& rho, int order)
    : rho_(rho)
  {
    const HermiteRule rule(order);
    const int d = rho.dim();
    std::size_t total = 1;
    for (int i = 0; i < d; ++i)
      total *= static_cast<std::size_t>(order);
    nodes_.reserve(total);
    weights_.reserve(total);
    std::vector<int> idx(d, 0);
    for (std::size_t c = 0; c < total; ++c) {
      Vec z(d);
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        z(i) = rule.nodes[idx[i]];
        w *= rule.weights[idx[i]];
      }
      nodes_.push_back(z);
      weights_.push_back(w);
      for (int i = 0; i < d; ++i) {
        if (++idx[i] < order)
          break;
        idx[i] = 0;
      }
    }
  }

  int dim() const override { return rho_.dim(); }

  Mat initial_mu_squared() const override
  {
    return symmetrize(
      spd_factor(rho_.covariance(), "covariance").solve(identity(dim())));
  }

  Mat ratio(const Vec& x, const Mat& mu_sq, double lambda) const override
  {
    const int d = dim();
    const Mat q3 = symmetrize(spd_factor(mu_sq, "mu^2").solve(identity(d))) /
                   (lambda * lambda);
    const Mat root = sqrt_spd(0.5 * q3);
    Mat num = Mat::Zero(d, d);
    double den = 0.0;
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const Vec t = x + root * nodes_[q];
      const double f = rho_.value(t);
      const Vec g = rho_.gradient(t);
      const Mat h = rho_.hessian(t);
      num += weights_[q] * (g * g.transpose() - f * h);
      den += weights_[q] * f * f;
    }
    if (!(den > 0.0)) {
      throw DomainError("adaptation denominator vanished");
    }
    return symmetrize(num) / ((2.0 - lambda * lambda) * den);
  }

private:
  const DensityAccess& rho_;
  std::vector<Vec> nodes_;
  std::vector<double> weights_;
};

//! Closed form when rho is a Gaussian mixture, quadrature otherwise.
//! The returned solver may reference rho; keep rho alive while using it.
inline std::unique_ptr<AdaptationSolver>
make_adaptation_solver(const DensityAccess& rho, const AdaptationConfig& cfg)
{
  if (const auto* m = dynamic_cast<const GaussianMixture*>(&rho)) {
    return std::make_unique<MixtureAdaptation>(*m);
  }
  return std::make_unique<QuadratureAdaptation>(rho, cfg.quadrature_order);
}

inline AdaptationResult
mu_fixed_point(const DensityAccess& rho, const Vec& x,
               const AdaptationConfig& cfg = {})
{
  return make_adaptation_solver(rho, cfg)->solve(x, cfg);
}

inline AdaptationResult
mu_fixed_point(const VkdeEstimate& est, const Vec& x,
               const AdaptationConfig& cfg = {})
{
  return mu_fixed_point(est.mixture(), x, cfg);
}

//! Solves at every point, warm-starting each solve from the nearest point
//! solved so far. Failures are recorded per point, not thrown.
inline std::vector<AdaptationResult>
mu_field(const AdaptationSolver& solver, const std::vector<Vec>& points,
         const AdaptationConfig& cfg)
{
  std::vector<AdaptationResult> out;
  out.reserve(points.size());
  for (const auto& x : points) {
    std::optional<Mat> init;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& prev : out) {
      if (!prev.converged)
        continue;
      const double dist = (prev.x - x).squaredNorm();
      if (dist < best) {
        best = dist;
        init = prev.mu_squared;
      }
    }
    try {
      out.push_back(solver.solve(x, cfg, init));
    } catch (const DomainError& e) {
      AdaptationResult r;
      r.x = x;
      r.error = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline std::vector<AdaptationResult>
mu_field(const DensityAccess& rho, const std::vector<Vec>& points,
         const AdaptationConfig& cfg = {})
{
  return mu_field(*make_adaptation_solver(rho, cfg), points, cfg);
}

} // namespace vkde
