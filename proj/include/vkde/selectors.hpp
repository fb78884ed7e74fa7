#pragma once

// Bandwidth selection rules Phi(rho, y, N) -> h behind one tagged
// configuration: fixed, power law in rho, Parzen (uni- and multivariate),
// and the axiomatic rule built on the adaptation function.

#include "adaptation.hpp"

#include <json.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vkde {

struct FixedSelector
{
  double h = 1.0;
  std::optional<Mat> matrix; //!< overrides h * I when set
};

struct PowerLawSelector
{
  double beta = 0.5;
  double c = 1.0;
};

struct ParzenUniSelector
{
  double ck = 8.0 * std::sqrt(kPi);
};

struct ParzenMultiSelector
{
  double eig_tol = 1e-8;
  double scale = 1.0; //!< overall multiplier, tuned by MISE search
};

struct AxiomaticSelector
{
  double kappa = 1.0;
  AdaptationConfig adaptation;
};

using SelectorConfig = std::variant<FixedSelector,
                                    PowerLawSelector,
                                    ParzenUniSelector,
                                    ParzenMultiSelector,
                                    AxiomaticSelector>;

inline std::string
selector_kind(const SelectorConfig& cfg)
{
  static const char* names[] = {
    "fixed", "power_law", "parzen1d", "parzen_multi", "axiomatic"
  };
  return names[cfg.index()];
}

inline void
validate(const SelectorConfig& cfg)
{
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string(what) + " must be positive and finite");
    }
  };
  std::visit(
    [&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, FixedSelector>) {
        positive(s.h, "fixed bandwidth h");
      } else if constexpr (std::is_same_v<T, PowerLawSelector>) {
        positive(s.beta, "power-law beta");
        positive(s.c, "power-law c");
      } else if constexpr (std::is_same_v<T, ParzenUniSelector>) {
        positive(s.ck, "Parzen C(K)");
      } else if constexpr (std::is_same_v<T, ParzenMultiSelector>) {
        positive(s.eig_tol, "Parzen eig_tol");
        positive(s.scale, "Parzen scale");
      } else {
        positive(s.kappa, "axiomatic kappa");
        s.adaptation.validate();
      }
    },
    cfg);
}

// ---------------------------------------------------------------- constants

//! C(K) = int K^2 / (int t^2 K^2)^2 for the one-dimensional restriction.
inline double
kernel_constant_CK(const KernelSpec& k)
{
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  const double a = std::isfinite(k.support) ? k.support : inf;
  auto k2 = [&](double t) {
    const double v = k.profile(t * t, 1);
    return v * v;
  };
  const double r0 = 2.0 * gauss_kronrod<double, 61>::integrate(k2, 0.0, a, 15,
                                                                1e-13);
  const double r2 =
    2.0 * gauss_kronrod<double, 61>::integrate(
            [&](double t) { return t * t * k2(t); }, 0.0, a, 15, 1e-13);
  if (!std::isfinite(r0) || !std::isfinite(r2) || !(r2 > 0.0)) {
    throw DomainError("kernel moments for C(K) diverge");
  }
  return r0 / (r2 * r2);
}

//! R(K) = int K^2 over R^d, by radial quadrature.
inline double
kernel_roughness_RK(const KernelSpec& k, int d)
{
  using boost::math::quadrature::gauss_kronrod;
  check_dim(d);
  const double inf = std::numeric_limits<double>::infinity();
  const double a = std::isfinite(k.support) ? k.support : inf;
  const double sphere = 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
  const double v = gauss_kronrod<double, 61>::integrate(
    [&](double r) {
      const double p = k.profile(r * r, d);
      return std::pow(r, d - 1) * p * p;
    },
    0.0, a, 15, 1e-13);
  if (!std::isfinite(v)) {
    throw DomainError("kernel roughness diverges");
  }
  return sphere * v;
}

inline double
gaussian_roughness(int d)
{
  return std::pow(4.0 * kPi, -0.5 * d);
}

// ---------------------------------------------------------------- rules

namespace detail {

inline double
positive_density(const DensityAccess& rho, const Vec& y)
{
  const double v = rho.value(y);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError("density is not positive at the selection point");
  }
  return v;
}

inline double
rate(std::size_t n, int d, int order)
{
  if (n == 0) {
    throw DomainError("sample count must be positive");
  }
  return std::pow(static_cast<double>(n), -1.0 / (d + order));
}

} // namespace detail

inline Mat
select_fixed(int d, const FixedSelector& s)
{
  if (s.matrix) {
    if (s.matrix->rows() != d || s.matrix->cols() != d) {
      throw DomainError("fixed bandwidth matrix has wrong dimension");
    }
    return *s.matrix;
  }
  return s.h * identity(d);
}

//! h = c N^{-1/(d+4)} rho(y)^{-beta} I.
inline Mat
select_power_law(const DensityAccess& rho, const Vec& y, std::size_t n,
                 double beta, double c)
{
  const int d = rho.dim();
  const double f = detail::positive_density(rho, y);
  return c * detail::rate(n, d, 4) * std::pow(f, -beta) * identity(d);
}

//! h = (C(K) rho / (N rho''^2))^{1/5}.
inline Mat
select_parzen_1d(const DensityAccess& rho, const Vec& y, std::size_t n,
                 double ck)
{
  if (rho.dim() != 1) {
    throw DomainError("univariate Parzen rule needs d = 1");
  }
  const double f = detail::positive_density(rho, y);
  const double f2 = rho.hessian(y)(0, 0);
  if (!(f2 != 0.0)) {
    throw DomainError("second derivative vanishes at the selection point");
  }
  return Mat::Constant(
    1, 1, std::pow(ck * f / (static_cast<double>(n) * f2 * f2), 0.2));
}

enum class HessianCase
{
  definite,
  indefinite,
  semidefinite
};

struct HessianShape
{
  HessianCase kind;
  //! Case 1 / 3: +1 or -1 so that sign * H is positive definite after the
  //! zero eigenvalues are lifted. Unused for Case 2.
  double sign = 1.0;
  Mat u;       //!< orthonormal eigenvectors
  Vec lambda;  //!< eigenvalues with zeros lifted to +-floor
};

//! Classifies D^2 rho by eigenvalue signs; |eigenvalues| below
//! eig_tol * max|eigenvalue| count as zero.
inline HessianShape
classify_hessian(const Mat& h, double eig_tol)
{
  const int d = static_cast<int>(h.rows());
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(h));
  HessianShape out{ HessianCase::definite, 1.0, es.eigenvectors(),
                    es.eigenvalues() };
  const double big = out.lambda.cwiseAbs().maxCoeff();
  if (!(big > 0.0) || !std::isfinite(big)) {
    throw DomainError("Hessian vanishes at the selection point");
  }
  const double floor = eig_tol * big;
  int pos = 0, neg = 0, zero = 0;
  for (int i = 0; i < d; ++i) {
    if (out.lambda(i) > floor)
      ++pos;
    else if (out.lambda(i) < -floor)
      ++neg;
    else
      ++zero;
  }
  if (pos > 0 && neg > 0) {
    out.kind = HessianCase::indefinite;
    for (int i = 0; i < d; ++i)
      if (std::abs(out.lambda(i)) <= floor)
        out.lambda(i) = floor;
    return out;
  }
  out.sign = pos > 0 ? 1.0 : -1.0;
  out.kind = zero > 0 ? HessianCase::semidefinite : HessianCase::definite;
  for (int i = 0; i < d; ++i)
    if (std::abs(out.lambda(i)) <= floor)
      out.lambda(i) = out.sign * floor;
  return out;
}

//! Unit-determinant B with tr(B^T H B) = 0 for an indefinite H: positive
//! eigen-directions get delta_j^{-1/2}, the negative ones share
//! delta^{-1/2} with delta = (sum of negated negative eigenvalues) / k,
//! k the number of positive eigenvalues.
inline Mat
parzen_case2_shape(const HessianShape& s)
{
  const int d = static_cast<int>(s.lambda.size());
  int k = 0;
  double neg_sum = 0.0;
  for (int i = 0; i < d; ++i) {
    if (s.lambda(i) > 0.0)
      ++k;
    else
      neg_sum -= s.lambda(i);
  }
  if (k == 0 || k == d) {
    throw DomainError("Case 2 shape needs an indefinite Hessian");
  }
  const double delta = neg_sum / k;
  Vec diag(d);
  for (int i = 0; i < d; ++i) {
    diag(i) = s.lambda(i) > 0.0 ? 1.0 / std::sqrt(s.lambda(i))
                                : 1.0 / std::sqrt(delta);
  }
  const double log_det = diag.array().log().sum();
  diag *= std::exp(-log_det / d);
  return symmetrize(s.u * diag.asDiagonal() * s.u.transpose());
}

inline Mat
parzen_case2_shape(const Mat& h, double eig_tol = 1e-8)
{
  return parzen_case2_shape(classify_hessian(h, eig_tol));
}

//! Minimizer of rho R / (N l^d) + (l^4 D4 / 24)^2 over l > 0.
inline double
parzen_optimal_lambda(double f, double r_k, std::size_t n, int d, double d4)
{
  if (!(d4 != 0.0) || !std::isfinite(d4)) {
    throw DomainError("fourth-order bias term vanishes; Case 2 undefined");
  }
  return std::pow(72.0 * d * f * r_k / (static_cast<double>(n) * d4 * d4),
                  1.0 / (d + 8));
}

inline Mat
select_parzen_multi(const DensityAccess& rho, const Vec& y, std::size_t n,
                    double eig_tol, double scale = 1.0)
{
  const int d = rho.dim();
  const double f = detail::positive_density(rho, y);
  const double r_k = gaussian_roughness(d);
  const auto shape = classify_hessian(rho.hessian(y), eig_tol);
  if (shape.kind == HessianCase::indefinite) {
    const Mat b = parzen_case2_shape(shape);
    const double lam =
      parzen_optimal_lambda(f, r_k, n, d, rho.delta4(y, b));
    return scale * lam * b;
  }
  // Case 1, and Case 3 after lifting the zero eigenvalues.
  const Vec ev = shape.sign * shape.lambda;
  const double abs_det = ev.prod();
  const double s = std::pow(f * r_k * std::sqrt(abs_det) /
                              (d * static_cast<double>(n)),
                            1.0 / (d + 4));
  const Vec inv_root = ev.array().rsqrt();
  return scale * s *
         symmetrize(shape.u * inv_root.asDiagonal() * shape.u.transpose());
}

//! h = N^{-1/(d+4)} |kappa rho / det mu|^{-1/(d+4)} mu^{-1}.
inline Mat
axiomatic_from_mu(const Mat& mu, double f, std::size_t n, double kappa)
{
  const int d = static_cast<int>(mu.rows());
  const double det_mu = mu.determinant();
  const double s =
    detail::rate(n, d, 4) * std::pow(std::abs(kappa * f / det_mu), -1.0 / (d + 4));
  return symmetrize(s * spd_factor(mu, "mu").solve(identity(d)));
}

inline Mat
select_axiomatic(const DensityAccess& rho, const Vec& y, std::size_t n,
                 const AxiomaticSelector& cfg)
{
  const double f = detail::positive_density(rho, y);
  const auto r = mu_fixed_point(rho, y, cfg.adaptation);
  if (!r.converged) {
    throw DomainError("adaptation fixed point did not converge (residual " +
                      std::to_string(r.residual) + ")");
  }
  return axiomatic_from_mu(r.mu, f, n, cfg.kappa);
}

//! Bandwidths at every point of ys. For the axiomatic rule the adaptation
//! solver is built once and, when mu_cache is given, each solve starts from
//! the cached mu^2 of the same point (the cache is updated in place).
//! Failures are rethrown with the index of the offending point.
inline std::vector<Mat>
select_bandwidths(const SelectorConfig& cfg, const DensityAccess& rho,
                  const std::vector<Vec>& ys, std::size_t n_total,
                  std::vector<Mat>* mu_cache = nullptr)
{
  validate(cfg);
  std::vector<Mat> out;
  out.reserve(ys.size());
  std::unique_ptr<AdaptationSolver> solver;
  if (const auto* ax = std::get_if<AxiomaticSelector>(&cfg)) {
    solver = make_adaptation_solver(rho, ax->adaptation);
    if (mu_cache && mu_cache->size() != ys.size()) {
      mu_cache->assign(ys.size(), Mat());
    }
  }
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const Vec& y = ys[i];
    try {
      out.push_back(std::visit(
        [&](const auto& s) -> Mat {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, FixedSelector>) {
            return select_fixed(rho.dim(), s);
          } else if constexpr (std::is_same_v<T, PowerLawSelector>) {
            return select_power_law(rho, y, n_total, s.beta, s.c);
          } else if constexpr (std::is_same_v<T, ParzenUniSelector>) {
            return select_parzen_1d(rho, y, n_total, s.ck);
          } else if constexpr (std::is_same_v<T, ParzenMultiSelector>) {
            return select_parzen_multi(rho, y, n_total, s.eig_tol, s.scale);
          } else {
            const double f = detail::positive_density(rho, y);
            std::optional<Mat> init;
            if (mu_cache && (*mu_cache)[i].size() > 0)
              init = (*mu_cache)[i];
            auto r = solver->solve(y, s.adaptation, init);
            if (!r.converged && init) {
              r = solver->solve(y, s.adaptation);
            }
            if (!r.converged) {
              throw DomainError(
                "adaptation fixed point did not converge (residual " +
                std::to_string(r.residual) + ")");
            }
            if (mu_cache)
              (*mu_cache)[i] = r.mu_squared;
            return axiomatic_from_mu(r.mu, f, n_total, s.kappa);
          }
        },
        cfg));
    } catch (const DomainError& e) {
      throw DomainError("selection failed at point " + std::to_string(i) +
                          ": " + e.what(),
                        i);
    }
  }
  return out;
}

inline Mat
select_at(const SelectorConfig& cfg, const DensityAccess& rho, const Vec& y,
          std::size_t n_total)
{
  return select_bandwidths(cfg, rho, { y }, n_total).front();
}

// ------------------------------------------------- tuning-constant algebra

//! The constant each rule exposes for MISE tuning: h for fixed, c for the
//! power law, C(K) for univariate Parzen, the scale for multivariate
//! Parzen, kappa for the axiomatic rule.
inline double
tuning_constant(const SelectorConfig& cfg)
{
  return std::visit(
    [](const auto& s) -> double {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, FixedSelector>)
        return s.h;
      else if constexpr (std::is_same_v<T, PowerLawSelector>)
        return s.c;
      else if constexpr (std::is_same_v<T, ParzenUniSelector>)
        return s.ck;
      else if constexpr (std::is_same_v<T, ParzenMultiSelector>)
        return s.scale;
      else
        return s.kappa;
    },
    cfg);
}

inline SelectorConfig
with_tuning_constant(SelectorConfig cfg, double v)
{
  std::visit(
    [v](auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, FixedSelector>) {
        s.h = v;
        if (s.matrix)
          throw ConfigError("matrix fixed bandwidth has no scalar constant");
      } else if constexpr (std::is_same_v<T, PowerLawSelector>)
        s.c = v;
      else if constexpr (std::is_same_v<T, ParzenUniSelector>)
        s.ck = v;
      else if constexpr (std::is_same_v<T, ParzenMultiSelector>)
        s.scale = v;
      else
        s.kappa = v;
    },
    cfg);
  return cfg;
}

//! Every rule's output is an exact power of its tuning constant, so
//! changing the constant from `from` to `to` multiplies all bandwidths by
//! this factor.
inline double
tuning_factor(const SelectorConfig& cfg, int d, double from, double to)
{
  const double r = to / from;
  switch (cfg.index()) {
    case 2:
      return std::pow(r, 0.2);
    case 4:
      return std::pow(r, -1.0 / (d + 4));
    default:
      return r;
  }
}

// ---------------------------------------------------------------- JSON

//! Parses the "selector" object. Unknown keys and keys that do not apply
//! to the chosen kind are rejected.
inline SelectorConfig
selector_from_json(const nlohmann::json& j)
{
  if (!j.is_object()) {
    throw ConfigError("selector must be an object");
  }
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw ConfigError("selector.kind is required");
  }
  const std::string kind = j["kind"].get<std::string>();
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j.items()) {
      bool ok = k == "kind";
      for (const char* a : keys)
        ok = ok || k == a;
      if (!ok) {
        throw ConfigError("unknown key selector." + k + " for kind " + kind);
      }
      if (k != "kind" && !v.is_number()) {
        throw ConfigError("selector." + k + " must be a number");
      }
    }
  };
  auto num = [&](const char* k, double dflt) {
    return j.contains(k) ? j[k].get<double>() : dflt;
  };
  SelectorConfig out;
  if (kind == "fixed") {
    allow({ "c" });
    out = FixedSelector{ num("c", 1.0), std::nullopt };
  } else if (kind == "power_law") {
    allow({ "beta", "c" });
    out = PowerLawSelector{ num("beta", 0.5), num("c", 1.0) };
  } else if (kind == "parzen1d") {
    allow({ "c" });
    out = ParzenUniSelector{ num("c", 8.0 * std::sqrt(kPi)) };
  } else if (kind == "parzen_multi") {
    allow({ "c" });
    out = ParzenMultiSelector{ 1e-8, num("c", 1.0) };
  } else if (kind == "axiomatic") {
    allow({ "kappa", "lambda" });
    AxiomaticSelector a;
    a.kappa = num("kappa", 1.0);
    a.adaptation.lambda = num("lambda", 1.0);
    out = a;
  } else {
    throw ConfigError("unknown selector.kind '" + kind + "'");
  }
  try {
    validate(out);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("selector: ") + e.what());
  }
  return out;
}

inline nlohmann::json
selector_to_json(const SelectorConfig& cfg)
{
  nlohmann::json j;
  j["kind"] = selector_kind(cfg);
  std::visit(
    [&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, FixedSelector>)
        j["c"] = s.h;
      else if constexpr (std::is_same_v<T, PowerLawSelector>) {
        j["beta"] = s.beta;
        j["c"] = s.c;
      } else if constexpr (std::is_same_v<T, ParzenUniSelector>)
        j["c"] = s.ck;
      else if constexpr (std::is_same_v<T, ParzenMultiSelector>)
        j["c"] = s.scale;
      else {
        j["kappa"] = s.kappa;
        j["lambda"] = s.adaptation.lambda;
      }
    },
    cfg);
  return j;
}

} // namespace vkde
