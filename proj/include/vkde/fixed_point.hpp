#pragma once

// Self-consistent bandwidths: h^(k+1)_n = Phi_N(MM_K[Y, h^(k)], y_n),
// started from wide equal bandwidths.

#include "selectors.hpp"

#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vkde {

struct FpiError
{
  int step = 0;          //!< step that failed (1-based)
  std::size_t index = 0; //!< sample whose selection failed
  std::string message;
};

struct FpiTrace
{
  std::vector<std::vector<Mat>> iterates; //!< h^(0), ..., h^(steps)
  std::vector<double> residuals;          //!< one per completed step
  bool converged = false;
  int steps = 0;
  std::optional<FpiError> error;

  const std::vector<Mat>& last() const { return iterates.back(); }
};

//! h^0 = N^{-1/(d+4)} * (mean marginal standard deviation) * I.
inline std::vector<Mat>
silverman_init(const SampleSet& s)
{
  s.validate();
  const int d = s.dim;
  const auto n = s.size();
  if (n < 2) {
    throw DomainError("default initial bandwidth needs at least 2 samples");
  }
  Vec mean = Vec::Zero(d);
  for (const auto& y : s.points)
    mean += y;
  mean /= static_cast<double>(n);
  Vec var = Vec::Zero(d);
  for (const auto& y : s.points)
    var += (y - mean).cwiseAbs2();
  var /= static_cast<double>(n - 1);
  const double sd = var.cwiseSqrt().mean();
  if (!(sd > 0.0)) {
    throw DomainError("samples have zero spread");
  }
  const double h = std::pow(static_cast<double>(n), -1.0 / (d + 4)) * sd;
  return std::vector<Mat>(n, h * identity(d));
}

inline double
max_relative_change(const std::vector<Mat>& next, const std::vector<Mat>& prev)
{
  double r = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i)
    r = std::max(r, rel_frobenius(next[i], prev[i]));
  return r;
}

//! Runs up to `steps` steps, stopping once the residual (largest relative
//! Frobenius change of any h_n) drops below tol. A selection failure ends
//! the run; the trace so far is returned with the error recorded.
inline FpiTrace
iterate_bandwidths(const SampleSet& samples, const SelectorConfig& selector,
                   std::vector<Mat> init, int steps, double tol = 1e-6)
{
  validate(selector);
  if (steps < 0) {
    throw ConfigError("steps must be non-negative");
  }
  FpiTrace trace;
  // Validates init against the samples before the first step.
  { VkdeEstimate check(samples, init); }
  trace.iterates.push_back(std::move(init));
  std::vector<Mat> mu_cache;
  for (int k = 1; k <= steps; ++k) {
    const VkdeEstimate est(samples, trace.iterates.back());
    std::vector<Mat> next;
    try {
      next = select_bandwidths(selector, est.mixture(), samples.points,
                               samples.size(), &mu_cache);
    } catch (const DomainError& e) {
      trace.error = FpiError{ k, e.index().value_or(0), e.what() };
      break;
    }
    trace.residuals.push_back(max_relative_change(next, trace.iterates.back()));
    trace.iterates.push_back(std::move(next));
    trace.steps = k;
    if (trace.residuals.back() < tol) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

inline FpiTrace
iterate_bandwidths(const SampleSet& samples, const SelectorConfig& selector,
                   int steps, double tol = 1e-6)
{
  return iterate_bandwidths(samples, selector, silverman_init(samples), steps,
                            tol);
}

//! max_n ||h_n - Phi_N(MM_K[Y, h], y_n)||_F / ||Phi_N(...)||_F.
inline double
self_consistency_residual(const SampleSet& samples,
                          const SelectorConfig& selector,
                          const std::vector<Mat>& bandwidths)
{
  const VkdeEstimate est(samples, bandwidths);
  const auto next =
    select_bandwidths(selector, est.mixture(), samples.points, samples.size());
  double r = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i)
    r = std::max(r, rel_frobenius(bandwidths[i], next[i]));
  return r;
}

//! Rows "k,n,h_11,h_21,...,h_dd" (column-major vec of h_n).
inline void
write_trace_csv(const FpiTrace& t, std::ostream& out)
{
  if (t.iterates.empty())
    return;
  const int d = static_cast<int>(t.iterates.front().front().rows());
  out << "k,n";
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r)
      out << ",h_" << r + 1 << c + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < t.iterates.size(); ++k) {
    for (std::size_t n = 0; n < t.iterates[k].size(); ++n) {
      out << k << ',' << n;
      const Mat& h = t.iterates[k][n];
      for (int c = 0; c < d; ++c)
        for (int r = 0; r < d; ++r)
          out << ',' << h(r, c);
      out << '\n';
    }
  }
}

//! Rows "k,residual" for k = 1..steps.
inline void
write_residuals_csv(const FpiTrace& t, std::ostream& out)
{
  out << "k,residual\n" << std::setprecision(17);
  for (std::size_t k = 0; k < t.residuals.size(); ++k)
    out << k + 1 << ',' << t.residuals[k] << '\n';
}

} // namespace vkde
