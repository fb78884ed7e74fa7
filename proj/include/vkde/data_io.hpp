#pragma once

// Seeded samplers, sample-set text files, and earthquake catalogue
// ingestion.
//
// Random numbers come from std::mt19937_64 (fully specified by the C++
// standard). Doubles are formed as (x >> 11) * 2^-53 and normals by
// Box-Muller, so streams are reproducible across standard libraries.
// Child streams are seeded with splitmix64(seed ^ splitmix64(index + 1)).

#include "density_model.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace vkde {

inline std::uint64_t
splitmix64(std::uint64_t z)
{
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

//! Seed of the index-th child stream (replication, sub-task, ...).
inline std::uint64_t
derive_seed(std::uint64_t seed, std::uint64_t index)
{
  return splitmix64(seed ^ splitmix64(index + 1));
}

class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : gen_(seed)
  {}

  //! Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  std::uint64_t next() { return gen_(); }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

//! x1 ~ N(0, sigma^2), x2 | x1 ~ N(alpha (x1/sigma)^2, 1).
inline SampleSet
sample_banana(std::size_t n, double alpha, double sigma, std::uint64_t seed)
{
  if (n == 0 || !(sigma > 0.0)) {
    throw DomainError("banana sampler needs n >= 1 and sigma > 0");
  }
  Rng rng(seed);
  std::vector<Vec> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    Vec x(2);
    x << sigma * z1, alpha * z1 * z1 + z2;
    pts.push_back(x);
  }
  return { 2, std::move(pts) };
}

inline SampleSet
sample_mixture(std::size_t n, const GaussianMixture& m, std::uint64_t seed)
{
  if (n == 0) {
    throw DomainError("mixture sampler needs n >= 1");
  }
  const double total = m.total_weight();
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("mixture sampler needs weights summing to 1");
  }
  std::vector<Eigen::LLT<Mat>> roots;
  for (const auto& c : m.components())
    roots.push_back(spd_factor(c.cov, "component covariance"));
  Rng rng(seed);
  const int d = m.dim();
  std::vector<Vec> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < m.size() && u >= m.weights()[k]) {
      u -= m.weights()[k];
      ++k;
    }
    Vec z(d);
    for (int j = 0; j < d; ++j)
      z(j) = rng.normal();
    pts.push_back(m.components()[k].mean + Mat(roots[k].matrixL()) * z);
  }
  return { d, std::move(pts) };
}

// ---------------------------------------------------------------- text I/O

namespace detail {

inline std::string_view
trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

//! Comma/semicolon-delimited when the line contains either, whitespace
//! delimited otherwise.
inline std::vector<std::string_view>
split_fields(std::string_view line)
{
  std::vector<std::string_view> out;
  line = trim(line);
  if (line.empty())
    return out;
  if (line.find_first_of(",;") != std::string_view::npos) {
    std::size_t start = 0;
    for (;;) {
      const auto end = line.find_first_of(",;", start);
      out.push_back(trim(line.substr(start, end - start)));
      if (end == std::string_view::npos)
        break;
      start = end + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t')
      ++j;
    if (j > i)
      out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool
parse_double(std::string_view s, double& v)
{
  if (s.empty())
    return false;
  if (s.front() == '+')
    s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::string_view
strip_comment(std::string_view line)
{
  const auto hash = line.find('#');
  if (hash != std::string_view::npos)
    line = line.substr(0, hash);
  while (!line.empty() && (line.back() == ' ' || line.back() == '\t' ||
                           line.back() == '\r'))
    line.remove_suffix(1);
  return line;
}

} // namespace detail

//! Reads whitespace-, comma- or semicolon-separated rows of d numbers. Lines
//! starting with '#' and blank lines are skipped; a first data row with a
//! non-numeric field is taken as a header.
inline SampleSet
load_samples(std::istream& in)
{
  std::vector<Vec> pts;
  int d = 0;
  std::string line;
  std::size_t lineno = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::strip_comment(line);
    const auto fields = detail::split_fields(body);
    if (fields.empty())
      continue;
    std::vector<double> vals(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (!detail::parse_double(fields[i], vals[i])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (!seen_row) {
        seen_row = true; // header
        continue;
      }
      throw ParseError("non-numeric field in sample row", lineno);
    }
    seen_row = true;
    if (d == 0) {
      d = static_cast<int>(vals.size());
      if (d > kMaxDim) {
        throw ParseError("too many columns (max " + std::to_string(kMaxDim) +
                           ")",
                         lineno);
      }
    } else if (static_cast<int>(vals.size()) != d) {
      throw ParseError("ragged row: expected " + std::to_string(d) +
                         " columns, found " + std::to_string(vals.size()),
                       lineno);
    }
    Vec x(d);
    for (int i = 0; i < d; ++i)
      x(i) = vals[i];
    if (!x.allFinite()) {
      throw ParseError("non-finite value", lineno);
    }
    pts.push_back(x);
  }
  if (pts.empty()) {
    throw ParseError("sample file contains no data rows");
  }
  return { d, std::move(pts) };
}

inline SampleSet
load_samples(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::ios_base::failure("cannot open " + path);
  }
  return load_samples(in);
}

//! Writes comma-separated rows with 17 significant digits, so a load
//! reproduces every value exactly.
inline void
save_samples(const SampleSet& s, std::ostream& out,
             const std::string& header_comment = {})
{
  if (!header_comment.empty())
    out << "# " << header_comment << '\n';
  out << std::setprecision(17);
  for (const auto& x : s.points) {
    for (int i = 0; i < x.size(); ++i) {
      if (i)
        out << ',';
      out << x(i);
    }
    out << '\n';
  }
}

inline void
save_samples(const SampleSet& s, const std::string& path,
             const std::string& header_comment = {})
{
  std::ofstream out(path);
  if (!out) {
    throw std::ios_base::failure("cannot write " + path);
  }
  save_samples(s, out, header_comment);
  if (!out) {
    throw std::ios_base::failure("write failed: " + path);
  }
}

// ---------------------------------------------------------------- quakes

struct QuakeFilter
{
  double min_magnitude = 6.2;
  double lat_min = -90.0, lat_max = 90.0;
  double lon_min = -180.0, lon_max = 180.0;

  void validate() const
  {
    if (!(lat_min <= lat_max) || !(lon_min <= lon_max)) {
      throw ConfigError("quake filter ranges must be nonempty");
    }
  }
};

//! East Asia and the Western Pacific: latitude [-15, 60], longitude
//! [90, 180], magnitude > 6.2.
inline QuakeFilter
east_asia_pacific_filter()
{
  return { 6.2, -15.0, 60.0, 90.0, 180.0 };
}

//! Zero-based column indices of magnitude, latitude and longitude.
struct QuakeColumns
{
  std::size_t mag = 0, lat = 1, lon = 2;
};

struct QuakeLoad
{
  SampleSet samples; //!< (longitude, latitude)
  std::size_t rows = 0;
};

//! Keeps rows with magnitude > min_magnitude inside both coordinate ranges.
//! Header and comment lines are skipped as in load_samples; a data row
//! lacking one of the mapped columns is a parse error.
inline QuakeLoad
load_quakes(std::istream& in, const QuakeFilter& filter,
            const QuakeColumns& cols = {})
{
  filter.validate();
  const std::size_t need = std::max({ cols.mag, cols.lat, cols.lon }) + 1;
  std::vector<Vec> pts;
  std::string line;
  std::size_t lineno = 0, rows = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = detail::split_fields(detail::strip_comment(line));
    if (fields.empty())
      continue;
    if (fields.size() < need) {
      if (!seen_row) {
        seen_row = true;
        continue;
      }
      throw ParseError("missing columns: need " + std::to_string(need) +
                         ", found " + std::to_string(fields.size()),
                       lineno);
    }
    double mag, lat, lon;
    const bool ok = detail::parse_double(fields[cols.mag], mag) &&
                    detail::parse_double(fields[cols.lat], lat) &&
                    detail::parse_double(fields[cols.lon], lon);
    if (!ok) {
      if (!seen_row) {
        seen_row = true;
        continue;
      }
      throw ParseError("non-numeric magnitude or coordinate", lineno);
    }
    seen_row = true;
    ++rows;
    if (mag > filter.min_magnitude && lat >= filter.lat_min &&
        lat <= filter.lat_max && lon >= filter.lon_min &&
        lon <= filter.lon_max) {
      Vec x(2);
      x << lon, lat;
      pts.push_back(x);
    }
  }
  if (pts.empty()) {
    throw DomainError("quake filter selected no events");
  }
  return { SampleSet(2, std::move(pts)), rows };
}

inline QuakeLoad
load_quakes(const std::string& path, const QuakeFilter& filter,
            const QuakeColumns& cols = {})
{
  std::ifstream in(path);
  if (!in) {
    throw std::ios_base::failure("cannot open " + path);
  }
  return load_quakes(in, filter, cols);
}

} // namespace vkde
