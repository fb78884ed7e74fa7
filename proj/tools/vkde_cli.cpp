// vkde: variable kernel density estimation from the command line.
//
//   vkde estimate   [--config F] [--samples F] [--out D] [--seed S] [--steps K] [--svg]
//   vkde iterate    ... same, writes every fixed-point step
//   vkde bench      [--config F] [--out D] [--seed S] [--steps K]
//   vkde invariance [--config F] [--out D]
//   vkde quakes     --samples F [--quake-cols MAG,LAT,LON] [--config F] [--out D] [--svg]
//
// Exit codes: 0 success, 1 invariance checks failed, 2 configuration error,
// 3 I/O or input-file error, 4 numerical failure.

#include <vkde/data_io.hpp>
#include <vkde/evaluation.hpp>
#include <vkde/fixed_point.hpp>
#include <vkde/plot.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vkde;

namespace {

enum ExitCode
{
  kOk = 0,
  kChecksFailed = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4
};

struct IoError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct NumericFailure : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct CliArgs
{
  std::string config;
  std::string samples;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  bool svg = false;
  std::string quake_cols;
};

struct RunConfig
{
  SelectorConfig selector = AxiomaticSelector{};
  std::optional<QuadratureGrid> grid;
  std::uint64_t seed = 1;
  int steps = 10;
  BenchmarkSpec bench;
  SvgOptions plot;
  std::optional<std::size_t> plot_kernels;
  QuakeFilter quake = east_asia_pacific_filter();
  QuakeColumns quake_cols;
  json effective;
};

// ---------------------------------------------------------------- config

void
allow_keys(const json& j, const std::string& where,
           std::initializer_list<const char*> keys)
{
  if (!j.is_object()) {
    throw ConfigError(where + " must be an object");
  }
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys)
      ok = ok || k == a;
    if (!ok) {
      throw ConfigError("unknown key " + (where.empty() ? k : where + "." + k));
    }
  }
}

template<typename T>
T
get_as(const json& j, const std::string& name)
{
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(name + " has the wrong type");
  }
}

std::vector<double>
number_array(const json& j, const std::string& name)
{
  if (!j.is_array() || j.empty()) {
    throw ConfigError(name + " must be a nonempty array of numbers");
  }
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) {
      throw ConfigError(name + " must contain numbers only");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

QuadratureGrid
grid_from_json(const json& j)
{
  allow_keys(j, "grid", { "min", "max", "steps" });
  if (!j.contains("min") || !j.contains("max") || !j.contains("steps")) {
    throw ConfigError("grid needs min, max and steps");
  }
  const auto lo = number_array(j["min"], "grid.min");
  const auto hi = number_array(j["max"], "grid.max");
  std::vector<int> steps;
  for (const auto& v : j["steps"]) {
    if (!v.is_number_integer()) {
      throw ConfigError("grid.steps must contain integers");
    }
    steps.push_back(v.get<int>());
  }
  return QuadratureGrid(lo, hi, steps);
}

json
grid_to_json(const QuadratureGrid& g)
{
  return { { "min", g.lo }, { "max", g.hi }, { "steps", g.steps } };
}

QuakeColumns
parse_quake_cols(const std::string& s)
{
  QuakeColumns c;
  std::size_t vals[3];
  std::istringstream in(s);
  std::string field;
  int k = 0;
  while (std::getline(in, field, ',')) {
    if (k >= 3 || field.empty() ||
        field.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--quake-cols expects MAG,LAT,LON column indices");
    }
    vals[k++] = std::stoul(field);
  }
  if (k != 3) {
    throw ConfigError("--quake-cols expects MAG,LAT,LON column indices");
  }
  c.mag = vals[0];
  c.lat = vals[1];
  c.lon = vals[2];
  return c;
}

RunConfig
load_config(const CliArgs& args)
{
  json j = json::object();
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) {
      throw IoError("cannot open config " + args.config);
    }
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  allow_keys(j, "", { "selector", "grid", "seed", "steps", "bench", "plot",
                      "quake" });
  RunConfig rc;
  if (j.contains("selector"))
    rc.selector = selector_from_json(j["selector"]);
  if (j.contains("grid"))
    rc.grid = grid_from_json(j["grid"]);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      throw ConfigError("seed must be a non-negative integer");
    }
    rc.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("steps")) {
    if (!j["steps"].is_number_integer() || j["steps"].get<long long>() < 0) {
      throw ConfigError("steps must be a non-negative integer");
    }
    rc.steps = j["steps"].get<int>();
  }
  if (j.contains("bench")) {
    const auto& b = j["bench"];
    allow_keys(b, "bench", { "n", "reps", "constant_points", "fpi" });
    if (b.contains("n"))
      rc.bench.n = get_as<std::size_t>(b["n"], "bench.n");
    if (b.contains("reps"))
      rc.bench.reps = get_as<int>(b["reps"], "bench.reps");
    if (b.contains("constant_points"))
      rc.bench.constant_points =
        get_as<int>(b["constant_points"], "bench.constant_points");
    if (b.contains("fpi"))
      rc.bench.include_fpi = get_as<bool>(b["fpi"], "bench.fpi");
    if (rc.bench.n < 2 || rc.bench.reps < 1 || rc.bench.constant_points < 1) {
      throw ConfigError("bench needs n >= 2, reps >= 1, constant_points >= 1");
    }
  }
  if (j.contains("plot")) {
    const auto& p = j["plot"];
    allow_keys(p, "plot", { "kernels", "levels" });
    if (p.contains("kernels"))
      rc.plot_kernels = get_as<std::size_t>(p["kernels"], "plot.kernels");
    if (p.contains("levels"))
      rc.plot.levels = get_as<int>(p["levels"], "plot.levels");
    if (rc.plot.levels < 1) {
      throw ConfigError("plot.levels must be positive");
    }
  }
  if (j.contains("quake")) {
    const auto& q = j["quake"];
    allow_keys(q, "quake", { "min_magnitude", "lat", "lon" });
    if (q.contains("min_magnitude"))
      rc.quake.min_magnitude = get_as<double>(q["min_magnitude"], "quake.min_magnitude");
    auto range = [&](const char* k, double& lo, double& hi) {
      if (!q.contains(k))
        return;
      const auto r = number_array(q[k], std::string("quake.") + k);
      if (r.size() != 2) {
        throw ConfigError(std::string("quake.") + k + " must be [min, max]");
      }
      lo = r[0];
      hi = r[1];
    };
    range("lat", rc.quake.lat_min, rc.quake.lat_max);
    range("lon", rc.quake.lon_min, rc.quake.lon_max);
    rc.quake.validate();
  }
  if (args.seed)
    rc.seed = *args.seed;
  if (args.steps) {
    if (*args.steps < 0) {
      throw ConfigError("--steps must be non-negative");
    }
    rc.steps = *args.steps;
  }
  if (!args.quake_cols.empty())
    rc.quake_cols = parse_quake_cols(args.quake_cols);
  rc.bench.seed = rc.seed;
  rc.bench.fpi_steps = rc.steps;

  json& e = rc.effective;
  e["selector"] = selector_to_json(rc.selector);
  if (rc.grid)
    e["grid"] = grid_to_json(*rc.grid);
  e["seed"] = rc.seed;
  e["steps"] = rc.steps;
  return rc;
}

//! FNV-1a over the canonical (sorted-key) serialization.
std::string
config_hash(const json& j)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// ---------------------------------------------------------------- output

class Outputs
{
public:
  Outputs(const std::string& dir, std::string header)
    : dir_(dir)
    , header_(std::move(header))
  {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) {
      throw IoError("cannot create output directory " + dir);
    }
  }

  const std::string& header() const { return header_; }

  template<typename F>
  void write(const std::string& name, F&& body)
  {
    const fs::path p = dir_ / name;
    std::ofstream out(p);
    if (!out) {
      throw IoError("cannot write " + p.string());
    }
    body(out);
    out.close();
    if (!out) {
      throw IoError("write failed: " + p.string());
    }
    std::cout << "wrote " << p.string() << '\n';
  }

private:
  fs::path dir_;
  std::string header_;
};

QuadratureGrid
default_grid(const SampleSet& s, bool banana)
{
  if (banana)
    return banana_grid();
  Vec lo = s.points.front(), hi = lo;
  for (const auto& y : s.points) {
    lo = lo.cwiseMin(y);
    hi = hi.cwiseMax(y);
  }
  std::vector<double> a, b;
  std::vector<int> steps;
  for (int i = 0; i < s.dim; ++i) {
    const double pad = std::max(0.15 * (hi(i) - lo(i)), 1e-3);
    a.push_back(lo(i) - pad);
    b.push_back(hi(i) + pad);
    steps.push_back(s.dim == 1 ? 801 : 201);
  }
  return QuadratureGrid(a, b, steps);
}

struct Input
{
  SampleSet samples;
  bool banana = false;
};

Input
read_samples(const CliArgs& args, const RunConfig& rc)
{
  if (args.samples.empty())
    return { sample_banana(40, 4.0, 5.0, rc.seed), true };
  try {
    auto s = load_samples(args.samples);
    s.validate();
    return { std::move(s), false };
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
}

void
write_estimate(Outputs& out, const std::string& stem, const SampleSet& s,
               const std::vector<Mat>& hs, const std::optional<QuadratureGrid>& grid,
               const RunConfig& rc, bool svg, std::size_t default_kernels)
{
  const VkdeEstimate est(s, hs);
  out.write(stem + "_bandwidths.csv", [&](std::ostream& o) {
    write_bandwidths_csv(o, hs, out.header());
  });
  if (!grid)
    return;
  const auto values = grid_values(est, *grid);
  out.write(stem + "_grid.csv", [&](std::ostream& o) {
    write_grid_csv(o, *grid, values, out.header());
  });
  if (svg && s.dim == 2) {
    SvgOptions opt = rc.plot;
    opt.kernels = rc.plot_kernels.value_or(default_kernels);
    opt.comment = out.header();
    out.write(stem + ".svg",
              [&](std::ostream& o) { write_svg(o, *grid, values, est, opt); });
  }
}

std::optional<QuadratureGrid>
output_grid(const RunConfig& rc, const Input& in)
{
  if (rc.grid) {
    if (rc.grid->dim() != in.samples.dim) {
      throw ConfigError("grid dimension does not match the samples");
    }
    return rc.grid;
  }
  if (in.samples.dim > 2)
    return std::nullopt;
  return default_grid(in.samples, in.banana);
}

FpiTrace
run_iteration(const SampleSet& s, const RunConfig& rc)
{
  auto trace = iterate_bandwidths(s, rc.selector, rc.steps);
  return trace;
}

void
check_trace(const FpiTrace& t)
{
  if (t.error) {
    throw NumericFailure("fixed-point step " + std::to_string(t.error->step) +
                         " failed at sample " + std::to_string(t.error->index) +
                         ": " + t.error->message);
  }
}

// ---------------------------------------------------------------- commands

int
cmd_estimate(const CliArgs& args, const RunConfig& rc, Outputs& out)
{
  const Input in = read_samples(args, rc);
  const auto trace = run_iteration(in.samples, rc);
  check_trace(trace);
  write_estimate(out, "estimate", in.samples, trace.last(), output_grid(rc, in),
                 rc, args.svg, 6);
  std::cout << "samples " << in.samples.size() << ", steps " << trace.steps
            << (trace.converged ? " (converged)" : "") << '\n';
  return kOk;
}

int
cmd_iterate(const CliArgs& args, const RunConfig& rc, Outputs& out)
{
  const Input in = read_samples(args, rc);
  const auto trace = run_iteration(in.samples, rc);
  const auto grid = output_grid(rc, in);
  for (std::size_t k = 0; k < trace.iterates.size(); ++k)
    write_estimate(out, "step_" + std::to_string(k), in.samples,
                   trace.iterates[k], grid, rc, args.svg, 6);
  out.write("trace.csv", [&](std::ostream& o) {
    o << "# " << out.header() << '\n';
    write_trace_csv(trace, o);
  });
  out.write("residuals.csv", [&](std::ostream& o) {
    o << "# " << out.header() << '\n';
    write_residuals_csv(trace, o);
  });
  for (std::size_t k = 0; k < trace.residuals.size(); ++k)
    std::cout << "step " << k + 1 << " residual " << trace.residuals[k] << '\n';
  check_trace(trace);
  return kOk;
}

int
cmd_bench(const CliArgs&, const RunConfig& rc, Outputs& out)
{
  const auto rep = run_banana_benchmark(rc.bench);
  json j = to_json(rep);
  j["header"] = out.header();
  out.write("bench.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  const std::string table = to_text_table(rep);
  out.write("bench.txt", [&](std::ostream& o) {
    o << "# " << out.header() << '\n' << table;
  });
  std::cout << table;
  return kOk;
}

int
cmd_invariance(const CliArgs&, const RunConfig& rc, Outputs& out)
{
  const auto rep = invariance_report(rc.selector);
  json j;
  j["header"] = out.header();
  j["selector"] = rep.selector;
  j["entries"] = json::array();
  std::ostringstream text;
  text << "# " << out.header() << '\n';
  for (const auto& e : rep.entries) {
    j["entries"].push_back({ { "axiom", e.axiom },
                             { "pass", e.pass },
                             { "residual", e.residual },
                             { "tolerance", e.tolerance },
                             { "note", e.note } });
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s %s residual %.3e tolerance %.1e (%s)\n",
                  e.axiom.c_str(), e.pass ? "PASS" : "FAIL", e.residual,
                  e.tolerance, e.note.c_str());
    text << buf;
  }
  j["all_pass"] = rep.all_pass();
  out.write("invariance.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  out.write("invariance.txt", [&](std::ostream& o) { o << text.str(); });
  std::cout << text.str();
  return rep.all_pass() ? kOk : kChecksFailed;
}

int
cmd_quakes(const CliArgs& args, const RunConfig& rc, Outputs& out)
{
  if (args.samples.empty()) {
    throw ConfigError("quakes needs --samples pointing at the catalogue");
  }
  QuakeLoad load;
  try {
    load = load_quakes(args.samples, rc.quake, rc.quake_cols);
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
  std::cout << "rows " << load.rows << ", selected " << load.samples.size()
            << " (magnitude > " << rc.quake.min_magnitude << ")\n";
  out.write("quakes_samples.csv", [&](std::ostream& o) {
    o << "# " << out.header() << '\n' << "lon,lat\n";
    save_samples(load.samples, o);
  });
  const Input in{ load.samples, false };
  const auto grid = output_grid(rc, in);
  const auto trace = run_iteration(load.samples, rc);
  write_estimate(out, "quakes_standard", load.samples, trace.iterates.front(),
                 grid, rc, args.svg, 9);
  check_trace(trace);
  write_estimate(out, "quakes_" + selector_kind(rc.selector), load.samples,
                 trace.last(), grid, rc, args.svg, 9);
  out.write("quakes_residuals.csv", [&](std::ostream& o) {
    o << "# " << out.header() << '\n';
    write_residuals_csv(trace, o);
  });
  return kOk;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Variable kernel density estimation with matrix-valued "
                "bandwidths" };
  app.require_subcommand(1);
  CliArgs args;
  std::uint64_t seed = 0;
  int steps = 0;

  auto common = [&](CLI::App* sub, bool samples, bool plots) {
    sub->add_option("--config", args.config, "JSON run configuration")
      ->check(CLI::ExistingFile);
    if (samples)
      sub->add_option("--samples", args.samples, "sample file (CSV or whitespace)");
    sub->add_option("--out", args.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--steps", steps, "fixed-point steps (overrides the config)");
    if (plots)
      sub->add_flag("--svg", args.svg, "also write SVG contour plots");
  };
  auto* est = app.add_subcommand("estimate", "bandwidths and density grid");
  common(est, true, true);
  auto* it = app.add_subcommand("iterate", "fixed-point iteration, every step");
  common(it, true, true);
  auto* bench = app.add_subcommand("bench", "Monte-Carlo MISE comparison");
  common(bench, false, false);
  auto* inv = app.add_subcommand("invariance", "invariance axiom report");
  common(inv, false, false);
  auto* quakes = app.add_subcommand("quakes", "earthquake catalogue example");
  common(quakes, true, true);
  quakes->add_option("--quake-cols", args.quake_cols,
                     "zero-based MAG,LAT,LON column indices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed"))
    args.seed = seed;
  if (sub->count("--steps"))
    args.steps = steps;

  try {
    RunConfig rc = load_config(args);
    const std::string name = sub->get_name();
    json hashed = rc.effective;
    hashed["command"] = name;
    char header[160];
    std::snprintf(header, sizeof header, "vkde %s config_hash=%s seed=%" PRIu64,
                  name.c_str(), config_hash(hashed).c_str(), rc.seed);
    Outputs out(args.out, header);
    std::cout << header << '\n';
    if (name == "estimate")
      return cmd_estimate(args, rc, out);
    if (name == "iterate")
      return cmd_iterate(args, rc, out);
    if (name == "bench")
      return cmd_bench(args, rc, out);
    if (name == "invariance")
      return cmd_invariance(args, rc, out);
    return cmd_quakes(args, rc, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericError;
  }
}
