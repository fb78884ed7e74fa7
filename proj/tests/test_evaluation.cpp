#include <vkde/evaluation.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace vkde;

namespace {

Sampler
banana_sampler()
{
  return [](std::size_t n, std::uint64_t seed) {
    return sample_banana(n, 4.0, 5.0, seed);
  };
}

Sampler
mixture_sampler(const GaussianMixture& m)
{
  return [m](std::size_t n, std::uint64_t seed) {
    return sample_mixture(n, m, seed);
  };
}

QuadratureGrid
mixture_grid()
{
  return { { -12.0, -11.0 }, { 13.0, 13.0 }, { 301, 281 } };
}

} // namespace

// ---------------------------------------------------------------- grids

TEST(Grid, WeightsIntegratePolynomialsExactly)
{
  const QuadratureGrid g({ -1.0, 2.0 }, { 3.0, 2.5 }, { 5, 3 });
  EXPECT_EQ(g.size(), 15u);
  EXPECT_NEAR(grid_integral(g, [](const Vec&) { return 1.0; }), 4.0 * 0.5,
              1e-14);
  // Trapezoid is exact for bilinear integrands.
  EXPECT_NEAR(grid_integral(g, [](const Vec& x) { return x(0) * x(1); }),
              (9.0 - 1.0) / 2.0 * (6.25 - 4.0) / 2.0, 1e-13);
  EXPECT_EQ(g.point(0), (Vec(2) << -1.0, 2.0).finished());
  EXPECT_EQ(g.point(14), (Vec(2) << 3.0, 2.5).finished());
  EXPECT_EQ(g.point(1)(1), 2.25);
  EXPECT_EQ(g.refined().steps, (std::vector<int>{ 9, 5 }));
}

TEST(Grid, RejectsBadSpecs)
{
  EXPECT_THROW(QuadratureGrid({ 0.0 }, { 1.0 }, { 1 }), ConfigError);
  EXPECT_THROW(QuadratureGrid({ 1.0 }, { 0.0 }, { 5 }), ConfigError);
  EXPECT_THROW(QuadratureGrid({ 0.0, 0.0 }, { 1.0 }, { 5, 5 }), ConfigError);
}

TEST(Grid, BananaGridCoversTheMass)
{
  EXPECT_NO_THROW(check_grid_mass(BananaDensity(), banana_grid()));
  const QuadratureGrid narrow({ -20.0, -4.0 }, { 20.0, 30.0 }, { 200, 200 });
  EXPECT_THROW(check_grid_mass(BananaDensity(), narrow), DomainError);
}

TEST(Grid, GridValuesMatchPointwiseEvaluation)
{
  const auto s = sample_banana(12, 4.0, 5.0, 1);
  const auto est =
    VkdeEstimate(s, select_bandwidths(AxiomaticSelector{}, BananaDensity(),
                                      s.points, s.size()));
  const QuadratureGrid g({ -15.0, -5.0 }, { 15.0, 40.0 }, { 31, 46 });
  const auto v = grid_values(est, g);
  const auto dv = grid_values(est, g, 1);
  double vmax = 0.0, dmax = 0.0, verr = 0.0, derr = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec x = g.point(i);
    vmax = std::max(vmax, est.eval(x));
    dmax = std::max(dmax, std::abs(est.mixture().gradient(x)(1)));
    verr = std::max(verr, std::abs(v[i] - est.eval(x)));
    derr = std::max(derr, std::abs(dv[i] - est.mixture().gradient(x)(1)));
  }
  EXPECT_LT(verr, 1e-14 * vmax + 1e-30);
  EXPECT_LT(derr, 1e-14 * dmax + 1e-30);
}

TEST(Grid, SingleKernelPeak)
{
  const VkdeEstimate est(SampleSet(2, { Vec::Zero(2) }), { identity(2) });
  const QuadratureGrid g({ -4.0, -4.0 }, { 4.0, 4.0 }, { 81, 81 });
  const auto v = grid_values(est, g);
  EXPECT_NEAR(*std::max_element(v.begin(), v.end()), 1.0 / (2.0 * kPi), 1e-15);
  EXPECT_NEAR(grid_integral(g, [&](const Vec& x) { return est.eval(x); }), 1.0,
              1e-3);
}

// ---------------------------------------------------------------- ISE

TEST(Ise, ZeroForExactRepresentation)
{
  const Mat sigma = (Mat(2, 2) << 2.0, 0.6, 0.6, 1.0).finished();
  const GaussianMixture truth({ 1.0 }, { { Vec::Constant(2, 0.5), sigma } });
  const VkdeEstimate est(SampleSet(2, { Vec::Constant(2, 0.5) }),
                         { sqrt_spd(sigma) });
  const QuadratureGrid g({ -9.0, -7.0 }, { 10.0, 8.0 }, { 121, 101 });
  EXPECT_LT(ise(est, truth, g), 1e-10);
  EXPECT_LT(derivative_ise(est, truth, g, 1), 1e-10);
  const ClosedFormIse cf(truth, 1);
  const auto v = cf(est.samples().points, est.bandwidths());
  EXPECT_LT(std::abs(v.value), 1e-10);
  EXPECT_LT(std::abs(v.derivative), 1e-10);
}

TEST(Ise, NonNegative)
{
  BananaDensity truth;
  const auto g = banana_grid(101, 201);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = sample_banana(10, 4.0, 5.0, seed);
    const VkdeEstimate est(s, std::vector<Mat>(10, 2.0 * identity(2)));
    EXPECT_GE(ise(est, truth, g), 0.0);
    EXPECT_GE(derivative_ise(est, truth, g, 1), 0.0);
  }
}

TEST(Ise, BananaGridRefinement)
{
  BananaDensity truth;
  const auto s = sample_banana(40, 4.0, 5.0, 7);
  const VkdeEstimate est(
    s, select_bandwidths(AxiomaticSelector{}, truth, s.points, s.size()));
  const auto g = banana_grid();
  const double i1 = ise(est, truth, g), i2 = ise(est, truth, g.refined());
  const double d1 = derivative_ise(est, truth, g, 1);
  const double d2 = derivative_ise(est, truth, g.refined(), 1);
  EXPECT_LT(std::abs(i1 - i2), 1e-4 * i2);
  EXPECT_LT(std::abs(d1 - d2), 1e-4 * d2);
}

TEST(Ise, ClosedFormAgreesWithGrid)
{
  BananaDensity banana;
  const auto s = sample_banana(40, 4.0, 5.0, 8);
  for (const SelectorConfig& cfg :
       { SelectorConfig(AxiomaticSelector{}),
         SelectorConfig(FixedSelector{ 1.5, std::nullopt }) }) {
    const auto hs = select_bandwidths(cfg, banana, s.points, s.size());
    const VkdeEstimate est(s, hs);
    const auto v = ClosedFormIse(banana, 1)(s.points, hs);
    const auto g = banana_grid().refined();
    EXPECT_NEAR(v.value, ise(est, banana, g), 1e-4 * v.value);
    EXPECT_NEAR(v.derivative, derivative_ise(est, banana, g, 1),
                1e-4 * v.derivative);
  }
  const auto mix = test_mixture_2d();
  const auto sm = sample_mixture(25, mix, 9);
  const auto hm = select_bandwidths(AxiomaticSelector{}, mix, sm.points, 25);
  const VkdeEstimate em(sm, hm);
  for (int axis : { 0, 1 }) {
    const auto v = ClosedFormIse(mix, axis)(sm.points, hm);
    EXPECT_NEAR(v.value, ise(em, mix, mixture_grid()), 1e-9 * v.value);
    EXPECT_NEAR(v.derivative, derivative_ise(em, mix, mixture_grid(), axis),
                1e-9 * v.derivative);
  }
}

TEST(Ise, ShiftInvariance)
{
  const auto mix = test_mixture_2d();
  Vec a(2);
  a << 2.5, -1.25;
  const auto s = sample_mixture(15, mix, 10);
  const auto hs = select_bandwidths(PowerLawSelector{}, mix, s.points, 15);
  std::vector<Vec> moved;
  for (const auto& y : s.points)
    moved.push_back(y + a);
  const VkdeEstimate e1(s, hs), e2(SampleSet(2, moved), hs);
  const auto g = mixture_grid();
  const auto shifted_truth = mix.shifted(a);
  EXPECT_NEAR(ise(e2, shifted_truth, g.shifted(a)), ise(e1, mix, g),
              1e-10 * ise(e1, mix, g));
  EXPECT_NEAR(derivative_ise(e2, shifted_truth, g.shifted(a), 1),
              derivative_ise(e1, mix, g, 1),
              1e-10 * derivative_ise(e1, mix, g, 1));
}

TEST(Ise, GridMassFailureIsDomainError)
{
  BananaDensity truth;
  const auto s = sample_banana(5, 4.0, 5.0, 1);
  const VkdeEstimate est(s, std::vector<Mat>(5, identity(2)));
  const QuadratureGrid small({ -5.0, -2.0 }, { 5.0, 5.0 }, { 11, 11 });
  EXPECT_THROW(ise(est, truth, small), DomainError);
  EXPECT_THROW(derivative_ise(est, truth, small, 1), DomainError);
}

TEST(Ise, EvaluatorFallsBackToGrid)
{
  BananaDensity banana;
  const auto shifted = TransformedDensity::shift(banana, Vec::Constant(2, 1.0));
  const IseEvaluator eval(shifted, banana_grid().shifted(Vec::Constant(2, 1.0)),
                          1);
  EXPECT_FALSE(eval.closed_form());
  const IseEvaluator direct(banana, banana_grid(), 1);
  EXPECT_TRUE(direct.closed_form());
  const auto s = sample_banana(20, 4.0, 5.0, 3);
  std::vector<Vec> moved;
  for (const auto& y : s.points)
    moved.push_back(y + Vec::Constant(2, 1.0));
  const std::vector<Mat> hs(20, 1.2 * identity(2));
  const auto a = eval(SampleSet(2, moved), hs);
  const auto b = direct(s, hs);
  EXPECT_NEAR(a.value, b.value, 1e-4 * b.value);
  EXPECT_NEAR(a.derivative, b.derivative, 1e-4 * b.derivative);
}

// ---------------------------------------------------------------- Monte Carlo

TEST(Mise, DeterministicUnderSeed)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.n = 20;
  opt.reps = 1;
  opt.seed = 77;
  const auto a = mise_mc(truth, banana_sampler(), AxiomaticSelector{}, opt, eval);
  const auto b = mise_mc(truth, banana_sampler(), AxiomaticSelector{}, opt, eval);
  ASSERT_EQ(a.ise.size(), 1u);
  EXPECT_EQ(a.ise, b.ise);
  EXPECT_EQ(a.dise, b.dise);
  opt.seed = 78;
  const auto c = mise_mc(truth, banana_sampler(), AxiomaticSelector{}, opt, eval);
  EXPECT_NE(a.ise, c.ise);
  opt.reps = 0;
  EXPECT_THROW(mise_mc(truth, banana_sampler(), AxiomaticSelector{}, opt, eval),
               ConfigError);
}

TEST(Mise, StandardKdeIsWellPosed)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.reps = 10;
  const auto search = optimize_constant(truth, banana_sampler(), FixedSelector{},
                                        opt, eval, geometric_grid(0.2, 20, 25));
  const auto [m, sd] = search.at_best.ise_stats();
  EXPECT_TRUE(std::isfinite(m));
  EXPECT_GT(m, 0.0);
  EXPECT_GE(sd, 0.0);
  EXPECT_EQ(search.at_best.failed(), 0u);
}

TEST(Mise, EstimateModeRunsFixedPointIteration)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.n = 15;
  opt.reps = 2;
  opt.mode = PilotMode::estimate;
  opt.fpi_steps = 2;
  const auto r = mise_mc(truth, banana_sampler(), AxiomaticSelector{}, opt, eval);
  ASSERT_EQ(r.succeeded(), 2u);
  const auto s = sample_banana(15, 4.0, 5.0, replication_seed(opt.seed, 0));
  const auto t = iterate_bandwidths(s, AxiomaticSelector{}, 2);
  EXPECT_EQ(r.ise[0], eval(s, t.last()).value);
}

TEST(Mise, FailedReplicationsAreExcludedAndCounted)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.n = 10;
  opt.reps = 3;
  AxiomaticSelector starved;
  starved.adaptation.max_iter = 1;
  const auto r = mise_mc(truth, banana_sampler(), starved, opt, eval);
  EXPECT_EQ(r.failed(), 3u);
  EXPECT_TRUE(std::isnan(r.ise_stats().first));
  EXPECT_THROW(optimize_constant(truth, banana_sampler(), starved, opt, eval,
                                 { 1.0, 2.0 }),
               DomainError);
}

TEST(OptimizeConstant, SingletonGrid)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.reps = 3;
  const auto s = optimize_constant(truth, banana_sampler(), PowerLawSelector{},
                                   opt, eval, { 0.37 });
  EXPECT_EQ(s.best, 0.37);
  EXPECT_FALSE(s.at_endpoint);
  EXPECT_THROW(optimize_constant(truth, banana_sampler(), PowerLawSelector{},
                                 opt, eval, {}),
               ConfigError);
}

TEST(OptimizeConstant, RescalingMatchesDirectEvaluation)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.reps = 2;
  for (const SelectorConfig& cfg :
       { SelectorConfig(AxiomaticSelector{}), SelectorConfig(ParzenMultiSelector{}),
         SelectorConfig(PowerLawSelector{}) }) {
    const std::vector<double> cs = { 0.5 * tuning_constant(cfg),
                                     3.0 * tuning_constant(cfg) };
    const auto search =
      optimize_constant(truth, banana_sampler(), cfg, opt, eval, cs);
    for (std::size_t c = 0; c < cs.size(); ++c) {
      const auto direct = mise_mc(truth, banana_sampler(),
                                  with_tuning_constant(cfg, cs[c]), opt, eval);
      if (direct.failed() == 0) {
        EXPECT_NEAR(search.mean_ise[c], direct.ise_stats().first,
                    1e-9 * direct.ise_stats().first)
          << selector_kind(cfg);
      }
    }
  }
}

TEST(OptimizeConstant, EndpointIsFlagged)
{
  BananaDensity truth;
  const IseEvaluator eval(truth, banana_grid(), 1);
  MiseOptions opt;
  opt.reps = 5;
  const auto narrow = optimize_constant(truth, banana_sampler(), FixedSelector{},
                                        opt, eval, geometric_grid(0.05, 0.2, 5));
  EXPECT_TRUE(narrow.at_endpoint);
  EXPECT_EQ(narrow.best, narrow.constants.back());
  const auto wide = optimize_constant(truth, banana_sampler(), FixedSelector{},
                                      opt, eval, geometric_grid(0.05, 50.0, 31));
  EXPECT_FALSE(wide.at_endpoint);
  EXPECT_GT(wide.best, 0.2);
}

TEST(OptimizeConstant, TiesGoToSmallerConstant)
{
  // With zero fixed-point steps the bandwidths are the initial ones, so
  // every constant ties.
  const GaussianMixture truth({ 1.0 }, { make_component({ 0.0 }, { 1.0 }) });
  const IseEvaluator eval(truth, QuadratureGrid({ -10.0 }, { 10.0 }, { 401 }), 0);
  MiseOptions opt;
  opt.n = 10;
  opt.reps = 2;
  opt.mode = PilotMode::estimate;
  opt.fpi_steps = 0;
  const auto s = optimize_constant(truth, mixture_sampler(truth), FixedSelector{},
                                   opt, eval, { 3.0, 1.0, 2.0 });
  EXPECT_EQ(s.mean_ise[0], s.mean_ise[2]);
  EXPECT_EQ(s.best, 1.0);
}

TEST(OptimizeConstant, SilvermanRuleInOneDimension)
{
  const GaussianMixture truth({ 1.0 }, { make_component({ 0.0 }, { 1.0 }) });
  const IseEvaluator eval(truth, QuadratureGrid({ -10.0 }, { 10.0 }, { 401 }), 0);
  MiseOptions opt;
  opt.n = 100;
  opt.reps = 400;
  opt.seed = 5;
  const auto s = optimize_constant(truth, mixture_sampler(truth), FixedSelector{},
                                   opt, eval, geometric_grid(0.1, 1.5, 81));
  const double silverman = 1.06 * std::pow(100.0, -0.2);
  EXPECT_FALSE(s.at_endpoint);
  EXPECT_NEAR(s.best, silverman, 0.3 * silverman);
}

TEST(FractionLess, CountsSharedSuccesses)
{
  MiseResult a, b;
  a.ise = { 1.0, 2.0, 3.0, 0.5 };
  b.ise = { 2.0, 1.0, 4.0, 0.1 };
  a.dise = a.ise;
  b.dise = b.ise;
  a.ok = { 1, 1, 1, 0 };
  b.ok = { 1, 1, 1, 1 };
  EXPECT_NEAR(fraction_less(a, b), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(fraction_less(b, a, true), 1.0 / 3.0, 1e-15);
}

TEST(Benchmark, ReportLayoutAndSerializations)
{
  BenchmarkSpec spec;
  spec.n = 10;
  spec.reps = 2;
  spec.fpi_steps = 2;
  spec.constant_points = 5;
  const auto rep = run_banana_benchmark(spec);
  ASSERT_EQ(rep.columns.size(), 5u);
  const std::vector<std::string> labels = { "standard", "power_law", "parzen",
                                            "axiomatic", "axiomatic_fpi" };
  for (std::size_t i = 0; i < labels.size(); ++i)
    EXPECT_EQ(rep.columns[i].label, labels[i]);
  EXPECT_EQ(rep.column("axiomatic_fpi").constant,
            rep.column("axiomatic").constant);

  const auto j = to_json(rep);
  const std::string table = to_text_table(rep);
  for (const auto& c : j["columns"]) {
    const double m = c["mean_ise"].get<double>();
    EXPECT_NE(table.find(detail::fmt(m, "%.6e")), std::string::npos)
      << c["label"];
  }
  EXPECT_NE(table.find("MISE d/dx2"), std::string::npos);

  const auto again = run_banana_benchmark(spec);
  EXPECT_EQ(to_json(again).dump(), j.dump());
  EXPECT_EQ(to_text_table(again), table);
}

// ---------------------------------------------------------------- invariance

TEST(InvarianceReport, AxiomaticPassesAll)
{
  const auto r = invariance_report(AxiomaticSelector{});
  for (const auto& e : r.entries)
    EXPECT_TRUE(e.pass) << e.axiom << " residual " << e.residual << " "
                        << e.note;
  EXPECT_TRUE(r.all_pass());
}

TEST(InvarianceReport, PowerLawFailsScalingAxioms)
{
  const auto r = invariance_report(PowerLawSelector{ 0.5, 1.0 });
  EXPECT_TRUE(r.entry("I1").pass);
  EXPECT_FALSE(r.entry("I2").pass);
  EXPECT_FALSE(r.entry("I3").pass);
  EXPECT_TRUE(r.entry("I4").pass);
  EXPECT_FALSE(r.all_pass());
}

TEST(InvarianceReport, FixedFailsScalingAxioms)
{
  const auto r = invariance_report(FixedSelector{});
  EXPECT_TRUE(r.entry("I1").pass);
  EXPECT_FALSE(r.entry("I2").pass);
  EXPECT_FALSE(r.entry("I3").pass);
  EXPECT_TRUE(r.entry("I4").pass);
}

TEST(InvarianceReport, ParzenUnivariateScalesCorrectly)
{
  const auto r = invariance_report(ParzenUniSelector{});
  EXPECT_TRUE(r.entry("I1").pass);
  EXPECT_TRUE(r.entry("I2").pass) << r.entry("I2").residual;
}

TEST(Splitting, GapShrinksWithSeparation)
{
  const auto r = splitting_gap(AxiomaticSelector{}, 12, 8, 3, { 10, 20, 40 });
  ASSERT_EQ(r.relative_gap.size(), 3u);
  EXPECT_GT(r.relative_gap[0], r.relative_gap[1]);
  EXPECT_GE(r.relative_gap[1], r.relative_gap[2]);
  EXPECT_LT(r.relative_gap[2], 1e-3);
}
