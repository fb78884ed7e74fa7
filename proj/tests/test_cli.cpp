#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path
scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("vkde_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int
run(const std::string& args)
{
  const std::string cmd =
    std::string(VKDE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string
slurp(const fs::path& p)
{
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void
write(const fs::path& p, const std::string& text)
{
  std::ofstream(p) << text;
}

} // namespace

TEST(Cli, ConfigErrorsExitTwo)
{
  const auto dir = scratch("config");
  write(dir / "unknown.json", R"({"selector": {"kind": "axiomatic"}, "extra": 1})");
  write(dir / "kind.json", R"({"selector": {"kind": "nearest"}})");
  write(dir / "nested.json", R"({"selector": {"kind": "power_law", "kappa": 1}})");
  write(dir / "grid.json", R"({"grid": {"min": [0], "max": [1, 2], "steps": [5]}})");
  write(dir / "syntax.json", "{ selector: ");
  for (const char* f : { "unknown", "kind", "nested", "grid", "syntax" })
    EXPECT_EQ(run("estimate --config " + (dir / (std::string(f) + ".json")).string() +
                  " --out " + dir.string()),
              2)
      << f;
  EXPECT_EQ(run("estimate --no-such-flag"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("quakes --samples x --quake-cols 1,2 --out " + dir.string()), 2);
}

TEST(Cli, IoErrorsExitThree)
{
  const auto dir = scratch("io");
  EXPECT_EQ(run("estimate --samples " + (dir / "missing.csv").string() +
                " --out " + dir.string()),
            3);
  write(dir / "bad.csv", "1,2\n3,x\n");
  EXPECT_EQ(run("estimate --samples " + (dir / "bad.csv").string() + " --out " +
                dir.string()),
            3);
  write(dir / "blocker", "");
  EXPECT_EQ(run("estimate --out " + (dir / "blocker" / "sub").string()), 3);
}

TEST(Cli, NumericFailureExitsFour)
{
  const auto dir = scratch("numeric");
  write(dir / "same.csv", "1,2\n1,2\n1,2\n");
  EXPECT_EQ(run("estimate --samples " + (dir / "same.csv").string() +
                " --out " + dir.string()),
            4);
}

TEST(Cli, EstimateIsDeterministicAndHeadered)
{
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run("estimate --seed 7 --steps 2 --svg --out " + a.string()), 0);
  ASSERT_EQ(run("estimate --seed 7 --steps 2 --svg --out " + b.string()), 0);
  for (const char* f :
       { "estimate_grid.csv", "estimate_bandwidths.csv", "estimate.svg" }) {
    const std::string ta = slurp(a / f);
    ASSERT_FALSE(ta.empty()) << f;
    EXPECT_EQ(ta, slurp(b / f)) << f;
    EXPECT_NE(ta.find("vkde estimate config_hash="), std::string::npos) << f;
    EXPECT_NE(ta.find("seed=7"), std::string::npos) << f;
  }
  const auto c = scratch("det_c");
  ASSERT_EQ(run("estimate --seed 8 --steps 2 --out " + c.string()), 0);
  EXPECT_NE(slurp(a / "estimate_grid.csv"), slurp(c / "estimate_grid.csv"));
}

TEST(Cli, ConfigHashTracksEffectiveConfig)
{
  const auto dir = scratch("hash");
  auto header = [&](const std::string& extra) {
    fs::remove_all(dir / "o");
    EXPECT_EQ(run("estimate --steps 0 --out " + (dir / "o").string() + extra), 0);
    std::ifstream in(dir / "o" / "estimate_bandwidths.csv");
    std::string line;
    std::getline(in, line);
    return line;
  };
  write(dir / "a.json", R"({"selector": {"kind": "power_law"}})");
  write(dir / "b.json", R"({"selector": {"kind": "power_law", "beta": 0.3}})");
  write(dir / "c.json", R"({"selector": {"kind": "power_law", "beta": 0.5}})");
  const std::string h0 = header("");
  const std::string ha = header(" --config " + (dir / "a.json").string());
  const std::string hb = header(" --config " + (dir / "b.json").string());
  EXPECT_NE(h0, ha);
  EXPECT_NE(ha, hb);
  EXPECT_EQ(ha, header(" --config " + (dir / "a.json").string()));
  // Spelling out a default does not change the effective configuration.
  EXPECT_EQ(ha, header(" --config " + (dir / "c.json").string()));
}

TEST(Cli, IterateWritesTraceAndSteps)
{
  const auto dir = scratch("iterate");
  write(dir / "samples.csv",
        "x,y\n0,0\n1,0.5\n-0.5,1\n2,1.5\n0.3,-1\n1.2,2.2\n-1.4,0.1\n");
  ASSERT_EQ(run("iterate --samples " + (dir / "samples.csv").string() +
                " --steps 3 --out " + dir.string()),
            0);
  for (int k = 0; k <= 3; ++k)
    EXPECT_TRUE(fs::exists(dir / ("step_" + std::to_string(k) + "_grid.csv"))) << k;
  const std::string trace = slurp(dir / "trace.csv");
  EXPECT_EQ(trace.rfind("# vkde iterate config_hash=", 0), 0u);
  EXPECT_NE(trace.find("k,n,h_11,h_21,h_12,h_22"), std::string::npos);
  const std::string res = slurp(dir / "residuals.csv");
  std::istringstream in(res);
  std::string line;
  int rows = 0;
  while (std::getline(in, line))
    ++rows;
  EXPECT_EQ(rows, 2 + 3);
}

TEST(Cli, QuakesUsesColumnMapping)
{
  const auto dir = scratch("quakes");
  ASSERT_EQ(run(std::string("quakes --samples ") + VKDE_TEST_DATA +
                "/quake_fixture.dat --quake-cols 2,0,1 --svg --out " +
                dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "quakes_axiomatic.svg"));
  EXPECT_TRUE(fs::exists(dir / "quakes_standard.svg"));
  // With the default MAG,LAT,LON mapping the latitude column is read as a
  // magnitude and the filter keeps nothing.
  EXPECT_EQ(run(std::string("quakes --samples ") + VKDE_TEST_DATA +
                "/quake_fixture.dat --out " + dir.string()),
            4);
}

TEST(Cli, InvarianceReport)
{
  const auto dir = scratch("invariance");
  EXPECT_EQ(run("invariance --out " + dir.string()), 0);
  const std::string txt = slurp(dir / "invariance.txt");
  for (const char* a : { "I1 PASS", "I2 PASS", "I3 PASS", "I4 PASS" })
    EXPECT_NE(txt.find(a), std::string::npos) << a;
  write(dir / "pl.json", R"({"selector": {"kind": "power_law"}})");
  EXPECT_EQ(run("invariance --config " + (dir / "pl.json").string() +
                " --out " + dir.string()),
            1);
}
