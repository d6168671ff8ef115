#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = DLEST_CLI_PATH;
const fs::path kSource = DLEST_SOURCE_DIR;

/// Runs the CLI with `args`, returns its exit status.
int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dlest_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

const char* kSmall = R"({"model": {"family": "ou", "gamma": 1, "holder": {"beta": 1, "L": 5}},
  "tGrid": [150], "replications": 2, "masterSeed": 3,
  "calibration": {"mode": "calibrated", "factor": 6e-5},
  "targets": ["density_risk", "derivative_risk"]})";

}  // namespace

TEST(CliExit, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("mc --bogus-flag"), 1);
  EXPECT_EQ(run("mc --format xml"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(CliExit, ValidationErrors) {
  const auto dir = scratch("validation");
  EXPECT_EQ(run("mc --out " + dir.string()), 1);  // no config
  EXPECT_EQ(run("mc --config " + (dir / "missing.json").string()), 1);
  const auto bad = write_config(dir, R"({"tGrid": [100], "replications": 1})");
  EXPECT_EQ(run("mc --config " + bad.string() + " --out " + dir.string()), 1);
  // A drift outside the ergodic class is a property of the input, not a failure of the run.
  const auto repelling = write_config(dir, R"({"model": {"family": "ou", "gamma": -1}, "tGrid": [100]})");
  EXPECT_EQ(run("simulate --config " + repelling.string() + " --out " + dir.string()), 1);
  fs::remove_all(dir);
}

TEST(CliExit, RuntimeFailures) {
  const auto dir = scratch("runtime");
  const auto cfg = write_config(dir, R"({"model": {"family": "ou", "gamma": 1}, "grid": {"spacing": 0.5}, "tGrid": [100]})");
  EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + dir.string()), 2);
  const auto good = write_config(dir, kSmall);
  std::ofstream(dir / "junk.bin") << "definitely not a path file";
  EXPECT_EQ(run("estimate --config " + good.string() + " --path " + (dir / "junk.bin").string() + " --out " +
                dir.string()),
            2);
  fs::remove_all(dir);
}

TEST(CliMc, GoldenReportByteForByte) {
  const auto dir = scratch("golden");
  ASSERT_EQ(run("mc --config " + (kSource / "configs/example_mc.json").string() + " --threads 1 --out " +
                dir.string()),
            0);
  EXPECT_EQ(slurp(dir / "report.json"), slurp(kSource / "tests/golden/example_mc_report.json"));
  fs::remove_all(dir);
}

TEST(CliMc, ThreadCountDoesNotChangeOutputs) {
  const auto a = scratch("threads1"), b = scratch("threads2");
  const auto cfg = write_config(a, kSmall);
  ASSERT_EQ(run("mc --config " + cfg.string() + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run("mc --config " + cfg.string() + " --threads 2 --out " + b.string()), 0);
  for (const char* f : {"report.json", "risks.csv", "replications.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CliMc, ManifestAndSeedOverride) {
  const auto dir = scratch("manifest");
  const auto cfg = write_config(dir, kSmall);
  ASSERT_EQ(run("mc --config " + cfg.string() + " --seed 77 --out " + dir.string()), 0);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["masterSeed"], 77u);
  EXPECT_EQ(m["command"], "mc");
  EXPECT_EQ(m["configHash"].get<std::string>().size(), 16u);
  const auto r = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(r["masterSeed"], 77u);
  fs::remove_all(dir);
}

TEST(CliPipeline, SimulateThenEstimateFromPathFile) {
  const auto dir = scratch("pipeline");
  const auto cfg = write_config(dir, kSmall);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --format csv --out " + dir.string()), 0);
  ASSERT_TRUE(fs::exists(dir / "path.bin"));
  ASSERT_TRUE(fs::exists(dir / "path.csv"));
  EXPECT_EQ(fs::file_size(dir / "path.bin"), 32u + 8u * 15001u);
  const auto est = dir / "est";
  ASSERT_EQ(run("estimate --config " + cfg.string() + " --path " + (dir / "path.bin").string() +
                " --bandwidth 0.2 --out " + est.string()),
            0);
  const auto d = nlohmann::json::parse(slurp(est / "density.json"));
  EXPECT_EQ(d["bandwidth"], 0.2);
  EXPECT_EQ(d["tag"], "density");
  for (const char* f : {"derivative.json", "drift.json", "local_time.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(est / f)) << f;
  fs::remove_all(dir);
}

TEST(CliPipeline, SelectBoundsEfficiencyLowerbound) {
  const auto dir = scratch("others");
  const auto cfg = write_config(dir, R"({"model": {"family": "ou", "gamma": 1, "holder": {"beta": 1, "L": 5}},
    "tGrid": [150], "replications": 3, "efficiency": {"points": [0]},
    "calibration": {"mode": "calibrated", "factor": 6e-5}, "lowerbound": {"v": 0.5, "t": 300}})");
  ASSERT_EQ(run("select --config " + cfg.string() + " --out " + (dir / "s").string()), 0);
  const auto s = nlohmann::json::parse(slurp(dir / "s/selection.json"));
  EXPECT_TRUE(s["simultaneous"].contains("densityConstraint"));
  ASSERT_EQ(run("bounds --config " + cfg.string() + " --format csv --out " + (dir / "b").string()), 0);
  EXPECT_EQ(slurp(dir / "b/bounds.csv").rfind("t,h,u,phi,", 0), 0u);
  ASSERT_EQ(run("efficiency --config " + cfg.string() + " --out " + (dir / "e").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "e/efficiency.csv"));
  ASSERT_EQ(run("lowerbound --config " + cfg.string() + " --out " + (dir / "l").string()), 0);
  const auto l = nlohmann::json::parse(slurp(dir / "l/lowerbound.json"));
  EXPECT_TRUE(l["hypotheses"]["validation"]["passed"].get<bool>());
  EXPECT_TRUE(fs::exists(dir / "l/corpus/member_0.csv"));
  fs::remove_all(dir);
}
