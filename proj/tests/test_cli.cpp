#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"

#include "malakit/dataset.hpp"

namespace fs = std::filesystem;

namespace {
struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Result cli(const std::string& args) {
  const auto dir = fs::temp_directory_path();
  const auto out = dir / "malakit-cli.out", err = dir / "malakit-cli.err";
  const std::string cmd = std::string(MALAKIT_CLI_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

const std::string kData = MALAKIT_DATA_DIR;
}  // namespace

TEST(Cli, RunDemoSpec) {
  const auto out = fs::temp_directory_path() / "malakit-cli-demo";
  fs::remove_all(out);
  const auto r = cli("run " + kData + "/gaussian-demo.spec --threads 2 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["name"], "gaussian-demo");
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_TRUE(fs::exists(out / "diagnostics.csv"));
  EXPECT_FALSE(r.err.empty());  // progress goes to stderr
  fs::remove_all(out);
}

TEST(Cli, UnknownSubcommand) {
  const auto r = cli("frobnicate");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE((r.out + r.err).find("Usage"), std::string::npos);
}

TEST(Cli, NoSubcommand) { EXPECT_EQ(cli("").code, 1); }

TEST(Cli, ValidationErrorExitsOne) {
  const auto spec = fs::temp_directory_path() / "malakit-bad.spec";
  std::ofstream(spec) << "malakit-experiment 1\nname = bad\niterations = 10\n[schedule]\neta = -1\n";
  const auto r = cli("run " + spec.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("schedule.eta"), std::string::npos);
  EXPECT_EQ(cli("run /nonexistent/file.spec").code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  // Every replica starts outside the constraint.
  const auto r = cli("sample --d 2 --sampler constrained_mala --annulus 0.5,1 --init 0 --eta 0.1 "
                     "--iterations 5");
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, RegularityOnBundledDataset) {
  const auto r = cli("regularity " + kData + "/logistic-r50.csv --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto data = malakit::load_dataset(kData + "/logistic-r50.csv");
  const double phi = oracle::incoherence(data.features);
  EXPECT_EQ(j["r"].get<int>(), 50);
  EXPECT_NEAR(j["phi"].get<double>(), phi, 1e-12);
  EXPECT_NEAR(j["sqrt_r_phi"].get<double>(), std::sqrt(50.0 * phi), 1e-12);
  EXPECT_EQ(j["c4_bound"].get<double>(), 50.0);
  EXPECT_LE(j["c3_estimate"].get<double>(), std::sqrt(50.0 * phi) * 1.05);
  EXPECT_LE(j["c4_estimate"].get<double>(), 50.0 * 1.05);
}

TEST(Cli, SampleTakesDimensionFromDataset) {
  const auto r = cli("sample --target logistic --dataset " + kData +
                     "/logistic-r50.csv --eta 0.05 --iterations 50 --replicas 2 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("final_x_4"), std::string::npos);
  EXPECT_EQ(r.out.find("final_x_5"), std::string::npos);
  const auto bad = cli("sample --target logistic --d 3 --dataset " + kData +
                       "/logistic-r50.csv --eta 0.05 --iterations 50");
  EXPECT_NE(bad.code, 0);
}

TEST(Cli, SamplePrintsSummaryCsv) {
  const auto a = cli("sample --eta 0.5 --iterations 100 --replicas 3 --seed 4 --threads 1");
  const auto b = cli("sample --eta 0.5 --iterations 100 --replicas 3 --seed 4 --threads 3");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out.rfind("eta,replica,status", 0), 0u);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, OptimizeReportsAngle) {
  const auto r = cli("optimize --d 3 --r 200 --iterations 300 --replicas 2 --eta 0.05 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["diagnostics"]["per_eta"][0]["minimizer"].contains("angle"));
}

TEST(Cli, DiagnoseMatrix) {
  const auto r = cli("diagnose --eta 0.2 --bins 200");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LE(j["row_sum_error"].get<double>(), 1e-9);
  EXPECT_LE(j["detailed_balance_violation"].get<double>(), 1e-8);
  EXPECT_NEAR(j["cheeger"].get<double>(), 0.798, 2e-3);
  EXPECT_EQ(cli("diagnose --sampler constrained_mala").code, 1);
}

TEST(Cli, ScalingRejectsSingleValue) {
  EXPECT_EQ(cli("scaling " + kData + "/gaussian-demo.spec --values 0.5").code, 1);
  EXPECT_EQ(cli("scaling " + kData + "/gaussian-demo.spec --axis time --values 1,2,3").code, 1);
}

TEST(Cli, DatasetGeneratorIsDeterministic) {
  const auto dir = fs::temp_directory_path();
  const auto a = dir / "malakit-ds-a.csv", b = dir / "malakit-ds-b.csv";
  ASSERT_EQ(cli("dataset " + a.string() + " --d 4 --r 30 --data-seed 9").code, 0);
  ASSERT_EQ(cli("dataset " + b.string() + " --d 4 --r 30 --data-seed 9").code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto data = malakit::load_dataset(a);
  EXPECT_EQ(data.dim(), 4);
  EXPECT_EQ(data.size(), 30);
  EXPECT_TRUE(data.has_binary_labels());
}
