#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "boxprob/io.hpp"
#include "cli_runner.hpp"
#include "helpers.hpp"

using namespace testing_helpers;
using nlohmann::json;

namespace {

std::string bundle(const std::string& name) {
  const std::string dir = fixture(name);
  return "--model " + dir + "/model.json --samples " + dir + "/samples.csv --uncertainty " + dir + "/uncertainty.json";
}

std::string temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("boxprob_cli_" + name);
  std::ofstream(path) << content;
  return path.string();
}

}  // namespace

TEST(Cli, ComputeFullJson) {
  const auto r = run_cli("compute " + bundle("iris_dt4"));
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["methods"], json::array({"full"}));
  ASSERT_EQ(j["samples"].size(), 15u);
  for (const auto& s : j["samples"]) {
    const auto& res = s["results"][0];
    EXPECT_GE(res["robustness"].get<double>(), 0.0);
    EXPECT_LE(res["robustness"].get<double>(), 1.0);
    EXPECT_EQ(res["boxes_enumerated"], 30);
  }
  EXPECT_EQ(j["failures"], 0);
}

TEST(Cli, ComputeCsvToFile) {
  const auto path = (std::filesystem::temp_directory_path() / "boxprob_cli_out.csv").string();
  std::filesystem::remove(path);
  const auto r = run_cli("compute --method mc --mc-samples 1000 --format csv -o " + path + " " + bundle("iris_dt4"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_TRUE(r.out.empty());
  const auto rows = boxprob::read_file(path);
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 16);
  EXPECT_NE(rows.find(",mc:1000,"), std::string::npos);
}

TEST(Cli, CompareReportsAgreement) {
  const auto r = run_cli("compare --methods full,pruned:0.99 " + bundle("iris_dt4"));
  ASSERT_EQ(r.exit_code, 0);
  const auto j = json::parse(r.out);
  ASSERT_EQ(j["agreement"].size(), 1u);
  EXPECT_EQ(j["agreement"][0]["a"], "full");
  EXPECT_EQ(j["agreement"][0]["b"], "pruned:0.99");
  EXPECT_GE(j["agreement"][0]["r_squared"].get<double>(), 0.9999);
  EXPECT_TRUE(j["pruning_checks"][0]["violations"].empty());
}

TEST(Cli, CompareNeedsTwoMethods) {
  EXPECT_EQ(run_cli("compare --methods full " + bundle("iris_dt4") + " 2>/dev/null").exit_code, 1);
  EXPECT_EQ(run_cli("compare --methods full,bogus " + bundle("iris_dt4") + " 2>/dev/null").exit_code, 1);
}

TEST(Cli, FileLevelErrorsExitWithOne) {
  const auto bad_model = temp_file("bad_model.json", R"({"type": "decision_tree"})");
  const std::string dir = fixture("iris_dt4");
  const auto r = run_cli("compute --model " + bad_model + " --samples " + dir + "/samples.csv --uncertainty " + dir +
                         "/uncertainty.json 2>&1");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("error: "), std::string::npos);
  const auto wrong_dims = temp_file("wrong_dims.json", R"([{"kind": "mvn", "cov": [[1]]}, {"kind": "mvn", "cov": [[1]]}])");
  EXPECT_EQ(run_cli("compute --model " + dir + "/model.json --samples " + dir + "/samples.csv --uncertainty " +
                    wrong_dims + " 2>/dev/null")
                .exit_code,
            1);
}

TEST(Cli, MissingArgumentsAreUsageErrors) {
  EXPECT_NE(run_cli("compute 2>/dev/null").exit_code, 0);
  EXPECT_NE(run_cli("compute --model /nonexistent.json 2>/dev/null").exit_code, 0);
  EXPECT_NE(run_cli("2>/dev/null").exit_code, 0);
}

TEST(Cli, PerSampleErrorsExitWithTwo) {
  const std::string dir = fixture("iris_dt4");
  const auto samples = temp_file("samples.csv", "f0,f1,f2,f3\n5.1,3.5,1.4,0.2\n5.1,abc,1.4,0.2\n6.0,3.0\n");
  const auto r = run_cli("compute --model " + dir + "/model.json --samples " + samples + " --uncertainty " + dir +
                         "/uncertainty.json 2>&1 >/dev/null");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.out.find("sample 1 (full): "), std::string::npos);
  EXPECT_NE(r.out.find("line 3, column 2"), std::string::npos);
  EXPECT_NE(r.out.find("sample 2 (full): "), std::string::npos);
  const auto j = json::parse(run_cli("compute --model " + dir + "/model.json --samples " + samples + " --uncertainty " +
                                     dir + "/uncertainty.json 2>/dev/null")
                                 .out);
  EXPECT_EQ(j["failures"], 2);
  EXPECT_TRUE(j["samples"][0]["results"][0].contains("robustness"));
  EXPECT_TRUE(j["samples"][1]["results"][0].contains("error"));
}

TEST(Cli, BudgetExceededIsAPerSampleError) {
  const auto r = run_cli("compute --max-boxes 10 " + bundle("iris_dt4") + " 2>&1 >/dev/null");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.out.find("budget"), std::string::npos);
}

TEST(Cli, InspectJson) {
  const auto r = run_cli("inspect --json --model " + fixture("mnist5_rf/model.json"));
  ASSERT_EQ(r.exit_code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["type"], "random_forest");
  EXPECT_EQ(j["n_features"], 25);
  EXPECT_EQ(j["n_boxes"], 33'592'320);
  EXPECT_EQ(j["overflow"], false);
  const auto text = run_cli("inspect --model " + fixture("iris_dt4/model.json"));
  EXPECT_NE(text.out.find("boxes (n_b)     30"), std::string::npos);
}

TEST(Cli, OutputIndependentOfThreadCount) {
  const std::string args = "compare --methods full,pruned:0.9,mc:20000 " + bundle("iris_xgb_norta");
  const auto one = run_cli(args, "BOXPROB_THREADS=1");
  const auto four = run_cli(args, "BOXPROB_THREADS=4");
  ASSERT_EQ(one.exit_code, 0);
  EXPECT_EQ(one.out, four.out);
}
