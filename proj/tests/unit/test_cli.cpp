#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <nlohmann/json.hpp>

#include "caa/cli/cli.hpp"
#include "caa/eval/report.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "caa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = caa::cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("caa_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json") << R"({"seed": 5,
      "dataset": {"n_train": 200, "n_test": 40},
      "train": {"epochs": 1, "batch_size": 32},
      "attack": {"steps": 3, "iterations": 2},
      "eval": {"samples": 12},
      "sweep": {"samples": 3}})";
  }
  static fs::path path(const std::string& name) { return dir_ / name; }
  static std::string config() { return path("tiny.json").string(); }

  static const std::string& checkpoint() {
    static const std::string p = [] {
      const CliRun r = run({"train", "standard", "--config", config(), "--out", path("std.ckpt").string()});
      EXPECT_EQ(r.code, 0) << r.err;
      return path("std.ckpt").string();
    }();
    return p;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  const CliRun help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("eval"), std::string::npos);
  EXPECT_EQ(run({"--bogus"}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
  EXPECT_EQ(run({"train", "sideways", "--out", "x"}).code, 1);
  EXPECT_EQ(run({"eval", "--format", "xml"}).code, 1);
}

TEST_F(CliTest, RuntimeErrorsNameTheProblem) {
  const std::string missing = path("does_not_exist.json").string();
  const CliRun r = run({"eval", "--config", missing});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  const CliRun no_ckpt = run({"eval", "--config", config()});
  EXPECT_EQ(no_ckpt.code, 2);
  EXPECT_NE(no_ckpt.err.find("--checkpoint"), std::string::npos);
  EXPECT_EQ(run({"dataset", "fetch-check", "--dir", path("nowhere").string()}).code, 2);
  EXPECT_EQ(run({"eval", "--config", config(), "--threads", "0", "--checkpoint", checkpoint()}).code, 2);
}

TEST_F(CliTest, DatasetGenWritesBothSplits) {
  const CliRun r = run({"dataset", "gen", "--config", config(), "--out", path("data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(fs::file_size(path("data") / "train.bin"), 200u * 3073u);
  EXPECT_EQ(fs::file_size(path("data") / "test.bin"), 40u * 3073u);
}

TEST_F(CliTest, IdentitySuiteHasZeroAsr) {
  const fs::path report = path("identity.json");
  const CliRun r = run({"eval", "--config", config(), "--checkpoint", checkpoint(), "--suite", "identity", "--out",
                     report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const caa::eval::MetricsReport m = caa::eval::read_report_json(report);
  ASSERT_EQ(m.suites.size(), 1u);
  EXPECT_EQ(m.suites[0].asr, 0.0);
  EXPECT_EQ(m.suites[0].ra, m.clean_accuracy);
  EXPECT_EQ(m.n, 12u);
  EXPECT_EQ(r.out, caa::eval::report_csv(m));
}

TEST_F(CliTest, EvalIsReproducibleAndThreadIndependent) {
  const std::vector<std::string> base = {"eval", "--config", config(), "--checkpoint", checkpoint(), "--suite",
                                         "caa3a:scheduled"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  const CliRun one = with({"--out", path("a.csv").string()});
  const CliRun again = with({"--out", path("b.csv").string()});
  const CliRun threads = with({"--threads", "3"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(one.out, threads.out);
}

TEST_F(CliTest, TrainingIsByteReproducible) {
  const std::string again = path("std2.ckpt").string();
  ASSERT_EQ(run({"train", "standard", "--config", config(), "--out", again}).code, 0);
  EXPECT_EQ(slurp(checkpoint()), slurp(again));
}

TEST_F(CliTest, AttackPrintsOneRecordPerSample) {
  const CliRun r = run({"attack", "--config", config(), "--checkpoint", checkpoint(), "--index", "3", "--count", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["index"], 3);
  EXPECT_EQ(j[1]["index"], 4);
  EXPECT_EQ(run({"attack", "--config", config(), "--checkpoint", checkpoint(), "--index", "39", "--count", "2"}).code,
            2);
}

TEST_F(CliTest, SweepWritesCsv) {
  const CliRun r = run({"sweep", "--config", config(), "--checkpoint", checkpoint(), "--kind", "brightness", "--points",
                     "5", "--out", path("sweep.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(path("sweep.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 * 5);
}
