#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "longimp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("longimp_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "longimp");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return longimp::cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }
  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  void write(const std::string& rel, const std::string& text) const {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel) << text;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

std::size_t line_count(const std::string& file) {
  std::ifstream in(file);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string fit_json(double est, double se) {
  json j;
  j["converged"] = true;
  j["coefficients"] = json::array({{{"name", "b"}, {"estimate", est}, {"se", se}}});
  j["variance_components"] = json::array();
  return j.dump();
}

}  // namespace

TEST_F(Cli, VersionAndHelp) {
  EXPECT_EQ(run({"--version"}), 0);
  EXPECT_NE(out_.str().find(longimp::cli::tool_version()), std::string::npos);
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run({"frobnicate"}), 2);
}

TEST_F(Cli, SimWritesFilesAndManifest) {
  ASSERT_EQ(run({"sim", "--out-dir", path("sim")}), 0) << err_.str();
  EXPECT_EQ(line_count(path("sim/observed.csv")), 3601u);
  for (const char* f : {"complete.csv", "truth.json", "metadata.json", "manifest.json"}) EXPECT_TRUE(fs::exists(path(std::string("sim/") + f)));
  const json m = json::parse(longimp::read_file(path("sim/manifest.json")));
  EXPECT_EQ(m["subcommand"], "sim");
  EXPECT_EQ(m["version"], longimp::cli::tool_version());
}

TEST_F(Cli, SimConfigOverridesSize) {
  write("cfg.json", R"({"n_students": 12, "n_schools": 3})");
  ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("s")}), 0) << err_.str();
  EXPECT_EQ(line_count(path("s/observed.csv")), 37u);
}

TEST_F(Cli, SimBadConfigNamesPointer) {
  write("cfg.json", R"({"missing_outcome": {"wave": "x"}})");
  EXPECT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("s")}), 2);
  EXPECT_NE(err_.str().find("/missing_outcome/wave"), std::string::npos);
}

TEST_F(Cli, SameSeedByteIdenticalPipeline) {
  write("cfg.json", R"({"n_students": 90, "n_schools": 6})");
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--seed", "4", "--out-dir", path(t + "/sim")}), 0);
    ASSERT_EQ(run({"impute", "--input", path(t + "/sim/observed.csv"), "--method", "fcs-1l-wide", "--m", "2",
                   "--maxit", "2", "--seed", "9", "--out-dir", path(t + "/imp")}),
              0)
        << err_.str();
    ASSERT_EQ(run({"analyze", "--input", path(t + "/imp/imputations.csv"), "--method", "fcs-1l-wide", "--out-dir",
                   path(t + "/fit")}),
              0)
        << err_.str();
    ASSERT_EQ(run({"pool", "--fits", path(t + "/fit"), "--out-dir", path(t + "/pool")}), 0) << err_.str();
  }
  for (const char* f : {"sim/observed.csv", "sim/complete.csv", "imp/imputations.csv", "imp/chain_stats.csv",
                        "fit/fit_1.json", "fit/fit_2.json", "pool/pooled.csv", "pool/pooled.json"}) {
    EXPECT_EQ(longimp::read_file(path(std::string("a/") + f)), longimp::read_file(path(std::string("b/") + f))) << f;
  }
}

TEST_F(Cli, ImputeRejectsUnknownMethodAndSmallNbetween) {
  write("cfg.json", R"({"n_students": 30, "n_schools": 3})");
  ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("sim")}), 0);
  EXPECT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--method", "jm-3l", "--out-dir", path("i")}), 2);
  EXPECT_NE(err_.str().find("UnsupportedMethod"), std::string::npos);
  EXPECT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--method", "jm-1l-wide", "--nbetween", "50",
                 "--out-dir", path("i")}),
            2);
  write("imp.json", R"({"method": "fcs-1l-wide", "mm": 3})");
  EXPECT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--config", path("imp.json"), "--out-dir", path("i")}), 2);
  EXPECT_NE(err_.str().find("/mm"), std::string::npos);
}

TEST_F(Cli, ImputeWarnsForIndicatorTwoLevel) {
  write("cfg.json", R"({"n_students": 60, "n_schools": 4})");
  ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("sim")}), 0);
  ASSERT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--method", "fcs-2l-di", "--m", "1", "--maxit", "1",
                 "--out-dir", path("i")}),
            0)
      << err_.str();
  EXPECT_NE(err_.str().find("often fails to converge"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write("cfg.json", R"({"n_students": 30, "n_schools": 3})");
  ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("sim")}), 0);
  write("imp.json", R"({"method": "fcs-1l-wide", "m": 4, "maxit": 1})");
  ASSERT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--config", path("imp.json"), "--m", "2", "--out-dir",
                 path("i")}),
            0)
      << err_.str();
  const json m = json::parse(longimp::read_file(path("i/manifest.json")));
  EXPECT_EQ(m["details"]["m"], 2);
  EXPECT_EQ(m["details"]["maxit"], 1);
}

TEST_F(Cli, AnalyzeAcaAndStackedInputs) {
  write("cfg.json", R"({"n_students": 60, "n_schools": 4})");
  ASSERT_EQ(run({"sim", "--config", path("cfg.json"), "--out-dir", path("sim")}), 0);
  ASSERT_EQ(run({"analyze", "--input", path("sim/observed.csv"), "--method", "fcs-1l-wide", "--aca", "--out-dir",
                 path("aca")}),
            0)
      << err_.str();
  EXPECT_TRUE(fs::exists(path("aca/fit_0.json")));
  ASSERT_EQ(run({"impute", "--input", path("sim/observed.csv"), "--method", "fcs-1l-wide", "--m", "5", "--maxit",
                 "1", "--out-dir", path("imp")}),
            0);
  ASSERT_EQ(run({"analyze", "--input", path("imp/imputations.csv"), "--formula",
                 "numeracy_score ~ prev_dep + time + (1 | id)", "--out-dir", path("fits")}),
            0)
      << err_.str();
  for (int k = 1; k <= 5; ++k) EXPECT_TRUE(fs::exists(path("fits/fit_" + std::to_string(k) + ".json")));
  EXPECT_FALSE(fs::exists(path("fits/fit_6.json")));
  EXPECT_EQ(run({"analyze", "--input", path("sim/observed.csv"), "--formula", "nonesuch ~ age", "--out-dir",
                 path("x")}),
            2);
  EXPECT_NE(err_.str().find("UnknownColumn"), std::string::npos);
  EXPECT_EQ(run({"analyze", "--input", path("sim/observed.csv"), "--formula", "y ~ ~", "--out-dir", path("x")}), 2);
  EXPECT_NE(err_.str().find("ParseError"), std::string::npos);
}

TEST_F(Cli, PoolHandMadeFits) {
  write("fits/fit_1.json", fit_json(1, 1));
  write("fits/fit_2.json", fit_json(2, 1));
  write("fits/fit_3.json", fit_json(3, 1));
  ASSERT_EQ(run({"pool", "--fits", path("fits"), "--out-dir", path("p")}), 0) << err_.str();
  const json j = json::parse(longimp::read_file(path("p/pooled.json")));
  const auto& b = j["coefficients"][0];
  EXPECT_NEAR(b["estimate"].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(b["total"].get<double>(), 7.0 / 3.0, 1e-12);
  EXPECT_NEAR(b["se"].get<double>(), std::sqrt(7.0 / 3.0), 1e-12);
  fs::remove(path("fits/fit_2.json"));
  fs::remove(path("fits/fit_3.json"));
  EXPECT_EQ(run({"pool", "--fits", path("fits"), "--out-dir", path("p")}), 2);
  EXPECT_NE(err_.str().find("TooFewImputations"), std::string::npos);
}

TEST_F(Cli, UpstreamVersionMismatchRejected) {
  write("fits/fit_1.json", fit_json(1, 1));
  write("fits/fit_2.json", fit_json(2, 1));
  write("fits/manifest.json", R"({"version": "0.0.1"})");
  EXPECT_EQ(run({"pool", "--fits", path("fits"), "--out-dir", path("p")}), 2);
  EXPECT_NE(err_.str().find("BadConfig"), std::string::npos);
}

TEST_F(Cli, DiagTraceSeriesAndAutocorrelation) {
  std::ostringstream trace;
  trace << "iteration,parameter,value\n";
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z(0, 1);
  for (int it = 1; it <= 1000; ++it) {
    trace << it << ",\"beta[Intercept,y]\"," << z(gen) << "\n";
    trace << it << ",\"omega[y,y]\"," << 1 + 0.1 * z(gen) << "\n";
  }
  write("jm/trace.csv", trace.str());
  ASSERT_EQ(run({"diag", "--trace", path("jm/trace.csv"), "--out-dir", path("d")}), 0) << err_.str();
  EXPECT_EQ(line_count(path("d/series/beta_Intercept_y_.csv")), 1001u);
  EXPECT_EQ(line_count(path("d/autocorrelation.csv")), 1u + 2u * 20u);
}

TEST_F(Cli, WorkersFromEnvironment) {
  ::setenv("LONGIMP_WORKERS", "3", 1);
  EXPECT_EQ(longimp::cli::default_workers(), 3);
  ::setenv("LONGIMP_WORKERS", "zero", 1);
  EXPECT_THROW(longimp::cli::default_workers(), std::exception);
  ::unsetenv("LONGIMP_WORKERS");
  EXPECT_EQ(longimp::cli::default_workers(), 1);
}
