#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace longimp::cli {

namespace fs = std::filesystem;

std::string tool_version();

/// Written as manifest.json in every output directory.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> config_paths;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = tool_version();
  double duration_seconds = 0;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest& m);
void write_manifest(const fs::path& dir, const RunManifest& m);

/// Throws BadConfig when `dir` holds a manifest from another tool version.
void check_upstream_manifest(const fs::path& dir);

/// Worker count from LONGIMP_WORKERS, else 1.
int default_workers();

struct SimArgs {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out_dir = ".";
};

struct ImputeArgs {
  fs::path input;
  std::optional<fs::path> metadata;
  std::optional<fs::path> config;
  std::optional<std::string> method;
  std::optional<int> m, maxit, nburn, nbetween, mtw_window, workers;
  std::optional<std::uint64_t> seed;
  fs::path out_dir = ".";
};

struct AnalyzeArgs {
  fs::path input;
  std::optional<fs::path> metadata;
  std::optional<std::string> formula;
  std::optional<std::string> method;  // picks the default formula
  bool aca = false;
  bool ml = false;
  bool strict = false;
  fs::path out_dir = ".";
};

struct PoolArgs {
  std::vector<fs::path> fits;  // files or directories of fit_*.json
  bool strict = false;
  fs::path out_dir = ".";
};

struct DiagArgs {
  std::optional<fs::path> trace;
  std::optional<fs::path> chain_stats;
  int max_lag = 20;
  fs::path out_dir = ".";
};

/// Each returns the process exit code; library errors propagate.
int cmd_sim(const SimArgs& args, std::ostream& log);
int cmd_impute(const ImputeArgs& args, std::ostream& log);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& log);
int cmd_pool(const PoolArgs& args, std::ostream& log);
int cmd_diag(const DiagArgs& args, std::ostream& log);

/// Full front end: argument parsing, dispatch and exit-code mapping.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace longimp::cli
