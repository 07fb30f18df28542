#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "longimp/diagnostics.hpp"
#include "longimp/error.hpp"
#include "longimp/fcs.hpp"
#include "longimp/formula.hpp"
#include "longimp/imputed_stack.hpp"
#include "longimp/io.hpp"
#include "longimp/lmm.hpp"
#include "longimp/methods.hpp"
#include "longimp/pooling.hpp"
#include "longimp/simulator.hpp"
#include "longimp/tabular.hpp"

#ifndef LONGIMP_VERSION
#define LONGIMP_VERSION "0.0.0"
#endif

namespace longimp::cli {

using nlohmann::json;

std::string tool_version() { return LONGIMP_VERSION; }

json to_json(const RunManifest& m) {
  json j;
  j["subcommand"] = m.subcommand;
  j["config_paths"] = m.config_paths;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["version"] = m.version;
  j["duration_seconds"] = m.duration_seconds;
  j["details"] = m.details;
  return j;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

void check_upstream_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) return;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, path.string() + ": unreadable manifest: " + e.what());
  }
  const std::string version = j.value("version", "");
  if (version != tool_version()) {
    throw Error(ErrorKind::BadConfig, path.string() + ": written by version '" + version +
                                          "', this is " + tool_version());
  }
}

int default_workers() {
  if (const char* env = std::getenv("LONGIMP_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::BadConfig, std::string("LONGIMP_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::BadConfig, path.string() + ": " + e.what());
  }
}

fs::path metadata_path(const fs::path& input, const std::optional<fs::path>& given) {
  if (given) return *given;
  const fs::path sibling = input.parent_path() / "metadata.json";
  if (!fs::exists(sibling)) {
    throw Error(ErrorKind::BadConfig, "no --metadata given and " + sibling.string() + " does not exist");
  }
  return sibling;
}

bool is_stacked(const fs::path& input) {
  std::ifstream in(input);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + input.string());
  std::string header;
  std::getline(in, header);
  const auto fields = split_csv_line(header);
  return !fields.empty() && fields.front() == "Imputation";
}

void write_warnings(std::ostream& log, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) log << "warning: " << w << "\n";
}

template <typename T>
T config_field(const json& cfg, const char* key, const std::optional<T>& flag, T fallback) {
  if (flag) return *flag;
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::BadConfig, std::string("/") + key + ": wrong type");
  }
}

const std::vector<std::string> kImputeKeys{"method", "m", "maxit", "nburn", "nbetween", "mtw_window", "workers", "seed"};

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ? c : '_';
  return out;
}

}  // namespace

int cmd_sim(const SimArgs& args, std::ostream& log) {
  Stopwatch clock;
  SimConfig cfg;
  RunManifest manifest;
  manifest.subcommand = "sim";
  if (args.config) {
    cfg = sim_config_from_json(read_json_file(*args.config));
    manifest.config_paths.push_back(args.config->string());
  }
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  manifest.seed = cfg.seed;

  const SimOutput sim = simulate(cfg);
  fs::create_directories(args.out_dir);
  auto csv = [](const Dataset& d) {
    std::ostringstream s;
    write_csv(s, d);
    return s.str();
  };
  write_file_atomic(args.out_dir / "complete.csv", csv(sim.complete));
  write_file_atomic(args.out_dir / "observed.csv", csv(sim.observed));
  write_file_atomic(args.out_dir / "truth.json", to_json(sim.truth).dump(2) + "\n");
  write_file_atomic(args.out_dir / "metadata.json", to_json(Metadata::of(sim.observed)).dump(2) + "\n");
  manifest.outputs = {"complete.csv", "observed.csv", "truth.json", "metadata.json"};
  manifest.details["rows"] = sim.observed.n_rows();
  manifest.duration_seconds = clock.seconds();
  write_manifest(args.out_dir, manifest);
  log << "simulated " << sim.observed.n_rows() << " rows into " << args.out_dir.string() << "\n";
  return 0;
}

int cmd_impute(const ImputeArgs& args, std::ostream& log) {
  Stopwatch clock;
  RunManifest manifest;
  manifest.subcommand = "impute";
  json cfg = json::object();
  if (args.config) {
    cfg = read_json_file(*args.config);
    if (!cfg.is_object()) throw Error(ErrorKind::BadConfig, "/: impute config must be an object");
    for (const auto& [key, _] : cfg.items()) {
      if (std::find(kImputeKeys.begin(), kImputeKeys.end(), key) == kImputeKeys.end()) {
        throw Error(ErrorKind::BadConfig, "/" + key + ": unknown field");
      }
    }
    manifest.config_paths.push_back(args.config->string());
  }
  const std::string method_name = config_field<std::string>(cfg, "method", args.method, "");
  if (method_name.empty()) throw Error(ErrorKind::BadConfig, "/method: required");
  const MethodId id = method_from_name(method_name);

  ImputeOptions opt;
  opt.m = config_field(cfg, "m", args.m, opt.m);
  opt.maxit = config_field(cfg, "maxit", args.maxit, opt.maxit);
  if (auto v = args.nburn ? args.nburn : (cfg.contains("nburn") ? std::optional<int>(config_field<int>(cfg, "nburn", {}, 0)) : std::nullopt)) {
    opt.nburn = v;
  }
  if (auto v = args.nbetween ? args.nbetween : (cfg.contains("nbetween") ? std::optional<int>(config_field<int>(cfg, "nbetween", {}, 0)) : std::nullopt)) {
    opt.nbetween = v;
  }
  opt.mtw_window = config_field(cfg, "mtw_window", args.mtw_window, opt.mtw_window);
  opt.workers = config_field(cfg, "workers", args.workers, default_workers());
  opt.seed = config_field<std::uint64_t>(cfg, "seed", args.seed, opt.seed);
  if (opt.m < 1) throw Error(ErrorKind::BadConfig, "/m: must be at least 1");
  if (opt.maxit < 1) throw Error(ErrorKind::BadConfig, "/maxit: must be at least 1");
  if (opt.workers < 1) throw Error(ErrorKind::BadConfig, "/workers: must be at least 1");
  if (opt.nburn && *opt.nburn < 1) throw Error(ErrorKind::BadConfig, "/nburn: must be at least 1");
  if (opt.nbetween && *opt.nbetween < 100) throw Error(ErrorKind::BadConfig, "/nbetween: must be at least 100");
  if (opt.mtw_window < 0) throw Error(ErrorKind::BadConfig, "/mtw_window: must be non-negative");
  manifest.seed = opt.seed;

  check_upstream_manifest(args.input.parent_path());
  const fs::path meta_path = metadata_path(args.input, args.metadata);
  const Dataset data = read_csv(args.input, read_metadata(meta_path));
  manifest.inputs = {args.input.string(), meta_path.string()};

  MethodRun run = run_method(id, data, opt);
  write_warnings(log, run.warnings);

  fs::create_directories(args.out_dir);
  {
    std::ostringstream s;
    write_stacked_csv(s, run.stack);
    write_file_atomic(args.out_dir / "imputations.csv", s.str());
  }
  write_file_atomic(args.out_dir / "metadata.json", to_json(Metadata::of(data)).dump(2) + "\n");
  manifest.outputs = {"imputations.csv", "metadata.json"};
  if (run.trace) {
    std::ostringstream s;
    write_trace_csv(s, *run.trace);
    write_file_atomic(args.out_dir / "trace.csv", s.str());
    manifest.outputs.push_back("trace.csv");
  }
  if (run.stats) {
    std::ostringstream s;
    write_chain_stats_csv(s, *run.stats);
    write_file_atomic(args.out_dir / "chain_stats.csv", s.str());
    manifest.outputs.push_back("chain_stats.csv");
  }
  manifest.details["method"] = method_info(id).name;
  manifest.details["m"] = opt.m;
  manifest.details["maxit"] = opt.maxit;
  if (opt.nburn) manifest.details["nburn"] = *opt.nburn;
  if (opt.nbetween) manifest.details["nbetween"] = *opt.nbetween;
  manifest.details["workers"] = opt.workers;
  manifest.details["default_formula"] = default_formula(id);
  manifest.details["warnings"] = run.warnings;
  manifest.duration_seconds = clock.seconds();
  write_manifest(args.out_dir, manifest);
  log << method_info(id).name << ": wrote " << run.stack.m() << " imputations to " << args.out_dir.string() << "\n";
  return 0;
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
  Stopwatch clock;
  RunManifest manifest;
  manifest.subcommand = "analyze";
  std::string text;
  if (args.formula) {
    text = *args.formula;
  } else if (args.method) {
    text = default_formula(method_from_name(*args.method));
  } else {
    throw Error(ErrorKind::BadConfig, "analyze needs --formula or --method");
  }
  const ModelFormula formula = parse_formula(text);
  const Criterion criterion = args.ml ? Criterion::ML : Criterion::REML;

  check_upstream_manifest(args.input.parent_path());
  const fs::path meta_path = metadata_path(args.input, args.metadata);
  const Metadata meta = read_metadata(meta_path);
  manifest.inputs = {args.input.string(), meta_path.string()};

  std::vector<std::pair<int, Dataset>> datasets;
  if (is_stacked(args.input)) {
    ImputedStack stack = read_stacked_csv(args.input, meta);
    if (args.aca) {
      datasets.emplace_back(0, std::move(stack.original));
    } else {
      for (std::size_t k = 0; k < stack.m(); ++k) datasets.emplace_back(static_cast<int>(k + 1), std::move(stack.imputations[k]));
    }
  } else {
    datasets.emplace_back(0, read_csv(args.input, meta));
  }
  if (datasets.empty()) throw Error(ErrorKind::BadConfig, args.input.string() + " holds no completed datasets");

  fs::create_directories(args.out_dir);
  int nonconverged = 0;
  json rows = json::array();
  for (auto& [k, d] : datasets) {
    formula.bind(d);
    if (args.aca) d = available_case_filter(d, formula.variables());
    LmmFit fit = fit_lmm(formula, d, criterion);
    if (!fit.converged) {
      ++nonconverged;
      log << "warning: fit of dataset " << k << " did not converge\n";
    }
    write_warnings(log, fit.warnings);
    json j = to_json(fit);
    j["dataset"] = k;
    const std::string name = "fit_" + std::to_string(k) + ".json";
    write_file_atomic(args.out_dir / name, j.dump(2) + "\n");
    manifest.outputs.push_back(name);
    rows.push_back({{"dataset", k}, {"n_obs", fit.n_obs}, {"converged", fit.converged}});
  }
  manifest.details["formula"] = formula.to_string();
  manifest.details["criterion"] = to_string(criterion);
  manifest.details["aca"] = args.aca;
  manifest.details["fits"] = rows;
  manifest.details["nonconverged"] = nonconverged;
  manifest.duration_seconds = clock.seconds();
  write_manifest(args.out_dir, manifest);
  log << "fitted " << datasets.size() << " dataset(s), " << nonconverged << " not converged\n";
  return args.strict && nonconverged > 0 ? 4 : 0;
}

int cmd_pool(const PoolArgs& args, std::ostream& log) {
  Stopwatch clock;
  RunManifest manifest;
  manifest.subcommand = "pool";
  std::vector<fs::path> files;
  for (const auto& p : args.fits) {
    if (fs::is_directory(p)) {
      check_upstream_manifest(p);
      std::vector<std::pair<int, fs::path>> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("fit_", 0) != 0 || entry.path().extension() != ".json") continue;
        found.emplace_back(std::atoi(name.c_str() + 4), entry.path());
      }
      std::sort(found.begin(), found.end());
      for (auto& f : found) files.push_back(f.second);
    } else {
      files.push_back(p);
    }
  }
  std::vector<FitSummary> fits;
  for (const auto& f : files) {
    fits.push_back(fit_summary_from_json(read_json_file(f)));
    manifest.inputs.push_back(f.string());
  }
  const PooledResult result = pool(fits, args.strict);
  fs::create_directories(args.out_dir);
  write_file_atomic(args.out_dir / "pooled.csv", pooled_csv(result));
  write_file_atomic(args.out_dir / "pooled.json", to_json(result).dump(2) + "\n");
  manifest.outputs = {"pooled.csv", "pooled.json"};
  manifest.details["m"] = result.m;
  manifest.details["nonconverged"] = result.n_nonconverged;
  manifest.details["excluded"] = result.n_excluded;
  manifest.duration_seconds = clock.seconds();
  write_manifest(args.out_dir, manifest);
  if (result.n_nonconverged > 0) {
    log << "warning: " << result.n_nonconverged << " fit(s) did not converge"
        << (args.strict ? " and were excluded" : "") << "\n";
  }
  log << "pooled " << result.m << " fits\n";
  return 0;
}

int cmd_diag(const DiagArgs& args, std::ostream& log) {
  Stopwatch clock;
  RunManifest manifest;
  manifest.subcommand = "diag";
  if (args.trace.has_value() == args.chain_stats.has_value()) {
    throw Error(ErrorKind::BadConfig, "diag needs exactly one of --trace and --chain-stats");
  }
  if (args.max_lag < 1) throw Error(ErrorKind::BadConfig, "/max_lag: must be at least 1");

  // parameter -> (iteration, value)
  std::vector<std::pair<std::string, std::vector<std::pair<int, double>>>> series;
  if (args.trace) {
    check_upstream_manifest(args.trace->parent_path());
    const ChainTrace trace = read_trace_csv(*args.trace);
    manifest.inputs.push_back(args.trace->string());
    for (std::size_t p = 0; p < trace.names().size(); ++p) {
      std::vector<std::pair<int, double>> s;
      for (std::size_t it = 0; it < trace.iterations(); ++it) s.emplace_back(static_cast<int>(it + 1), trace.at(it, p));
      series.emplace_back(trace.names()[p], std::move(s));
    }
  } else {
    check_upstream_manifest(args.chain_stats->parent_path());
    const ChainStats stats = read_chain_stats_csv(*args.chain_stats);
    manifest.inputs.push_back(args.chain_stats->string());
    std::map<std::pair<int, std::string>, std::size_t> index;
    for (const auto& s : stats) {
      for (const char* which : {"mean", "sd"}) {
        const std::string name = "chain" + std::to_string(s.chain) + ":" + which + "(" + s.column + ")";
        auto [it, fresh] = index.try_emplace({s.chain, name}, series.size());
        if (fresh) series.emplace_back(name, std::vector<std::pair<int, double>>{});
        series[it->second].second.emplace_back(s.iteration, which[0] == 'm' ? s.mean : s.sd);
      }
    }
  }

  fs::create_directories(args.out_dir / "series");
  std::ostringstream acf;
  acf << "parameter,lag,autocorrelation\n";
  for (const auto& [name, points] : series) {
    std::ostringstream s;
    s << "iteration,value\n";
    std::vector<double> values;
    for (const auto& [it, v] : points) {
      s << it << "," << format_number(v) << "\n";
      values.push_back(v);
    }
    const std::string file = "series/" + sanitize(name) + ".csv";
    write_file_atomic(args.out_dir / file, s.str());
    manifest.outputs.push_back(file);
    for (int lag = 1; lag <= args.max_lag && static_cast<std::size_t>(lag) < values.size(); ++lag) {
      std::string cell = "NA";
      try {
        cell = format_number(autocorr(values, static_cast<std::size_t>(lag)));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateSeries) throw;
      }
      acf << "\"" << name << "\"," << lag << "," << cell << "\n";
    }
  }
  write_file_atomic(args.out_dir / "autocorrelation.csv", acf.str());
  manifest.outputs.push_back("autocorrelation.csv");
  manifest.details["parameters"] = series.size();
  manifest.duration_seconds = clock.seconds();
  write_manifest(args.out_dir, manifest);
  log << "wrote " << series.size() << " series\n";
  return 0;
}

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadConfig:
    case ErrorKind::Io:
    case ErrorKind::ParseCsv:
    case ErrorKind::ParseError:
    case ErrorKind::UnknownColumn:
    case ErrorKind::UnknownParam:
    case ErrorKind::UnknownLevel:
    case ErrorKind::UnknownStub:
    case ErrorKind::InvalidSchema:
    case ErrorKind::MalformedWideName:
    case ErrorKind::InvalidSpec:
    case ErrorKind::UnsupportedMethod:
    case ErrorKind::MisalignedParams:
    case ErrorKind::TooFewImputations:
      return 2;
    default:
      return 3;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple imputation for clustered longitudinal data", "longimp"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "Simulate a complete and an incomplete study dataset");
  sim_cmd->add_option("--config", sim.config, "JSON simulation config; flags override its fields");
  sim_cmd->add_option("--seed", sim.seed, "Random seed");
  sim_cmd->add_option("--out-dir", sim.out_dir, "Output directory");

  ImputeArgs imp;
  auto* imp_cmd = app.add_subcommand("impute", "Multiply impute a long dataset");
  imp_cmd->add_option("--input", imp.input, "Long CSV")->required();
  imp_cmd->add_option("--metadata", imp.metadata, "Column metadata JSON (default: metadata.json next to the input)");
  imp_cmd->add_option("--config", imp.config, "JSON config with method, m, maxit, nburn, nbetween, mtw_window, workers, seed");
  imp_cmd->add_option("--method", imp.method, "Imputation method");
  imp_cmd->add_option("--m", imp.m, "Number of imputations");
  imp_cmd->add_option("--maxit", imp.maxit, "Chained-equations cycles");
  imp_cmd->add_option("--nburn", imp.nburn, "Joint-model burn-in sweeps");
  imp_cmd->add_option("--nbetween", imp.nbetween, "Joint-model sweeps between imputations (at least 100)");
  imp_cmd->add_option("--mtw-window", imp.mtw_window, "Moving time window width");
  imp_cmd->add_option("--workers", imp.workers, "Parallel chains (default: LONGIMP_WORKERS or 1)");
  imp_cmd->add_option("--seed", imp.seed, "Random seed");
  imp_cmd->add_option("--out-dir", imp.out_dir, "Output directory");

  AnalyzeArgs ana;
  auto* ana_cmd = app.add_subcommand("analyze", "Fit a mixed model to each dataset");
  ana_cmd->add_option("--input", ana.input, "CSV or stacked imputations")->required();
  ana_cmd->add_option("--metadata", ana.metadata, "Column metadata JSON");
  ana_cmd->add_option("--formula", ana.formula, "Model formula");
  ana_cmd->add_option("--method", ana.method, "Use the default formula of this imputation method");
  ana_cmd->add_flag("--aca", ana.aca, "Available-case analysis of the incomplete data");
  ana_cmd->add_flag("--ml", ana.ml, "Maximum likelihood instead of REML");
  ana_cmd->add_flag("--strict", ana.strict, "Exit with code 4 when any fit fails to converge");
  ana_cmd->add_option("--out-dir", ana.out_dir, "Output directory");

  PoolArgs pl;
  auto* pool_cmd = app.add_subcommand("pool", "Combine per-imputation fits");
  pool_cmd->add_option("--fits", pl.fits, "Fit JSON files or directories")->required();
  pool_cmd->add_flag("--strict", pl.strict, "Drop non-converged fits before pooling");
  pool_cmd->add_option("--out-dir", pl.out_dir, "Output directory");

  DiagArgs dg;
  auto* diag_cmd = app.add_subcommand("diag", "Sampler series and autocorrelations");
  diag_cmd->add_option("--trace", dg.trace, "Joint-model trace CSV");
  diag_cmd->add_option("--chain-stats", dg.chain_stats, "Chained-equations chain statistics CSV");
  diag_cmd->add_option("--max-lag", dg.max_lag, "Largest autocorrelation lag");
  diag_cmd->add_option("--out-dir", dg.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim_cmd) return cmd_sim(sim, err);
    if (*imp_cmd) return cmd_impute(imp, err);
    if (*ana_cmd) return cmd_analyze(ana, err);
    if (*pool_cmd) return cmd_pool(pl, err);
    if (*diag_cmd) return cmd_diag(dg, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error [Io]: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace longimp::cli
