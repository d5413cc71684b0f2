// runner.hpp: execute one scenario config and write its outputs.

#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "stochlind/app/config.hpp"
#include "stochlind/app/output.hpp"
#include "stochlind/app/scenarios.hpp"

namespace stochlind::app {

inline constexpr const char* artifact_version = "0.1.0";

enum ExitCode : int {
  exit_ok = 0,
  exit_checks_failed = 1,
  exit_config = 2,
  exit_numerical = 3,
  exit_io = 4,
};

// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> traj;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> workers;
  std::optional<std::string> out;
};

inline void apply(ScenarioConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.set("ensemble", "master_seed", std::to_string(*o.seed));
  if (o.traj) cfg.set("ensemble", "n_traj", std::to_string(*o.traj));
  if (o.workers) cfg.set("ensemble", "workers", std::to_string(*o.workers));
  if (o.steps) cfg.set("grid", "n_steps", std::to_string(*o.steps));
  if (o.out) cfg.set("output", "dir", *o.out);
}

struct RunReport {
  int exit_code = exit_ok;
  std::vector<std::filesystem::path> outputs;
  std::filesystem::path manifest;
  std::size_t failures = 0;
};

// Resolve, run, and write CSVs followed by the manifest. Throws on config,
// numerical and I/O errors; nothing is written unless the run completes.
inline RunReport run_scenario(ScenarioConfig user, const Overrides& o = {}) {
  namespace fs = std::filesystem;
  const ScenarioSpec& spec = find_scenario(user.scenario);
  if (o.traj && spec.ensemble.empty()) throw ConfigError(spec.name + " has no ensemble; --traj does not apply");
  if (o.seed && spec.ensemble.empty()) throw ConfigError(spec.name + " has no ensemble; --seed does not apply");
  if (o.steps && spec.grid.empty()) throw ConfigError(spec.name + " has no time grid; --steps does not apply");
  if (o.workers && spec.ensemble.empty()) throw ConfigError(spec.name + " has no ensemble; --workers does not apply");
  apply(user, o);
  ScenarioConfig cfg = resolve(user, spec);
  const fs::path dir = cfg.has("output", "dir") ? fs::path(cfg.text("output", "dir")) : fs::path("results");
  const std::string stem = cfg.has("output", "name") ? cfg.text("output", "name") : spec.name;
  if (stem.empty() || stem.find_first_of("/\\") != std::string::npos)
    throw ConfigError("[output] name must be a plain file stem");

  const auto start = std::chrono::steady_clock::now();
  ScenarioOutput result = spec.run(cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunReport rep;
  json manifest;
  manifest["artifact"] = "stochlind";
  manifest["version"] = artifact_version;
  manifest["config"] = config_echo(cfg);
  manifest["duration_seconds"] = seconds;
  json outputs = json::array();
  for (const auto& [suffix, table] : result.tables) {
    const fs::path p = dir / (stem + suffix + ".csv");
    write_atomic(p, table.render());
    rep.outputs.push_back(p);
    outputs.push_back(p.filename().string());
  }
  manifest["outputs"] = outputs;
  json checks = json::array();
  for (const auto& c : result.checks) {
    checks.push_back(to_json(c));
    if (!c.passed) ++rep.failures;
  }
  manifest["checks"] = checks;
  manifest["failures"] = rep.failures;
  manifest["results"] = result.results;
  rep.manifest = dir / (stem + ".manifest.json");
  write_atomic(rep.manifest, manifest.dump(2) + "\n");
  rep.exit_code = rep.failures ? exit_checks_failed : exit_ok;
  return rep;
}

// Map exceptions to exit codes, reporting on `err`.
template <class F>
int guarded(F&& f, std::ostream& err) {
  try {
    return f();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return exit_numerical;
  } catch (const InvariantError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return exit_io;
  }
}

}  // namespace stochlind::app
