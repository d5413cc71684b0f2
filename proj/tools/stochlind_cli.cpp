// stochlind: run scenarios, list them, or run the invariant self-test.

#include <filesystem>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "stochlind/app/runner.hpp"
#include "stochlind/app/selftest.hpp"

using namespace stochlind::app;

// Display width of UTF-8 text: count non-continuation bytes.
static std::size_t width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

int main(int argc, char** argv) {
  CLI::App app{"Random-unitary Lindblad dynamics: scenario runner"};
  app.require_subcommand(1);

  Overrides ov;
  std::uint64_t seed = 0, traj = 0, steps = 0, workers = 0;
  std::string out;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--traj", traj, "trajectory count override")->check(CLI::PositiveNumber);
    sub->add_option("--steps", steps, "time-step count override")->check(CLI::PositiveNumber);
    sub->add_option("--workers", workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory");
  };

  std::string config_path;
  auto* run = app.add_subcommand("run", "run a scenario config");
  run->add_option("config", config_path, "scenario config file")->required();
  add_overrides(run);

  auto* list = app.add_subcommand("list", "list registered scenarios");

  auto* self = app.add_subcommand("selftest", "run the invariant suite");
  self->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  if (list->parsed()) {
    std::size_t w = 0, a = 0;
    for (const auto& s : scenario_registry()) {
      w = std::max(w, s.name.size());
      a = std::max(a, width(s.anchor));
    }
    for (const auto& s : scenario_registry()) {
      std::cout << std::left << std::setw(static_cast<int>(w + 2)) << s.name << s.anchor
                << std::string(a + 2 - width(s.anchor), ' ') << s.description << "\n";
    }
    return 0;
  }

  if (self->parsed()) {
    return guarded(
        [&] {
          const auto rep = run_selftest();
          for (const auto& c : rep.checks)
            std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << format_number(c.value)
                      << " tol=" << format_number(c.tolerance) << "\n";
          const std::filesystem::path dir = out.empty() ? "results" : out;
          write_atomic(dir / "selftest.csv", rep.table.render());
          std::cout << rep.checks.size() - rep.failures << "/" << rep.checks.size() << " checks passed\n";
          return rep.failures ? exit_checks_failed : exit_ok;
        },
        std::cerr);
  }

  if (run->count("--seed")) ov.seed = seed;
  if (run->count("--traj")) ov.traj = traj;
  if (run->count("--steps")) ov.steps = steps;
  if (run->count("--workers")) ov.workers = workers;
  if (run->count("--out")) ov.out = out;
  return guarded(
      [&] {
        const auto rep = run_scenario(load_config(config_path), ov);
        for (const auto& p : rep.outputs) std::cout << "wrote " << p.string() << "\n";
        std::cout << "wrote " << rep.manifest.string() << "\n";
        if (rep.failures) std::cerr << rep.failures << " check(s) failed; see the manifest\n";
        return rep.exit_code;
      },
      std::cerr);
}
