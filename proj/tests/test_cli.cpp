#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stochlind/app/runner.hpp"

using namespace stochlind::app;
namespace fs = std::filesystem;

namespace {

ScenarioConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stochlind-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Proc {
  int code = -1;
  std::string out;
};

Proc run_cli(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + STOCHLIND_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Proc p;
  p.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  p.out = slurp(out);
  return p;
}

const std::string jcm_text =
    "scenario = jcm-unitary\n"
    "[params]\n"
    "mean_photons = 0.4   # inline comment\n"
    "[grid]\n"
    "t_end = 5\n"
    "n_steps = 50\n";

}  // namespace

TEST(ConfigParser, Grammar) {
  const auto c = parse(
      "# comment\n; also a comment\n\nscenario = jcm-damped\n[params]\n  gamma = 0.05 # trailing\n"
      "alpha = 1,2\nname = a#b\n[output]\ndir = out dir\n");
  EXPECT_EQ(c.scenario, "jcm-damped");
  EXPECT_DOUBLE_EQ(c.real("params", "gamma"), 0.05);
  EXPECT_EQ(c.reals("params", "alpha"), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(c.text("params", "name"), "a#b");
  EXPECT_EQ(c.text("output", "dir"), "out dir");
}

TEST(ConfigParser, Errors) {
  EXPECT_THROW(parse("[params]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\nscenario = b\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\nfoo = 1\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\n[nowhere]\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\n[params]\nx = 1\nx = 2\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\n[params]\njust words\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\n[params\n"), ConfigError);
  EXPECT_THROW(parse("scenario = a\n[params]\nb@d = 1\n"), ConfigError);
  EXPECT_THROW(parse_real("x", "1.5abc"), ConfigError);
  EXPECT_THROW(parse_unsigned("x", "-3"), ConfigError);
}

TEST(Resolve, StrictSchema) {
  EXPECT_THROW(find_scenario("no-such-scenario"), ConfigError);
  EXPECT_THROW(resolve(parse("scenario = jcm-unitary\n[params]\nbogus = 1\n"), find_scenario("jcm-unitary")),
               ConfigError);
  EXPECT_THROW(resolve(parse("scenario = jcm-unitary\n[ensemble]\nn_traj = 1\n"), find_scenario("jcm-unitary")),
               ConfigError);
  const auto c = resolve(parse("scenario = jcm-unitary\n"), find_scenario("jcm-unitary"));
  EXPECT_TRUE(c.has("params", "coupling"));
  EXPECT_TRUE(c.has("grid", "n_steps"));
}

TEST(Registry, Complete) {
  const auto& r = scenario_registry();
  EXPECT_GE(r.size(), 9u);
  for (const char* name : {"jcm-unitary", "jcm-damped", "jcm-stochastic", "trap-fock", "trap-thermal", "trap-coherent",
                           "trap-fit", "intrinsic", "collapse-compare", "moments-selftest", "lindblad-generic"})
    EXPECT_NO_THROW(find_scenario(name)) << name;
  EXPECT_EQ(find_scenario("jcm-damped").anchor, "§III.A phase-damped JCM");
  EXPECT_EQ(find_scenario("collapse-compare").anchor, "§V variance process");
}

TEST(Runner, WritesCsvThenManifest) {
  const fs::path dir = scratch("runner");
  Overrides o;
  o.out = dir.string();
  const auto rep = run_scenario(parse(jcm_text), o);
  EXPECT_EQ(rep.exit_code, exit_ok);
  ASSERT_FALSE(rep.outputs.empty());
  const std::string csv = slurp(rep.outputs.front());
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line) && line.rfind("#", 0) == 0) {
  }
  EXPECT_EQ(line.substr(0, 2), "t,");
  const json m = json::parse(slurp(rep.manifest));
  EXPECT_EQ(m["artifact"], "stochlind");
  EXPECT_EQ(m["failures"], 0);
  EXPECT_EQ(m["config"]["params"]["mean_photons"], "0.4");
  EXPECT_FALSE(m["checks"].empty());
  for (const auto& p : fs::directory_iterator(dir)) EXPECT_NE(p.path().extension(), ".tmp");

  const auto again = run_scenario(parse(jcm_text), o);
  EXPECT_EQ(slurp(again.outputs.front()), csv);
}

TEST(Runner, OutputName) {
  const fs::path dir = scratch("name");
  Overrides o;
  o.out = dir.string();
  const auto rep = run_scenario(parse(jcm_text + "[output]\nname = custom\n"), o);
  EXPECT_TRUE(fs::exists(dir / "custom.manifest.json"));
  EXPECT_THROW(run_scenario(parse(jcm_text + "[output]\nname = a/b\n"), o), ConfigError);
}

TEST(Runner, MalformedKeyWritesNothing) {
  const fs::path dir = scratch("malformed");
  Overrides o;
  o.out = dir.string();
  EXPECT_THROW(run_scenario(parse(jcm_text + "[ensemble]\nn_trajj = 5\n"), o), ConfigError);
  EXPECT_THROW(run_scenario(parse("scenario = jcm-unitary\n[params]\ncoupling = abc\n"), o), ConfigError);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Runner, OverridesMustApply) {
  Overrides o;
  o.traj = 10;
  EXPECT_THROW(run_scenario(parse(jcm_text), o), ConfigError);
}

TEST(Runner, ExitCodeMapping) {
  std::ostringstream err;
  EXPECT_EQ(guarded([]() -> int { throw ConfigError("x"); }, err), exit_config);
  EXPECT_EQ(guarded([]() -> int { throw stochlind::NumericalError("x", 3); }, err), exit_numerical);
  EXPECT_EQ(guarded([]() -> int { throw IoError("x"); }, err), exit_io);
  EXPECT_EQ(guarded([]() -> int { throw stochlind::InvariantError("x"); }, err), exit_config);
  EXPECT_EQ(guarded([] { return 0; }, err), exit_ok);
  EXPECT_NE(err.str().find("step 3"), std::string::npos);
}

TEST(Cli, List) {
  const auto p = run_cli("list", scratch("list"));
  EXPECT_EQ(p.code, 0);
  EXPECT_NE(p.out.find("jcm-damped"), std::string::npos);
  EXPECT_NE(p.out.find("§III.A phase-damped JCM"), std::string::npos);
  EXPECT_NE(p.out.find("§V variance process"), std::string::npos);
  std::size_t lines = 0;
  for (char c : p.out) lines += c == '\n';
  EXPECT_GE(lines, 9u);
}

TEST(Cli, RunAndExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "ok.ini") << jcm_text;
    std::ofstream(dir / "bad.ini") << jcm_text << "[params]\ncoupling = oops\n";
    std::ofstream(dir / "typo.ini") << jcm_text << "[output]\ndirr = x\n";
  }
  const std::string out = " --out \"" + (dir / "res").string() + "\"";
  EXPECT_EQ(run_cli("run \"" + (dir / "ok.ini").string() + "\"" + out, dir).code, 0);
  EXPECT_TRUE(fs::exists(dir / "res" / "jcm-unitary.manifest.json"));
  EXPECT_EQ(run_cli("run \"" + (dir / "bad.ini").string() + "\"" + out, dir).code, exit_config);
  EXPECT_EQ(run_cli("run \"" + (dir / "typo.ini").string() + "\"" + out, dir).code, exit_config);
  EXPECT_EQ(run_cli("run \"" + (dir / "missing.ini").string() + "\"" + out, dir).code, exit_io);
  EXPECT_EQ(run_cli("run \"" + (dir / "ok.ini").string() + "\" --traj 5" + out, dir).code, exit_config);
  EXPECT_EQ(run_cli("frobnicate", dir).code, exit_config);
  EXPECT_EQ(run_cli("run", dir).code, exit_config);
}

TEST(Cli, ShippedConfigsParse) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(STOCHLIND_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    const auto user = load_config(e.path().string());
    EXPECT_NO_THROW(resolve(user, find_scenario(user.scenario))) << e.path();
    ++n;
  }
  EXPECT_GE(n, 11u);
}
