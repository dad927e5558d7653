#include "bml/commands.hpp"
#include "bml/config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace bml;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bml_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BML_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::vector<std::string> data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config keys") {
  Config c;
  CHECK(c.str("problem.name") == "toy-bsde");
  c.load_text("# comment\n[problem]\nname = hjb\nd = 100\n\n[optim]\nsamples = 1e5\nlr = 1e-3, 3e-3\n");
  CHECK(c.str("problem.name") == "hjb");
  CHECK(c.integer("problem.d") == 100);
  CHECK(c.integer("optim.samples") == 100000);
  CHECK(c.list("optim.lr") == std::vector<double>{1e-3, 3e-3});
  CHECK_THROWS_AS(c.load_text("[optim]\nlearning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(c.set("problem.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.load_text("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(c.integer("problem.name"), ConfigError);
  CHECK_THROWS_AS(Config().integer("optim.lr"), ConfigError);

  Config a, b;
  b.set("output.dir", "elsewhere");
  CHECK(a.hash() == b.hash());
  b.set("run.seed", "2");
  CHECK(a.hash() != b.hash());
  CHECK(a.canonical() == Config().canonical());
}

TEST_CASE("ranges") {
  CHECK(parse_range("0:1:5") == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(parse_range("0.3") == std::vector<double>{0.3});
  CHECK(parse_range("2:3:1") == std::vector<double>{2.0});
  CHECK(parse_range("1, 2,3") == std::vector<double>{1.0, 2.0, 3.0});
  CHECK_THROWS_AS(parse_range("0:1"), ConfigError);
  CHECK_THROWS_AS(parse_range("0:1:0"), ConfigError);
  CHECK_THROWS_AS(parse_range("a"), ConfigError);
}

TEST_CASE("cli exit codes and outputs") {
  SUBCASE("bad config is exit 1") {
    CHECK(run_cli("train --set optim.nonsense=1") == kExitConfig);
    CHECK(run_cli("train --set problem.name=heat") == kExitConfig);
    CHECK(run_cli("train -c /nonexistent/file.cfg") == kExitConfig);
  }

  SUBCASE("sweep writes one row per grid point") {
    const fs::path dir = scratch("sweep");
    CHECK(run_cli("sweep --out " + dir.string() +
                  " --set sweep.theta1=0.3333333333333333 --set sweep.theta2=0.5:0.7:3 --set sweep.samples=200"
                  " --set sweep.intervals=20") == kExitOk);
    const auto lines = data_lines(dir / "sweep.csv");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].rfind("theta1,theta2,bml_empirical,bml_stderr,bml_closed_form", 0) == 0);
    CHECK(fs::exists(dir / "config.json"));
  }

  SUBCASE("degenerate one-point sweep") {
    const fs::path dir = scratch("sweep1");
    CHECK(run_cli("sweep --out " + dir.string() +
                  " --set sweep.theta1=0.3 --set sweep.theta2=0.6 --set sweep.samples=50 --set sweep.intervals=10") ==
          kExitOk);
    CHECK(data_lines(dir / "sweep.csv").size() == 2);
  }

  SUBCASE("train with zero steps") {
    const fs::path dir = scratch("train0");
    CHECK(run_cli("train --out " + dir.string() +
                  " --set optim.steps=0 --set optim.samples=20 --set optim.intervals=10 --set optim.eval_samples=10") ==
          kExitOk);
    CHECK(data_lines(dir / "train.csv").size() == 2);
    std::ifstream in(dir / "summary.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["runs"].size() == 1);
  }

  SUBCASE("oracle with a constant terminal value") {
    const fs::path dir = scratch("oracle");
    CHECK(run_cli("oracle-y0 --out " + dir.string() + " --set problem.name=hjb --set oracle.constant_g=1.25 --set oracle.samples=100") ==
          kExitOk);
    std::ifstream in(dir / "oracle_y0.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["value"].get<double>() == doctest::Approx(1.25).epsilon(1e-14));
    CHECK(j["std_error"].get<double>() == 0.0);
  }

  SUBCASE("non-finite parameters are a config error") {
    CHECK(run_cli("train --set trial.theta1=nan --set optim.steps=1") == kExitConfig);
  }

  SUBCASE("numerical failure is exit 2") {
    const fs::path dir = scratch("blowup");
    CHECK(run_cli("train --out " + dir.string() +
                  " --set trial.kind=linear-scheme2 --set trial.theta1=1e308 --set optim.steps=3 --set optim.samples=10 --set optim.intervals=5") ==
          kExitNumerical);
  }
}
