#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "experiment.hpp"

using namespace kflow;
using namespace kflow::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(KFLOW_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("kflow-test-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("every preset round-trips through TOML") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const ExperimentConfig c = preset(name);
    CHECK_NOTHROW(validate(c));
    CHECK(config_from_toml(to_toml(c)) == c);
  }
  CHECK_THROWS_AS(preset("nope"), Error);
}

TEST_CASE("presets carry the experiment settings") {
  const auto b = preset("bernoulli-3.1");
  CHECK(b.system.kind == "bernoulli");
  CHECK(b.data.train_points == 200);
  CHECK(b.data.test_points == 5000);
  CHECK(b.train.iterations == 100);
  CHECK(b.kernel.theta0 == std::vector<std::vector<double>>{{0, 1, 1, 1}});
  CHECK(preset("logistic-3.2").train.metric == "rho");
  CHECK(preset("logistic-3.2-rhol").train.iterations == 1000);
  CHECK(preset("henon-3.3").data.train_points == 100);
  CHECK(preset("lorenz-3.4").train.batch_size == 100);
}

TEST_CASE("overrides") {
  ExperimentConfig c = preset("logistic-3.2");
  apply_override(c, "train.iterations", "7");
  apply_override(c, "data.initial_condition", "pi/5");
  apply_override(c, "train.seed", "18446744073709551615");
  apply_override(c, "data.test_initial_conditions", "[\"0.2\", \"0.3\"]");
  CHECK(c.train.iterations == 7);
  CHECK(c.data.initial_condition == "pi/5");
  CHECK(c.train.seed == 18446744073709551615ULL);
  CHECK(c.data.test_initial_conditions == std::vector<std::string>{"0.2", "0.3"});
  CHECK(config_from_toml(to_toml(c)) == c);
  CHECK_THROWS_AS(apply_override(c, "train.iterations", "many"), Error);
  CHECK_THROWS_AS(apply_override(c, "train.itterations", "3"), Error);
  CHECK_THROWS_AS(config_from_toml("[system]\nkind = 3\n"), Error);
  CHECK_THROWS_AS(config_from_toml("name = \"x\"\nunknown = 1\n"), Error);
}

TEST_CASE("validation rejects broken configs") {
  ExperimentConfig c = preset("henon-3.3");
  c.kernel.theta0 = {{1.0}};
  CHECK_THROWS_AS(validate(c), Error);
  c = preset("henon-3.3");
  c.data.train_points = 0;
  CHECK_THROWS_AS(validate(c), Error);
  c = preset("henon-3.3");
  c.system.kind = "pendulum";
  CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("series for pairs yields the requested number of pairs") {
  ExperimentConfig c = preset("henon-partial-3.3.2");
  const auto s = series_for_pairs(c, c.data.initial_condition, 50);
  const auto d = embed(c, s);
  CHECK(d.size() == 50);
  CHECK(d.input_dim() == 2);
  CHECK(d.output_dim() == 2);
}

TEST_CASE("simulate command") {
  const fs::path dir = scratch_dir("simulate");
  REQUIRE(run("simulate --system logistic --x0 0.1 --steps 200 --out " + dir.string()) == 0);
  const std::string first = slurp(dir / "trajectory.csv");
  std::istringstream lines(first);
  int count = 0;
  for (std::string line; std::getline(lines, line);) ++count;
  CHECK(count == 202);
  CHECK(first.rfind("t,x0\n0,0.1\n", 0) == 0);
  CHECK(fs::exists(dir / "config.toml"));
  REQUIRE(run("simulate --config " + (dir / "config.toml").string() + " --steps 200 --out " + dir.string()) == 0);
  CHECK(slurp(dir / "trajectory.csv") == first);

  CHECK(run("simulate --system pendulum --out " + dir.string()) == 2);
  CHECK(run("simulate --preset logistic-3.2 --train.iterations many --out " + dir.string()) == 2);
  CHECK(run("simulate --preset logistic-3.2 --config x.toml") == 2);
  CHECK(run("frobnicate") == 2);
  fs::remove_all(dir);
}

TEST_CASE("train, eval and uncertainty commands") {
  const fs::path dir = scratch_dir("train");
  const std::string common = "--preset logistic-3.2 --train.iterations 5 --data.test_points 300 --out " + dir.string();
  REQUIRE(run("train " + common) == 0);
  for (const char* f : {"model.json", "history.csv", "theta.json", "report.json", "config.toml"}) {
    CHECK(fs::exists(dir / f));
  }
  const std::string history = slurp(dir / "history.csv");
  REQUIRE(run("train " + common) == 0);
  CHECK(slurp(dir / "history.csv") == history);
  CHECK(slurp(dir / "model.json").size() > 0);

  REQUIRE(run("eval " + common + " --rollout 50") == 0);
  CHECK(fs::exists(dir / "difference_0.csv"));
  CHECK(fs::exists(dir / "rollout_0.csv"));
  CHECK(fs::exists(dir / "eval.json"));

  REQUIRE(run("uncertainty " + common + " --data.test_initial_conditions [\\\"pi/4\\\"]") == 0);
  CHECK(slurp(dir / "uncertainty.csv").rfind("t,truth0,prediction0,delta0\n", 0) == 0);
  CHECK(run("uncertainty " + common + " --data.test_points 0") == 2);

  auto doc = nlohmann::json::parse(slurp(dir / "model.json"));
  doc["checksum"][0] = doc["checksum"][0].get<double>() + 1.0;
  std::ofstream(dir / "bad.json") << doc.dump();
  CHECK(run("eval " + common + " --model " + (dir / "bad.json").string()) == 5);
  fs::remove_all(dir);
}

TEST_CASE("tau command") {
  const fs::path dir = scratch_dir("tau");
  REQUIRE(run("tau --preset henon-tau --train.iterations 2 --tau.taus [0,1,2] --out " + dir.string()) == 0);
  const std::string sweep = slurp(dir / "sweep.csv");
  CHECK(sweep.rfind("tau,rmse\n0,", 0) == 0);
  CHECK(slurp(dir / "energies.csv").rfind("tau,energy\n", 0) == 0);
  fs::remove_all(dir);
}
