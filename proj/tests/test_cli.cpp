#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "../tools/commands.hpp"
#include "resdim/common.hpp"
#include "resdim/mixedcarpet.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Output {
  int code = -1;
  std::string out;
};

Output run_cli(const std::string& args) {
  std::string cmd = std::string(RESDIMLAB_PATH) + " " + args + " 2>/dev/null";
  Output o;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), got);
  int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("resdimlab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("resist prints the corner resistance") {
    auto o = run_cli("resist --structure sc --n 3 --pair corners");
    CHECK(o.code == 0);
    auto want = resdim::resistance_scales(resdim::Schedule::pure(resdim::RuleTag::SC), 3, 0);
    CHECK(o.out == "n,m,TB,Pt,k1,k2\n3,0," + resdim::fmt(want.tb) + "," + resdim::fmt(want.pt) + ",3,0\n");
    auto v = run_cli("resist --structure vicsek --n 3 --pair all-m");
    CHECK(v.code == 0);
    CHECK(std::count(v.out.begin(), v.out.end(), '\n') == 5);
  }

  TEST_CASE("dims on the Vicsek set") {
    auto o = run_cli("dims --structure vicsek --depth 4 --kmax 5 --horizon 3");
    CHECK(o.code == 0);
    auto j = json::parse(o.out);
    double target = 2 * std::log(5.0) / std::log(15.0);
    CHECK(std::abs(j["heat"]["estimate"]["ds"].get<double>() - target) <= 0.1);
    CHECK(std::abs(j["volume"]["upper"].get<double>() - target) <= 1e-9);
    CHECK(std::abs(j["p_spectral_2"]["fitted"].get<double>() - target) <= 0.05);
  }

  TEST_CASE("mixed gap report") {
    auto o = run_cli("mixed --depth 5 --report gap");
    CHECK(o.code == 0);
    auto j = json::parse(o.out);
    CHECK(j["gap"]["mixed_asymptotic_ds"] == "window-resolved only");
    CHECK(j["gap"]["inputs"]["vicsek_window_ds"].get<double>() < 1.5);
  }

  TEST_CASE("outputs and manifests are deterministic") {
    auto a = scratch("a"), b = scratch("b");
    CHECK(run_cli("build --structure mixed --depth 3 --seed 4 --out " + a.string()).code == 0);
    CHECK(run_cli("build --structure mixed --depth 3 --seed 4 --out " + b.string()).code == 0);
    for (const char* f : {"manifest.json", "hierarchy.json", "edges.csv"}) {
      REQUIRE(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
    auto m = json::parse(slurp(a / "manifest.json"));
    CHECK(m["command"] == "build");
    CHECK(m["all_pass"] == true);
    std::set<std::string> ids;
    for (const auto& c : m["checks"]) {
      CHECK(c["pass"] == true);
      ids.insert(c["id"].get<std::string>());
    }
    CHECK(ids.size() == m["checks"].size());
    CHECK(ids.count("hierarchy.framework") == 1);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("config files and overrides") {
    auto dir = scratch("cfg");
    fs::create_directories(dir);
    std::ofstream(dir / "c.json") << R"({"structure": "vicsek", "depth": 2, "samples": 3})";
    auto o = run_cli("heat --config " + (dir / "c.json").string());
    CHECK(o.code == 0);
    CHECK(o.out.rfind("level,x_id,t,p\n2,", 0) == 0);
    auto out = dir / "env_out";
    setenv("RESDIMLAB_OUT", out.string().c_str(), 1);
    auto e = run_cli("validate --config " + (dir / "c.json").string() + " --out " + (dir / "ignored").string());
    unsetenv("RESDIMLAB_OUT");
    CHECK(e.code == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK_FALSE(fs::exists(dir / "ignored"));
    fs::remove_all(dir);
  }

  TEST_CASE("invalid configurations exit with code 2") {
    auto dir = scratch("bad");
    fs::create_directories(dir);
    std::ofstream(dir / "typo.json") << R"({"depht": 3})";
    std::ofstream(dir / "type.json") << R"({"depth": "three"})";
    std::ofstream(dir / "broken.json") << "{";
    CHECK(run_cli("build --config " + (dir / "typo.json").string()).code == 2);
    CHECK(run_cli("build --config " + (dir / "type.json").string()).code == 2);
    CHECK(run_cli("build --config " + (dir / "broken.json").string()).code == 2);
    CHECK(run_cli("build --structure hexagon").code == 2);
    CHECK(run_cli("penergy --structure sc --p 0.5").code == 2);
    CHECK(run_cli("build --structure custom --F 1,0 --depth 3").code == 2);
    CHECK(run_cli("mixed --report qs --depth 2").code == 2);
    CHECK(run_cli("").code != 0);
    fs::remove_all(dir);
  }

  TEST_CASE("exit status follows the checks") {
    resdimlab::RunResult r;
    r.command = "validate";
    r.primary_name = "x.json";
    r.checks.push_back({"a", "first", true, nullptr});
    CHECK(r.ok());
    r.checks.push_back({"b", "second", false, 1.5});
    CHECK_FALSE(r.ok());
    auto m = r.manifest({});
    CHECK(m["all_pass"] == false);
    CHECK(m["checks"][1]["value"] == 1.5);
    CHECK(m["files"][0] == "x.json");
  }

  TEST_CASE("config round trip") {
    resdimlab::ExperimentConfig c;
    c.structure = "custom";
    c.F = {1, 0, 0, 1, 1, 0};
    c.depth = 4;
    c.p_grid = {1.5, 2};
    auto back = resdimlab::ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.schedule().F(4) == 1);
    CHECK_THROWS_AS(resdimlab::ExperimentConfig::from_json(json::array()), resdimlab::ConfigError);
    CHECK_THROWS_AS(resdimlab::run("frobnicate", c), resdimlab::ConfigError);
  }
}
