#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "resdim/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config_path, structure, pair, report, out;
  std::vector<int> F;
  std::vector<double> p_grid, times;
  int depth = -1, n = -1, kmax = -1, horizon = -1;
  long long seed = -1;
};

void add_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "JSON experiment config");
  sub->add_option("--structure", o.structure, "sc | vicsek | mixed | custom");
  sub->add_option("--F", o.F, "level table for custom structures")->delimiter(',');
  sub->add_option("--depth", o.depth, "deepest built level");
  sub->add_option("--n", o.n, "corner-graph level (resist)");
  sub->add_option("--pair", o.pair, "corners | all-m (resist)");
  sub->add_option("--report", o.report, "gap | chain | evres | qs | all (mixed)");
  sub->add_option("--p", o.p_grid, "p values")->delimiter(',');
  sub->add_option("--times", o.times, "heat curve times")->delimiter(',');
  sub->add_option("--kmax", o.kmax, "largest ratio length k");
  sub->add_option("--horizon", o.horizon, "largest base level of separation problems");
  sub->add_option("--seed", o.seed, "sampling seed");
  sub->add_option("--out", o.out, "output directory");
}

json load_config(const Overrides& o) {
  json j = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw resdimlab::ConfigError("cannot read config file " + o.config_path);
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw resdimlab::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!o.structure.empty()) j["structure"] = o.structure;
  if (!o.F.empty()) j["F"] = o.F;
  if (o.depth >= 0) j["depth"] = o.depth;
  if (o.n >= 0) j["n"] = o.n;
  if (!o.pair.empty()) j["pair"] = o.pair;
  if (!o.report.empty()) j["report"] = o.report;
  if (!o.p_grid.empty()) j["p_grid"] = o.p_grid;
  if (!o.times.empty()) j["times"] = o.times;
  if (o.kmax >= 0) j["kmax"] = o.kmax;
  if (o.horizon >= 0) j["horizon"] = o.horizon;
  if (o.seed >= 0) j["seed"] = o.seed;
  if (!o.out.empty()) j["out_dir"] = o.out;
  if (const char* env = std::getenv("RESDIMLAB_OUT"); env && *env) j["out_dir"] = env;
  return j;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resdimlab: resistance, energy and spectral-dimension experiments on square-based fractals"};
  app.require_subcommand(1);
  Overrides o;
  for (const auto& name : resdimlab::command_names()) add_options(app.add_subcommand(name), o);
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  resdimlab::ExperimentConfig config;
  try {
    config = resdimlab::ExperimentConfig::from_json(load_config(o));
  } catch (const resdimlab::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitConfig;
  }

  resdimlab::RunResult result;
  try {
    result = resdimlab::run(command, config);
  } catch (const resdimlab::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const resdim::CapExceeded& e) {
    std::cerr << "cap exceeded: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  std::cout << result.primary;
  auto manifest = result.manifest(config);
  if (!config.out_dir.empty()) {
    fs::path dir(config.out_dir);
    fs::create_directories(dir);
    write_file(dir / result.primary_name, result.primary);
    for (const auto& [name, text] : result.files) write_file(dir / name, text);
    write_file(dir / "manifest.json", manifest.dump(1) + "\n");
  }
  for (const auto& c : result.checks) std::cerr << (c.pass ? "PASS " : "FAIL ") << c.id << "\n";
  return result.ok() ? 0 : kExitCheckFailed;
}
