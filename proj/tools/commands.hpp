#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdim/hierarchy.hpp"

namespace resdimlab {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string structure = "sc";  // sc | vicsek | mixed | custom
  std::vector<int> F;            // level table for custom, F[j-1] for level j
  int depth = 3;
  int n = 3;                     // corner-graph level for resist
  std::string pair = "corners";  // corners | all-m
  std::string measure = "uniform";
  std::vector<double> p_grid{2.0};
  int kmax = 3;
  int horizon = 2;
  std::vector<double> times;  // heat curve times; empty selects the dyadic window
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string report = "gap";  // gap | chain | evres | qs | all
  std::size_t heat_cap = 6000;
  std::size_t samples = 8;  // sampled vertices for heat curves

  resdim::Schedule schedule() const;
  // Throws ConfigError naming the offending key.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct Check {
  std::string id;
  std::string invariant;
  bool pass = false;
  nlohmann::json value;
};

struct RunResult {
  std::string command;
  std::string primary;       // written to stdout
  std::string primary_name;  // file name inside the output directory
  std::map<std::string, std::string> files;
  std::vector<Check> checks;

  bool ok() const;
  nlohmann::json manifest(const ExperimentConfig& c) const;
};

const std::vector<std::string>& command_names();
RunResult run(const std::string& command, const ExperimentConfig& c);

}  // namespace resdimlab
