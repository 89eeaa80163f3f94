#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "resdim/common.hpp"
#include "resdim/corner.hpp"
#include "resdim/heat.hpp"
#include "resdim/measure.hpp"
#include "resdim/mixedcarpet.hpp"
#include "resdim/penergy.hpp"

using nlohmann::json;
using namespace resdim;

namespace resdimlab {

namespace {

const std::set<std::string> kKeys{"structure", "F",    "depth",   "n",      "pair",     "measure", "p_grid",  "kmax",
                                  "horizon",   "times", "seed",   "out_dir", "report", "heat_cap", "samples"};

template <class T>
T get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void add(RunResult& r, std::string id, std::string invariant, bool pass, json value = nullptr) {
  r.checks.push_back({std::move(id), std::move(invariant), pass, std::move(value)});
}

double log_vicsek() { return 2 * std::log(5.0) / std::log(15.0); }

std::vector<double> pt_table(const Schedule& s, int level) {
  std::vector<double> pt;
  for (int n = 0; n <= level; ++n) pt.push_back(resistance_scales(s, n, 0).pt);
  return pt;
}

std::vector<double> zeta_table(const std::vector<double>& pt) {
  std::vector<double> z;
  for (std::size_t j = 1; j < pt.size(); ++j) z.push_back(pt[j - 1] / pt[j]);
  return z;
}

struct HeatRun {
  std::shared_ptr<const HeatSpectrum> spec;
  HeatDsEstimate est;
  HeatInvariants inv;
  std::vector<double> pt;
};

HeatRun heat_run(const Schedule& s, int level, std::size_t cap, std::uint64_t seed) {
  PartitionHierarchy h(s, level);
  auto m = hier_measure(h, uniform_rule());
  HeatRun out;
  out.pt = pt_table(s, level);
  out.spec = heat_spectrum(build_form(h, level, m, out.pt.back()), cap);
  out.est = ol_ds_heat(*out.spec);
  out.inv = heat_invariants(*out.spec, 12, seed);
  return out;
}

void heat_checks(RunResult& r, const HeatRun& h) {
  add(r, "heat.monotone", "p(t,x,x) strictly decreasing on the grid", h.inv.monotone);
  add(r, "heat.floor", "p(t,x,x) >= 1/mu(X) - 1e-10", h.inv.floor_gap >= -1e-10, h.inv.floor_gap);
  add(r, "heat.chapman_kolmogorov", "Chapman-Kolmogorov within 1e-8 relative", h.inv.ck_error <= 1e-8, h.inv.ck_error);
  add(r, "heat.symmetry", "p(t,x,y) = p(t,y,x) within 1e-12", h.inv.symmetry_error <= 1e-12, h.inv.symmetry_error);
  add(r, "heat.halving", "finite halving constant on the window", std::isfinite(h.est.halving), h.est.halving);
}

json heat_json(const HeatRun& h) {
  return {{"vertices", h.spec->size()},
          {"solver", h.spec->solver},
          {"lambda_max", h.spec->lambda_max()},
          {"renormalizer", h.pt.back()},
          {"estimate", h.est.to_json()},
          {"invariants",
           {{"checks", h.inv.checks},
            {"monotone", h.inv.monotone},
            {"floor_gap", h.inv.floor_gap},
            {"ck_error", h.inv.ck_error},
            {"symmetry_error", h.inv.symmetry_error}}}};
}

RunResult cmd_build(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.schedule();
  PartitionHierarchy h(s, c.depth);
  bool counts = true;
  std::size_t want = 1;
  for (int n = 0; n <= c.depth; ++n) {
    if (n > 0) want *= static_cast<std::size_t>(s.branching(n));
    counts = counts && h.size(n) == want;
  }
  add(r, "hierarchy.cell_count", "|T_n| is the product of per-level branching", counts, h.size(c.depth));
  auto fw = validate_framework(h, c.depth, 1000, c.seed);
  add(r, "hierarchy.framework", "basic framework checks report no violations", fw.ok(), fw.violations);
  if (c.depth >= 1)
    add(r, "hierarchy.band", "resistance band finite with M_* = 1", std::isfinite(fw.band_hi) && fw.band_lo > 0,
        json::array({fw.band_lo, fw.band_hi}));
  auto ns = nstar_estimate(s, c.kmax, c.horizon);
  add(r, "hierarchy.submultiplicative", "branching sups are submultiplicative", ns.submultiplicative, ns.nstar);

  json out = hierarchy_json(h, c.depth);
  out["framework"] = {{"zeta", fw.zeta},
                      {"xi", fw.xi},
                      {"m_star", fw.m_star},
                      {"l_star", fw.l_star},
                      {"diam_ratio", {fw.diam_ratio_min, fw.diam_ratio_max}},
                      {"band", {fw.band_lo, fw.band_hi}},
                      {"band_pairs", fw.band_pairs},
                      {"violations", fw.violations}};
  out["nstar"] = {{"roots", ns.roots}, {"nstar", ns.nstar}, {"horizon", ns.horizon}};
  r.primary = out.dump(1) + "\n";
  r.primary_name = "hierarchy.json";
  r.files["edges.csv"] = edges_csv(h, c.depth);
  return r;
}

RunResult cmd_resist(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.schedule();
  std::vector<ScaleRow> rows;
  if (c.pair == "corners") {
    rows.push_back(resistance_scales(s, c.n, 0));
  } else {
    for (int m = 0; m <= c.n; ++m) rows.push_back(resistance_scales(s, c.n, m));
  }
  bool ordered = true, positive = true;
  for (const auto& row : rows) {
    ordered = ordered && row.pt >= row.tb;
    positive = positive && row.pt > 0 && row.tb > 0;
  }
  add(r, "mixedcarpet.pt_ge_tb", "(Pt)_{n,m} >= (TB)_{n,m}", ordered);
  add(r, "mixedcarpet.positive", "(Pt) and (TB) positive", positive);
  if (c.structure == "vicsek") {
    double dev = 0;
    for (const auto& row : rows) dev = std::max(dev, std::abs(row.pt / std::pow(3.0, row.n - row.m) - 1));
    add(r, "mixedcarpet.vicsek_factor", "(Pt)_{n,m} = 3^(n-m) within 1e-6 relative", dev <= 1e-6, dev);
  }
  r.primary = scales_csv(rows);
  r.primary_name = "scales.csv";
  return r;
}

RunResult cmd_penergy(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.schedule();
  EnergyLadder ladder(s, c.kmax, c.horizon);
  auto ps = c.p_grid;
  std::sort(ps.begin(), ps.end());
  json rows = json::array();
  bool certified = true, monotone = true;
  const RateRow* prev = nullptr;
  for (double p : ps) {
    const auto& row = ladder.row(p);
    certified = certified && row.certified;
    if (prev)
      for (std::size_t k = 0; k < row.sups.size(); ++k)
        monotone = monotone && row.sups[k].value <= prev->sups[k].value * (1 + 1e-6);
    prev = &row;
    json sups = json::array();
    for (const auto& sp : row.sups) sups.push_back({{"k", sp.k}, {"value", sp.value}, {"argmax", sp.argmax_cell}});
    rows.push_back({{"p", p}, {"rate", row.rate}, {"rate_lo", row.rate_lo}, {"rate_hi", row.rate_hi}, {"sups", sups}});
  }
  add(r, "penergy.certified", "every separation energy certified by its dual bound", certified);
  add(r, "penergy.monotone_p", "sup energies nonincreasing in p", monotone);
  auto ns = nstar_estimate(s, c.kmax, std::max(c.horizon, s.uniform() ? 0 : 27));
  json out{{"rows", rows}, {"nstar", ns.nstar}};
  if (std::find(ps.begin(), ps.end(), 2.0) != ps.end() && ns.nstar > 1) {
    auto d = p_spectral_dims(ladder, 2, ns.nstar);
    out["p_spectral_2"] = d.to_json();
    add(r, "penergy.ds2_below_2", "p = 2 spectral dimension < 2", d.upper < 2, d.upper);
  }
  r.primary = ladder.csv();
  r.primary_name = "penergy.csv";
  r.files["penergy.json"] = out.dump(1) + "\n";
  return r;
}

RunResult cmd_dims(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.schedule();
  PartitionHierarchy h(s, c.depth);
  auto m = hier_measure(h, uniform_rule());
  auto ns = nstar_estimate(s, c.kmax, std::max(c.horizon, s.uniform() ? 0 : 27));
  EnergyLadder ladder(s, c.kmax, c.horizon);
  auto d2 = p_spectral_dims(ladder, 2, ns.nstar);
  auto hr = heat_run(s, c.depth, c.heat_cap, c.seed);
  auto vol = olds_volume(h, m, zeta_table(hr.pt), {0, c.depth, 1});
  json out{{"structure", c.structure},
           {"depth", c.depth},
           {"nstar", ns.nstar},
           {"p_spectral_2", d2.to_json()},
           {"volume", vol.to_json()},
           {"heat", heat_json(hr)}};
  heat_checks(r, hr);
  add(r, "dims.ds_below_2", "upper spectral dimension estimates < 2", hr.est.ds < 2 && vol.upper < 2,
      json::array({hr.est.ds, vol.upper}));
  add(r, "dims.d2_le_ds", "p = 2 spectral dimension <= heat estimate + 0.1", d2.upper <= hr.est.ds + 0.1,
      json::array({d2.upper, hr.est.ds}));
  if (s.uniform()) {
    auto w = matched_window(hr.pt, s.branching(1), c.depth, 0);
    auto matched = ol_ds_heat(*hr.spec, {}, w);
    out["heat_matched"] = matched.to_json();
    add(r, "dims.heat_volume", "heat and volume estimates agree within 0.1 on matched windows",
        std::abs(matched.ds - vol.upper) <= 0.1, json::array({matched.ds, vol.upper}));
  }
  r.primary = out.dump(1) + "\n";
  r.primary_name = "dims.json";
  return r;
}

RunResult cmd_heat(const ExperimentConfig& c) {
  RunResult r;
  auto hr = heat_run(c.schedule(), c.depth, c.heat_cap, c.seed);
  std::vector<double> times = c.times;
  if (times.empty()) {
    double tmix = mixing_time(*hr.spec);
    for (double t = 0.25 / hr.spec->lambda_max(); t <= tmix; t *= 2) times.push_back(t);
  }
  std::vector<std::int32_t> xs{0};
  std::mt19937_64 rng(c.seed);
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(hr.spec->size()) - 1);
  while (xs.size() < std::min<std::size_t>(c.samples, hr.spec->size())) {
    auto x = pick(rng);
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end());
  std::vector<HeatCurve> curves;
  for (auto x : xs) curves.push_back(heat_kernel(hr.spec, x, times));
  heat_checks(r, hr);
  add(r, "heat.ds_below_2", "heat estimate of the upper spectral dimension < 2", hr.est.ds < 2, hr.est.ds);
  r.primary = heat_csv(c.depth, curves);
  r.primary_name = "heat.csv";
  r.files["heat.json"] = heat_json(hr).dump(1) + "\n";
  return r;
}

RunResult cmd_mixed(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.structure == "custom" ? c.schedule() : Schedule::mixed();
  const bool all = c.report == "all";
  json out = json::object();
  if (all || c.report == "chain") {
    ChainOptions opt;
    opt.seed = c.seed;
    auto rep = chain_check(s, c.depth, opt);
    for (const auto& k : rep.constants)
      add(r, "mixedcarpet." + k.id, k.relation + ": constant finite and level-stable", k.finite && k.stable, k.value);
    add(r, "mixedcarpet.pt_ge_tb", "(Pt)_{n,m} >= (TB)_{n,m}", rep.tb_violations == 0, rep.tb_violations);
    out["chain"] = rep.to_json();
    r.files["scales.csv"] = scales_csv(rep.scales);
  }
  if (all || c.report == "evres") {
    auto fit = evres_fit(s, c.depth, std::max(3, c.depth));
    add(r, "mixedcarpet.vicsek_purity", "pure Vicsek (Pt) ratio 3 within 1e-6", fit.vicsek_deviation <= 1e-6,
        fit.vicsek_deviation);
    add(r, "mixedcarpet.evres_model", "resistance growth residuals inside the fitted bracket", fit.model_ok, fit.max_residual);
    add(r, "mixedcarpet.doubling", "(Pt) doubles within finitely many levels", fit.doubling_m >= 1, fit.doubling_m);
    out["evres"] = fit.to_json();
  }
  if (all || c.report == "qs") {
    if (c.depth < 3) throw ConfigError("qs report needs depth >= 3");
    QsOptions opt;
    opt.seed = c.seed;
    auto a = qs_diagnostic(s, c.depth - 1, opt), b = qs_diagnostic(s, c.depth, opt);
    double drift = envelope_drift(a, b);
    add(r, "mixedcarpet.qs_finite", "quasisymmetry envelope finite", a.finite && b.finite);
    add(r, "mixedcarpet.qs_drift", "envelope drift between the two deepest levels <= 10%", drift <= 0.1, drift);
    json bins = json::array();
    for (const auto& q : b.bins) bins.push_back({{"t_lo", q.t_lo}, {"t_hi", q.t_hi}, {"count", q.count}, {"envelope", q.envelope}});
    out["qs"] = {{"n", b.n}, {"drift", drift}, {"bins", bins}};
    r.files["qs.csv"] = b.csv();
  }
  if (all || c.report == "gap") {
    auto vs = heat_run(Schedule::pure(RuleTag::Vicsek), std::min(c.depth, 4), c.heat_cap, c.seed);
    auto sc = heat_run(Schedule::pure(RuleTag::SC), std::min(c.depth, 3), c.heat_cap, c.seed);
    EnergyLadder ladder(Schedule::pure(RuleTag::SC), std::max(c.kmax, 2), c.horizon);
    auto cp = critical_p(ladder, 1.0, 2.0, 0.05);
    auto d2 = p_spectral_dims(ladder, 2, 8);
    GapInputs in;
    in.vicsek_window_ds = vs.est.ds;
    in.sc_window_ds = sc.est.ds;
    in.arc_lo = cp.lo;
    in.arc_hi = cp.hi;
    in.nstar = nstar_estimate(s, std::max(c.kmax, 1), 27).nstar;
    in.d2_upper = d2.upper;
    in.ds_upper = sc.est.ds;
    auto rep = gap_report(in);
    for (const auto& k : rep.checks)
      if (k.gating) add(r, "mixedcarpet." + k.id, k.description, k.pass);
    out["gap"] = rep.to_json();
    out["critical_p_sc"] = cp.to_json();
    out["vicsek_reference"] = log_vicsek();
  }
  if (out.empty()) throw ConfigError("unknown report '" + c.report + "'");
  r.primary = out.dump(1) + "\n";
  r.primary_name = "mixed.json";
  return r;
}

RunResult cmd_validate(const ExperimentConfig& c) {
  RunResult r;
  auto s = c.schedule();
  int d = std::min(c.depth, 3);
  PartitionHierarchy h(s, d);
  auto fw = validate_framework(h, d, 200, c.seed);
  add(r, "hierarchy.framework", "basic framework checks report no violations", fw.ok(), fw.violations);
  bool ordered = true;
  for (int n = 0; n <= d; ++n)
    for (int m = 0; m <= n; ++m) {
      auto row = resistance_scales(s, n, m);
      ordered = ordered && row.pt >= row.tb;
    }
  add(r, "mixedcarpet.pt_ge_tb", "(Pt)_{n,m} >= (TB)_{n,m}", ordered);
  auto hr = heat_run(s, std::min(c.depth, 2), c.heat_cap, c.seed);
  heat_checks(r, hr);
  r.primary = json{{"valid", true}, {"config", c.to_json()}}.dump(1) + "\n";
  r.primary_name = "validate.json";
  return r;
}

}  // namespace

Schedule ExperimentConfig::schedule() const {
  if (structure == "sc") return Schedule::pure(RuleTag::SC);
  if (structure == "vicsek") return Schedule::pure(RuleTag::Vicsek);
  if (structure == "mixed") return Schedule::mixed();
  if (structure == "custom") return Schedule::table(F);
  throw ConfigError("structure must be one of sc, vicsek, mixed, custom");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  ExperimentConfig c;
  c.structure = get(j, "structure", c.structure);
  c.F = get(j, "F", c.F);
  c.depth = get(j, "depth", c.depth);
  c.n = get(j, "n", c.n);
  c.pair = get(j, "pair", c.pair);
  c.measure = get(j, "measure", c.measure);
  c.p_grid = get(j, "p_grid", c.p_grid);
  c.kmax = get(j, "kmax", c.kmax);
  c.horizon = get(j, "horizon", c.horizon);
  c.times = get(j, "times", c.times);
  c.seed = get(j, "seed", c.seed);
  c.out_dir = get(j, "out_dir", c.out_dir);
  c.report = get(j, "report", c.report);
  c.heat_cap = get(j, "heat_cap", c.heat_cap);
  c.samples = get(j, "samples", c.samples);
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  return {{"structure", structure}, {"F", F},         {"depth", depth},     {"n", n},           {"pair", pair},
          {"measure", measure},     {"p_grid", p_grid}, {"kmax", kmax},     {"horizon", horizon}, {"times", times},
          {"seed", seed},           {"report", report}, {"heat_cap", heat_cap}, {"samples", samples}};
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> structures{"sc", "vicsek", "mixed", "custom"};
  if (!structures.count(structure)) throw ConfigError("structure must be one of sc, vicsek, mixed, custom");
  if (structure == "custom") {
    if (static_cast<int>(F.size()) < std::max({depth, n, horizon + kmax}))
      throw ConfigError("F must cover every built level, including horizon + kmax");
    for (int f : F)
      if (f != 0 && f != 1) throw ConfigError("F entries must be 0 or 1");
  }
  if (depth < 0 || depth > 7) throw ConfigError("depth must lie in [0, 7]");
  if (n < 0 || n > 7) throw ConfigError("n must lie in [0, 7]");
  if (pair != "corners" && pair != "all-m") throw ConfigError("pair must be corners or all-m");
  if (measure != "uniform") throw ConfigError("measure must be uniform");
  if (p_grid.empty()) throw ConfigError("p_grid must not be empty");
  for (double p : p_grid)
    if (!(p >= 1) || p > 16) throw ConfigError("p_grid entries must lie in [1, 16]");
  if (kmax < 1 || kmax > 6) throw ConfigError("kmax must lie in [1, 6]");
  if (horizon < 0 || horizon > 27) throw ConfigError("horizon must lie in [0, 27]");
  for (double t : times)
    if (!(t > 0)) throw ConfigError("times must be positive");
  if (heat_cap < 2 || heat_cap > 6000) throw ConfigError("heat_cap must lie in [2, 6000]");
  if (samples < 1) throw ConfigError("samples must be at least 1");
  static const std::set<std::string> reports{"gap", "chain", "evres", "qs", "all"};
  if (!reports.count(report)) throw ConfigError("report must be one of gap, chain, evres, qs, all");
}

bool RunResult::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

json RunResult::manifest(const ExperimentConfig& c) const {
  json checks_j = json::array();
  for (const auto& k : checks)
    checks_j.push_back({{"id", k.id}, {"invariant", k.invariant}, {"pass", k.pass}, {"value", k.value}});
  json files_j = json::array({primary_name});
  for (const auto& [name, _] : files) files_j.push_back(name);
  return {{"command", command}, {"config", c.to_json()}, {"checks", checks_j}, {"all_pass", ok()}, {"files", files_j}};
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"build", "resist", "penergy", "dims", "heat", "mixed", "validate"};
  return names;
}

RunResult run(const std::string& command, const ExperimentConfig& c) {
  c.validate();
  RunResult r;
  if (command == "build") r = cmd_build(c);
  else if (command == "resist") r = cmd_resist(c);
  else if (command == "penergy") r = cmd_penergy(c);
  else if (command == "dims") r = cmd_dims(c);
  else if (command == "heat") r = cmd_heat(c);
  else if (command == "mixed") r = cmd_mixed(c);
  else if (command == "validate") r = cmd_validate(c);
  else throw ConfigError("unknown command '" + command + "'");
  r.command = command;
  return r;
}

}  // namespace resdimlab
