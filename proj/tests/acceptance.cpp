// Acceptance suite: one line per criterion, tolerances pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "resdim/common.hpp"
#include "resdim/heat.hpp"
#include "resdim/measure.hpp"
#include "resdim/mixedcarpet.hpp"
#include "resdim/penergy.hpp"
#include "resdim/resnet.hpp"

using namespace resdim;

namespace {

constexpr double kTolIdentity = 1e-10;
constexpr double kBudgetIdentity = 1.0;  // seconds
constexpr int kRandomGraphs = 100;
constexpr int kMaxVertices = 50;
constexpr double kTolOracle = 1e-8;
constexpr double kTolTrace = 1e-9;
constexpr double kTolVicsekFactor = 1e-6;
constexpr double kBudgetVicsek = 60.0;
constexpr double kMaxRatioChange = 0.05;
constexpr double kMaxBand = 20.0;
constexpr double kTolDim = 0.05;
constexpr double kTolAgree = 0.1;
constexpr double kTolFloor = 1e-10;
constexpr double kTolCK = 1e-8;
constexpr double kTolTwoState = 1e-12;
constexpr double kTolIneq = 0.1;
constexpr double kVicsekCriticalMax = 1.3;
constexpr double kMaxDrift = 0.10;
constexpr double kTolGrowth = 0.05;

const double kVicsek = 2 * std::log(5.0) / std::log(15.0);

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

LevelGraph to_graph(int n, const std::vector<oracle::RawEdge>& es) {
  std::vector<Edge> out;
  for (const auto& e : es) out.push_back({e.u, e.v, e.c});
  return LevelGraph(static_cast<std::size_t>(n), out);
}

// Forms, spectra and ladders shared by several criteria.
struct FormResult {
  std::string name;
  RuleTag tag = RuleTag::SC;
  bool mixed = false;
  int level = 0;
  std::size_t vertices = 0;
  HeatDsEstimate est;
  double matched_ds = NAN;
  double volume_upper = NAN;
  HeatInvariants inv;
};

struct Shared {
  std::vector<FormResult> forms;
  std::unique_ptr<EnergyLadder> sc_ladder, vicsek_ladder;
  std::unique_ptr<CriticalP> sc_critical, vicsek_critical;

  const FormResult& form(const std::string& name, int level) const {
    for (const auto& f : forms)
      if (f.name == name && f.level == level) return f;
    throw std::out_of_range("form " + name);
  }

  void build_forms() {
    struct Spec {
      std::string name;
      Schedule s;
      bool uniform;
      int max_level;
    };
    std::vector<Spec> specs{{"vicsek", Schedule::pure(RuleTag::Vicsek), true, 4},
                            {"sc", Schedule::pure(RuleTag::SC), true, 4},
                            {"mixed", Schedule::mixed(), false, 4}};
    for (const auto& sp : specs) {
      std::vector<double> pt;
      for (int n = 0; n <= sp.max_level; ++n) pt.push_back(resistance_scales(sp.s, n, 0).pt);
      for (int level = 2; level <= sp.max_level; ++level) {
        PartitionHierarchy h(sp.s, level);
        auto m = hier_measure(h, uniform_rule());
        auto spec = heat_spectrum(build_form(h, level, m, pt[static_cast<std::size_t>(level)]));
        FormResult f;
        f.name = sp.name;
        f.level = level;
        f.vertices = spec->size();
        f.est = ol_ds_heat(*spec);
        f.inv = heat_invariants(*spec, 16, 1);
        std::vector<double> zeta, ptl(pt.begin(), pt.begin() + level + 1);
        for (int j = 1; j <= level; ++j) zeta.push_back(pt[static_cast<std::size_t>(j - 1)] / pt[static_cast<std::size_t>(j)]);
        f.volume_upper = olds_volume(h, m, zeta, {0, level, 1}).upper;
        if (sp.uniform) f.matched_ds = ol_ds_heat(*spec, {}, matched_window(ptl, sp.s.branching(1), level, 0)).ds;
        forms.push_back(std::move(f));
      }
    }
  }

  void build_ladders() {
    sc_ladder = std::make_unique<EnergyLadder>(Schedule::pure(RuleTag::SC), 4, 3);
    vicsek_ladder = std::make_unique<EnergyLadder>(Schedule::pure(RuleTag::Vicsek), 5, 3);
    sc_critical = std::make_unique<CriticalP>(critical_p(*sc_ladder, 1.0, 2.0, 0.05));
    vicsek_critical = std::make_unique<CriticalP>(critical_p(*vicsek_ladder, 1.0, 2.0, 0.05));
  }
};

Shared shared;

Outcome c1_identities() {
  auto t0 = Clock::now();
  double err = 0;
  LevelGraph cycle(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 0, 1.0}});
  err = std::max(err, std::abs(eff_resistance(cycle, {0}, {2}).value - 1));
  for (int n : {1, 5, 20, 100}) {
    std::vector<Edge> es;
    for (int i = 0; i < n; ++i) es.push_back({i, i + 1, 1.0});
    LevelGraph path(static_cast<std::size_t>(n + 1), es);
    err = std::max(err, std::abs(eff_resistance(path, {0}, {n}).value - n));
  }
  LevelGraph abc(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  auto tr = trace(abc, {0, 2});
  err = std::max(err, std::abs(-tr.schur(0, 1) - 0.5));
  double dt = seconds_since(t0);
  return {err <= kTolIdentity && dt < kBudgetIdentity, "max error " + num(err, 3) + ", " + num(dt, 3) + " s"};
}

Outcome c2_oracles() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(3, kMaxVertices);
  double worst = 0, worst_trace = 0;
  for (int g = 0; g < kRandomGraphs; ++g) {
    int n = size(rng);
    auto graph = to_graph(n, oracle::random_connected(n, rng));
    auto dense = dense_resistance_matrix(graph);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int q = 0; q < 4; ++q) {
      int a = pick(rng), b = pick(rng);
      if (a == b) continue;
      double pot = eff_resistance(graph, {a}, {b}).value;
      double flow = min_energy_flow(graph, {a}, {b}).energy;
      double pinv = dense(a, b);
      worst = std::max({worst, rel(pot, pinv), rel(flow, pinv), rel(pot, flow)});
    }
    std::vector<std::int32_t> S;
    for (int v = 0; v < n; ++v)
      if (v % 3 == 0) S.push_back(v);
    if (S.size() < 2) S = {0, n - 1};
    auto traced = dense_resistance_matrix(trace(graph, S).graph());
    for (std::size_t i = 0; i < S.size(); ++i)
      for (std::size_t j = i + 1; j < S.size(); ++j)
        worst_trace = std::max(worst_trace, rel(traced(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), dense(S[i], S[j])));
  }
  return {worst <= kTolOracle && worst_trace <= kTolTrace,
          "max pairwise relative gap " + num(worst, 3) + ", trace " + num(worst_trace, 3)};
}

Outcome c3_vicsek_factor() {
  auto t0 = Clock::now();
  auto s = Schedule::pure(RuleTag::Vicsek);
  double dev = 0;
  for (int k = 1; k <= 4; ++k) dev = std::max(dev, rel(resistance_scales(s, k, 0).pt, std::pow(3.0, k)));
  double dt = seconds_since(t0);
  return {dev <= kTolVicsekFactor && dt < kBudgetVicsek, "max relative deviation " + num(dev, 3) + ", " + num(dt, 3) + " s"};
}

Outcome c4_sc_factor() {
  auto s = Schedule::pure(RuleTag::SC);
  std::vector<double> pt;
  for (int n = 0; n <= 5; ++n) pt.push_back(resistance_scales(s, n, 0).pt);
  double r34 = pt[4] / pt[3], r45 = pt[5] / pt[4];
  double change = std::abs(r45 - r34) / r34;
  return {change <= kMaxRatioChange, "ratios " + num(r34) + ", " + num(r45) + "; change " + num(change, 3) +
                                         "; rho_hat = " + fmt(r45)};
}

Outcome c5_band() {
  std::string detail;
  bool pass = true;
  for (auto tag : {RuleTag::SC, RuleTag::Vicsek}) {
    auto s = Schedule::pure(tag);
    PartitionHierarchy h(s, 5);
    auto w = *h.find("1");
    double lo = INFINITY, hi = 0;
    for (int k = 1; k <= 4; ++k) {
      auto e = p_energy(separation_problem(h, 1, w, k), 2.0);
      double v = e.value * resistance_scales(s, k, 0).pt;
      pass = pass && e.certified;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    pass = pass && hi / lo <= kMaxBand;
    detail += SubdivisionRule::get(tag).name() + " band " + num(hi / lo, 4) + " ";
  }
  return {pass, detail};
}

Outcome c6_vicsek_dims() {
  auto d = p_spectral_dims(*shared.vicsek_ladder, 2, 5.0);
  PartitionHierarchy h(Schedule::pure(RuleTag::Vicsek), 5);
  auto vol = olds_volume(h, hier_measure(h, uniform_rule()), std::vector<double>(5, 1.0 / 3), {0, 5, 1});
  bool pass = std::abs(d.fitted - kVicsek) <= kTolDim && std::abs(d.upper - kVicsek) <= kTolDim &&
              std::abs(d.lower - kVicsek) <= kTolDim && std::abs(vol.upper - kVicsek) <= kTolDim &&
              std::abs(d.fitted - vol.upper) <= kTolAgree;
  return {pass, "p-spectral " + num(d.fitted) + " [" + num(d.lower) + ", " + num(d.upper) + "], volume " +
                    num(vol.upper) + ", target " + num(kVicsek)};
}

Outcome c7_heat_invariants() {
  bool pass = true;
  double worst_floor = INFINITY, worst_ck = 0;
  for (const auto& f : shared.forms) {
    pass = pass && f.inv.monotone && f.inv.floor_gap >= -kTolFloor && f.inv.ck_error <= kTolCK;
    worst_floor = std::min(worst_floor, f.inv.floor_gap);
    worst_ck = std::max(worst_ck, f.inv.ck_error);
  }
  auto two = heat_spectrum(build_form(LevelGraph(2, {{0, 1, 1.0}}), {0.5, 0.5}, 1.0));
  double err = 0;
  for (double t : {1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0}) err = std::max(err, std::abs(two->p(t, 0, 0) - (1 + std::exp(-4 * t))));
  pass = pass && err <= kTolTwoState;
  return {pass, std::to_string(shared.forms.size()) + " forms, min floor gap " + num(worst_floor, 3) + ", max CK " +
                    num(worst_ck, 3) + ", two-state " + num(err, 3)};
}

Outcome c8_inequality() {
  auto dv = p_spectral_dims(*shared.vicsek_ladder, 2, 5.0);
  auto ds = p_spectral_dims(*shared.sc_ladder, 2, 8.0);
  const auto& hv = shared.form("vicsek", 4);
  const auto& hs = shared.form("sc", 4);
  bool pass = dv.upper <= hv.est.ds + kTolIneq && ds.upper <= hs.est.ds + kTolIneq;
  return {pass, "Vicsek " + num(dv.upper) + " vs " + num(hv.est.ds) + "; SC " + num(ds.upper) + " vs " + num(hs.est.ds)};
}

Outcome c9_sanity() {
  double max_ds = 0;
  for (const auto& f : shared.forms) {
    max_ds = std::max({max_ds, f.est.ds, f.volume_upper});
    if (!std::isnan(f.matched_ds)) max_ds = std::max(max_ds, f.matched_ds);
  }
  double min_lo = std::min(shared.sc_critical->lo, shared.vicsek_critical->lo);
  return {max_ds < 2 && min_lo >= 1, "max upper spectral estimate " + num(max_ds) + ", min critical-p lower end " + num(min_lo)};
}

Outcome c10_critical() {
  double r2 = shared.sc_ladder->row(2.0).rate, r13 = shared.sc_ladder->row(1.3).rate;
  bool pass = r2 < 0 && r13 >= 0 && shared.vicsek_critical->hi <= kVicsekCriticalMax;
  return {pass, "SC rate(2) " + num(r2) + ", rate(1.3) " + num(r13) + ", SC bracket [" + num(shared.sc_critical->lo) +
                    ", " + num(shared.sc_critical->hi) + "], Vicsek bracket [" + num(shared.vicsek_critical->lo) + ", " +
                    num(shared.vicsek_critical->hi) + "]"};
}

Outcome c11_mixed() {
  auto s = Schedule::mixed();
  auto chain = chain_check(s, 5);
  bool chain_ok = chain.tb_violations == 0;
  for (const auto& c : chain.constants) chain_ok = chain_ok && c.finite && c.stable;
  auto q4 = qs_diagnostic(s, 4), q5 = qs_diagnostic(s, 5);
  double drift = envelope_drift(q4, q5);
  GapInputs in;
  in.vicsek_window_ds = shared.form("vicsek", 4).est.ds;
  in.sc_window_ds = shared.form("sc", 4).est.ds;
  in.arc_lo = shared.sc_critical->lo;
  in.arc_hi = shared.sc_critical->hi;
  in.nstar = nstar_estimate(s, 9, 27).nstar;
  in.d2_upper = p_spectral_dims(*shared.sc_ladder, 2, 8.0).upper;
  in.ds_upper = in.sc_window_ds;
  auto gap = gap_report(in);
  bool ordering = gap.vicsek_value < gap.threshold && gap.threshold < gap.sc_lower;
  bool pass = chain_ok && q4.finite && q5.finite && drift <= kMaxDrift && gap.ok() && ordering &&
              in.sc_window_ds < 2 && gap.mixed_asymptotic == "window-resolved only";
  return {pass, "chain " + std::string(chain_ok ? "stable" : "unstable") + ", qs drift " + num(drift, 3) + ", gap " +
                    num(gap.vicsek_value) + " < 1.5 < " + num(gap.sc_lower) + ", mixed ds " + gap.mixed_asymptotic};
}

Outcome c12_psi() {
  PartitionHierarchy sc(Schedule::pure(RuleTag::SC), 6), vs(Schedule::pure(RuleTag::Vicsek), 5);
  auto ps = psi_measure(sc, Rational(8), Rational(1, 2), 2);
  auto pv = psi_measure(vs, Rational(5), Rational(1, 2), 1);
  auto gs = volume_growth(sc, ps.measure, 4, 8.5, 60, 3);
  auto gv = volume_growth(vs, pv.measure, 3, 5.5, 60, 3);
  bool pass = ps.comparability_violations == 0 && pv.comparability_violations == 0 && ps.comparability_pairs > 0 &&
              pv.comparability_pairs > 0 && gs.exponent <= std::log(8.5) + kTolGrowth &&
              gv.exponent <= std::log(5.5) + kTolGrowth;
  return {pass, "SC exponent " + num(gs.exponent) + " <= " + num(std::log(8.5) + kTolGrowth) + ", Vicsek " +
                    num(gv.exponent) + " <= " + num(std::log(5.5) + kTolGrowth) + ", comparability violations " +
                    std::to_string(ps.comparability_violations + pv.comparability_violations) + " of " +
                    std::to_string(ps.comparability_pairs + pv.comparability_pairs)};
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  struct Criterion {
    int id;
    std::string title;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria{
      {1, "exact electrical identities", c1_identities},
      {2, "resistance oracle equivalence", c2_oracles},
      {3, "Vicsek resistance factor", c3_vicsek_factor},
      {4, "SC resistance factor stability", c4_sc_factor},
      {5, "separation energy band", c5_band},
      {6, "Vicsek p-spectral and volume dimensions", c6_vicsek_dims},
      {7, "heat kernel invariants", c7_heat_invariants},
      {8, "p = 2 spectral dimension below heat estimate", c8_inequality},
      {9, "upper spectral dimension < 2, critical p >= 1", c9_sanity},
      {10, "critical p behaviour", c10_critical},
      {11, "mixed pipeline", c11_mixed},
      {12, "psi measure", c12_psi},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto t = Clock::now();
    Outcome o;
    try {
      if (c.id == 6 && !shared.vicsek_ladder) shared.build_ladders();
      if (c.id == 7 && shared.forms.empty()) shared.build_forms();
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] criterion %2d: %s (%s) %.1f s\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), o.detail.c_str(),
                seconds_since(t));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
