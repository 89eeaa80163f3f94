#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <algorithm>
#include <stdexcept>

#include "oracles.hpp"
#include "resdim/common.hpp"
#include "resdim/mixedcarpet.hpp"
#include "resdim/penergy.hpp"
#include "resdim/resnet.hpp"

using namespace resdim;

namespace {

struct Instance {
  int n;
  std::vector<oracle::RawEdge> edges;
  std::vector<int> inner, outer;
};

LevelGraph to_graph(const Instance& in) {
  std::vector<Edge> es;
  for (const auto& e : in.edges) es.push_back({e.u, e.v, e.c});
  return LevelGraph(static_cast<std::size_t>(in.n), es);
}

std::vector<std::int32_t> ids(const std::vector<int>& v) { return {v.begin(), v.end()}; }

// Random connected instance with two fixed vertices on each side.
Instance random_instance(std::mt19937_64& rng, int n) {
  Instance in;
  in.n = n;
  for (const auto& e : oracle::random_connected(n, rng, 0.25)) in.edges.push_back(e);
  in.inner = {0, 1};
  in.outer = {n - 1, n - 2};
  return in;
}

// Nonlinear Gauss-Seidel: each free value minimizes its local convex term by golden section.
double oracle_coordinate_descent(const Instance& in, double p) {
  std::vector<double> f(static_cast<std::size_t>(in.n), 0.5);
  std::vector<int> role(static_cast<std::size_t>(in.n), -1);
  for (int v : in.inner) {
    role[static_cast<std::size_t>(v)] = 1;
    f[static_cast<std::size_t>(v)] = 1;
  }
  for (int v : in.outer) {
    role[static_cast<std::size_t>(v)] = 0;
    f[static_cast<std::size_t>(v)] = 0;
  }
  std::vector<std::vector<std::pair<int, double>>> nb(static_cast<std::size_t>(in.n));
  for (const auto& e : in.edges) {
    nb[static_cast<std::size_t>(e.u)].push_back({e.v, e.c});
    nb[static_cast<std::size_t>(e.v)].push_back({e.u, e.c});
  }
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int sweep = 0; sweep < 4000; ++sweep) {
    double moved = 0;
    for (int v = 0; v < in.n; ++v) {
      if (role[static_cast<std::size_t>(v)] >= 0) continue;
      auto local = [&](double x) {
        double s = 0;
        for (auto [u, c] : nb[static_cast<std::size_t>(v)]) s += c * std::pow(std::abs(x - f[static_cast<std::size_t>(u)]), p);
        return s;
      };
      double a = 0, b = 1;
      for (int it = 0; it < 90; ++it) {
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        if (local(x1) < local(x2))
          b = x2;
        else
          a = x1;
      }
      double x = 0.5 * (a + b);
      moved = std::max(moved, std::abs(x - f[static_cast<std::size_t>(v)]));
      f[static_cast<std::size_t>(v)] = x;
    }
    if (moved < 1e-14) break;
  }
  double s = 0;
  for (const auto& e : in.edges)
    s += e.c * std::pow(std::abs(f[static_cast<std::size_t>(e.u)] - f[static_cast<std::size_t>(e.v)]), p);
  return s;
}

// Minimum cut by enumeration of the free vertices' sides.
double oracle_min_cut(const Instance& in) {
  std::vector<int> role(static_cast<std::size_t>(in.n), -1), free;
  for (int v : in.inner) role[static_cast<std::size_t>(v)] = 1;
  for (int v : in.outer) role[static_cast<std::size_t>(v)] = 0;
  for (int v = 0; v < in.n; ++v)
    if (role[static_cast<std::size_t>(v)] < 0) free.push_back(v);
  double best = INFINITY;
  for (std::uint32_t mask = 0; mask < (1u << free.size()); ++mask) {
    std::vector<int> side = role;
    for (std::size_t i = 0; i < free.size(); ++i) side[static_cast<std::size_t>(free[i])] = (mask >> i) & 1u;
    double cut = 0;
    for (const auto& e : in.edges)
      if (side[static_cast<std::size_t>(e.u)] != side[static_cast<std::size_t>(e.v)]) cut += e.c;
    best = std::min(best, cut);
  }
  return best;
}

}  // namespace

TEST_SUITE("penergy") {
  TEST_CASE("path and single-edge closed forms") {
    LevelGraph path(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    CHECK(p_energy(path, {0}, {2}, 2).value == doctest::Approx(0.5).epsilon(1e-12));
    // Every f(a) in [0,1] gives |1-f(a)| + |f(a)| = 1.
    CHECK(p_energy(path, {0}, {2}, 1).value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p_energy(path, {0}, {2}, 3).value == doctest::Approx(0.25).epsilon(1e-7));
    LevelGraph edge(2, {{0, 1, 1.0}});
    for (double p : {1.0, 1.5, 2.0, 3.0}) CHECK(p_energy(edge, {0}, {1}, p).value == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("degenerate and invalid inputs") {
    LevelGraph path(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    auto r = p_energy(path, {0}, {}, 2);
    CHECK(r.degenerate);
    CHECK(r.value == 0.0);
    CHECK_THROWS_AS(p_energy(path, {0}, {2}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(p_energy(path, {}, {2}, 2), std::invalid_argument);
    CHECK_THROWS_AS(p_energy(path, {0, 2}, {2}, 2), std::invalid_argument);
    CHECK_THROWS_AS(p_energy(path, {0}, {7}, 2), std::out_of_range);
    // inner and outer in different components: f = 1 on the inner component costs nothing.
    LevelGraph split(4, {{0, 1, 1.0}, {2, 3, 1.0}});
    CHECK(p_energy(split, {0}, {3}, 2).value == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(p_energy(split, {0}, {3}, 1.5).value == doctest::Approx(0.0).epsilon(1e-14));
  }

  TEST_CASE("p = 2 matches the Kirchhoff oracle") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
      auto in = random_instance(rng, 6 + t % 20);
      double want = 1.0 / oracle::kirchhoff_set_resistance(in.n, in.edges, in.inner, in.outer);
      auto r = p_energy(to_graph(in), ids(in.inner), ids(in.outer), 2);
      CHECK(r.value == doctest::Approx(want).epsilon(1e-9));
      CHECK(r.certified);
      CHECK(r.gap <= 1e-7);
    }
  }

  TEST_CASE("p = 1 matches exhaustive minimum cuts") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
      auto in = random_instance(rng, 6 + t % 9);
      auto r = p_energy(to_graph(in), ids(in.inner), ids(in.outer), 1);
      CHECK(r.value == doctest::Approx(oracle_min_cut(in)).epsilon(1e-12));
      CHECK(r.certified);
    }
  }

  TEST_CASE("general p matches coordinate descent") {
    std::mt19937_64 rng(13);
    for (double p : {1.3, 1.7, 2.5, 4.0})
      for (int t = 0; t < 6; ++t) {
        auto in = random_instance(rng, 6 + t);
        auto r = p_energy(to_graph(in), ids(in.inner), ids(in.outer), p);
        CHECK(r.certified);
        // Gauss-Seidel stalls slowly for p near 1, so it only brackets from above.
        double gs = oracle_coordinate_descent(in, p);
        CHECK(r.value <= gs * (1 + 1e-7));  // certified gap
        CHECK(r.value == doctest::Approx(gs).epsilon(1e-4));
        CHECK(r.lower <= gs);
        CHECK(r.lower <= r.value * (1 + 1e-12));
        CHECK(p_energy_of(to_graph(in), r.potential, p) == doctest::Approx(r.value).epsilon(1e-12));
        for (double f : r.potential) {
          CHECK(f >= 0.0);
          CHECK(f <= 1.0);
        }
      }
  }

  TEST_CASE("Markov truncation never increases the energy") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    for (int t = 0; t < 30; ++t) {
      auto in = random_instance(rng, 12);
      auto g = to_graph(in);
      std::vector<double> f(static_cast<std::size_t>(in.n));
      for (auto& x : f) x = u(rng);
      for (int v : in.inner) f[static_cast<std::size_t>(v)] = 1;
      for (int v : in.outer) f[static_cast<std::size_t>(v)] = 0;
      auto clipped = f;
      for (auto& x : clipped) x = std::clamp(x, 0.0, 1.0);
      for (double p : {1.0, 1.5, 2.0, 3.0}) CHECK(p_energy_of(g, clipped, p) <= p_energy_of(g, f, p) + 1e-12);
    }
  }

  TEST_CASE("separation problems") {
    PartitionHierarchy sc(Schedule::pure(RuleTag::SC), 3);
    auto root = separation_problem(sc, 0, 0, 2);
    CHECK(root.outer_empty);
    CHECK(p_energy(root, 2).degenerate);
    auto sp = separation_problem(sc, 1, 0, 2);
    CHECK_FALSE(sp.outer_empty);
    CHECK_FALSE(sp.inner.empty());
    CHECK_FALSE(sp.outer.empty());
    std::set<std::int32_t> in(sp.inner.begin(), sp.inner.end());
    for (auto v : sp.outer) CHECK(in.count(v) == 0);
    CHECK_THROWS_AS(separation_problem(sc, 2, 0, 2), std::out_of_range);

    PartitionHierarchy vs(Schedule::pure(RuleTag::Vicsek), 2);
    // The level-1 centre cell touches every other level-1 cell.
    for (std::size_t w = 0; w < vs.size(1); ++w)
      CHECK(separation_problem(vs, 1, w, 1).outer_empty == (vs.cell(1, w).letter == 0));
  }

  TEST_CASE("p = 2 separation energy is the resnet conductance") {
    PartitionHierarchy h(Schedule::mixed(), 4);
    for (std::size_t w : {0ul, 3ul, 7ul}) {
      auto sp = separation_problem(h, 1, w, 3);
      if (sp.outer_empty) continue;
      auto r = eff_resistance(sp.graph, sp.inner, sp.outer);
      CHECK(p_energy(sp, 2).value == doctest::Approx(1.0 / r.value).epsilon(1e-9));
    }
  }

  TEST_CASE("type dedupe agrees with the exhaustive sup") {
    for (const auto& s : {Schedule::pure(RuleTag::SC), Schedule::pure(RuleTag::Vicsek), Schedule::mixed()})
      for (int k : {1, 2}) {
        auto full = separation_family(s, k, 2, true);
        auto reps = separation_family(s, k, 2, false);
        CHECK(reps.problems.size() < full.problems.size());
        CHECK(full.cells_covered == reps.cells_covered);
        for (double p : {1.0, 1.5, 2.0}) {
          auto a = sup_energy(full, p), b = sup_energy(reps, p);
          CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
          // Cells of one type share an energy.
          std::map<std::string, double> by_type;
          for (std::size_t i = 0; i < full.problems.size(); ++i) {
            auto [it, fresh] = by_type.emplace(full.problems[i].type_key, a.values[i]);
            if (!fresh) CHECK(it->second == doctest::Approx(a.values[i]).epsilon(1e-9));
          }
        }
      }
  }

  TEST_CASE("neighbourhood types stop appearing on uniform schedules") {
    auto sc = separation_family(Schedule::pure(RuleTag::SC), 1, 4);
    CHECK(sc.new_types.size() == 5);
    CHECK(sc.new_types[4] == 0);
    CHECK(sc.problems.size() == 17);
    auto vs = separation_family(Schedule::pure(RuleTag::Vicsek), 1, 4);
    CHECK(vs.new_types[4] == 0);
    CHECK(vs.problems.size() == 7);
  }

  TEST_CASE("energies are nonincreasing in p") {
    auto set = separation_family(Schedule::pure(RuleTag::SC), 2, 2);
    double prev = INFINITY;
    for (double p : {1.0, 1.25, 1.5, 2.0, 3.0}) {
      auto s = sup_energy(set, p);
      CHECK(s.certified);
      CHECK(s.value <= prev * (1 + 1e-9));
      prev = s.value;
    }
  }

  TEST_CASE("Vicsek ladder") {
    EnergyLadder lad(Schedule::pure(RuleTag::Vicsek), 5, 3);
    auto d = p_spectral_dims(lad, 2, 5.0);
    CHECK(d.fitted == doctest::Approx(2 * std::log(5.0) / std::log(15.0)).epsilon(0.05 / 1.19));
    CHECK(d.lower <= d.fitted + 1e-12);
    CHECK(d.upper >= d.fitted - 1e-12);
    CHECK_FALSE(d.degenerate);
    // Exact series values on the worst type: 1, 2/5, 1/7, 2/41, 1/61.
    const auto& row = lad.row(2);
    CHECK(row.sups[0].value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.sups[1].value == doctest::Approx(0.4).epsilon(1e-12));
    auto cp = critical_p(lad, 1.0, 2.0, 0.05);
    CHECK_FALSE(cp.flagged);
    CHECK(cp.hi <= 1.3);
    CHECK(cp.lo >= 1.0);
    CHECK(lad.csv().rfind("p,k,sup_energy,argmax_cell\n", 0) == 0);
    CHECK_THROWS_AS(p_spectral_dims(lad, 2, 1.0), std::invalid_argument);
  }

  TEST_CASE("ladder argument checks") {
    CHECK_THROWS_AS(EnergyLadder(Schedule::pure(RuleTag::SC), 1, 1), std::invalid_argument);
    EnergyLadder lad(Schedule::pure(RuleTag::Vicsek), 2, 1);
    CHECK_THROWS_AS(critical_p(lad, 1.0, 2.0, 0.1), std::invalid_argument);
  }

  TEST_CASE("cell resistance band") {
    auto band = cell_resistance_band(Schedule::pure(RuleTag::SC), 2, 4, 4);
    CHECK(band.ratio_lo.size() == 2);
    CHECK(band.lo > 0);
    CHECK(std::isfinite(band.hi));
    CHECK(band.hi / band.lo < 20);
  }
}
