#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "oracles.hpp"
#include "resdim/common.hpp"
#include "resdim/corner.hpp"
#include "resdim/resnet.hpp"

using namespace resdim;

namespace {

LevelGraph to_graph(int n, const std::vector<oracle::RawEdge>& raw) {
  std::vector<Edge> es;
  for (const auto& e : raw) es.push_back({e.u, e.v, e.c});
  return LevelGraph(static_cast<std::size_t>(n), es);
}

LevelGraph cycle4() { return LevelGraph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 0, 1}}); }

LevelGraph path(int n) {
  std::vector<Edge> es;
  for (int i = 0; i < n; ++i) es.push_back({i, i + 1, 1.0});
  return LevelGraph(static_cast<std::size_t>(n + 1), es);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_SUITE("resnet") {
  TEST_CASE("eff_resistance closed forms") {
    CHECK(eff_resistance(cycle4(), {0}, {2}).value == doctest::Approx(1.0).epsilon(1e-14));
    LevelGraph edge(2, {{0, 1, 2.5}});
    CHECK(eff_resistance(edge, {0}, {1}).value == doctest::Approx(0.4).epsilon(1e-14));
    for (int n : {1, 3, 7}) CHECK(eff_resistance(path(n), {0}, {n}).value == doctest::Approx(n).epsilon(1e-13));
  }

  TEST_CASE("eff_resistance degenerate queries") {
    LevelGraph two(4, {{0, 1, 1}, {2, 3, 1}});
    auto r = eff_resistance(two, {0}, {3});
    CHECK(r.flag == ResistanceFlag::Infinite);
    CHECK(std::isinf(r.value));
    auto z = eff_resistance(cycle4(), {0, 1}, {1, 2});
    CHECK(z.flag == ResistanceFlag::Zero);
    CHECK(z.value == 0);
    CHECK_THROWS_AS(eff_resistance(cycle4(), {}, {1}), std::invalid_argument);
  }

  TEST_CASE("set resistances and potentials") {
    // Two opposite sides of the 4-cycle: two unit edges in parallel.
    auto r = eff_resistance(cycle4(), {0, 1}, {2, 3}, true);
    CHECK(r.value == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(r.potential[0] == 1.0);
    CHECK(r.potential[3] == 0.0);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      auto raw = oracle::random_connected(20, rng);
      auto g = to_graph(20, raw);
      std::vector<std::int32_t> A = {0, 5, 9}, B = {13, 17};
      double expect = oracle::kirchhoff_set_resistance(20, raw, {0, 5, 9}, {13, 17});
      double got = eff_resistance(g, A, B).value;
      CHECK(rel(got, expect) < 1e-9);
      // set-vs-point domination
      double pmin = INFINITY;
      for (auto a : A)
        for (auto b : B) pmin = std::min(pmin, eff_resistance(g, {a}, {b}).value);
      CHECK(got <= pmin * (1 + 1e-12));
    }
  }

  TEST_CASE("grounded solver matches the Kirchhoff oracle") {
    std::mt19937_64 rng(11);
    auto raw = oracle::random_connected(30, rng);
    auto g = to_graph(30, raw);
    GroundedSolver s(g, 4);
    std::vector<std::int32_t> S = {0, 4, 7, 12, 29};
    auto R = s.resistance_matrix(S);
    for (std::size_t i = 0; i < S.size(); ++i)
      for (std::size_t j = 0; j < S.size(); ++j) {
        if (i == j) {
          CHECK(std::abs(R(i, j)) < 1e-12);
          continue;
        }
        CHECK(rel(R(i, j), oracle::kirchhoff_resistance(30, raw, S[i], S[j])) < 1e-9);
      }
    CHECK(rel(s.resistance(7, 12), R(2, 3)) < 1e-12);
  }

  TEST_CASE("trace") {
    auto t = trace(path(2), {0, 2});
    CHECK(-t.schur(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
    auto gt = t.graph();
    REQUIRE(gt.num_edges() == 1);
    CHECK(gt.edges()[0].c == doctest::Approx(0.5));

    auto all = trace(cycle4(), {0, 1, 2, 3});
    CHECK((all.schur - cycle4().dense_laplacian()).norm() < 1e-15);

    auto tri = trace(cycle4(), {0, 1, 2});
    auto Rt = dense_resistance_matrix(tri.graph());
    std::vector<oracle::RawEdge> raw = {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 0, 1}};
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) CHECK(rel(Rt(i, j), oracle::kirchhoff_resistance(4, raw, i, j)) < 1e-12);

    CHECK_THROWS_AS(trace(cycle4(), {}), std::invalid_argument);
    CHECK_THROWS_AS(trace(LevelGraph(3, {{0, 1, 1}}), {0}), std::invalid_argument);
  }

  TEST_CASE("trace consistency on nested subsets") {
    std::mt19937_64 rng(5);
    auto g = to_graph(40, oracle::random_connected(40, rng));
    std::vector<std::int32_t> big = {0, 3, 6, 9, 12, 15, 18, 21, 24, 27}, small = {0, 9, 18, 27};
    auto direct = trace(g, small);
    auto tb = trace(g, big);
    auto two = trace(tb.graph(), {0, 3, 6, 9});
    CHECK((direct.schur - two.schur).norm() <= 1e-9 * direct.schur.norm());
  }

  TEST_CASE("monotone convergence of traced set resistances") {
    PartitionHierarchy h(Schedule::pure(RuleTag::SC), 3);
    auto cg = corner_graph_of(h, 3);
    std::vector<std::int32_t> A = {cg.find(PlanePoint{Rational(1, 2), Rational(1, 2)})};
    std::vector<std::int32_t> B = {cg.find(PlanePoint{Rational(-1, 2), Rational(-1, 2)})};
    double prev = INFINITY;
    for (int n = 1; n <= 3; ++n) {
      std::set<std::int32_t> vs;
      std::int64_t hf = h.half_side(3);
      for (std::size_t i = 0; i < h.size(n); ++i) {
        const Cell& c = h.cell(n, i);
        std::int64_t hn = h.half_side(n) / hf;
        for (int sx = -1; sx <= 1; sx += 2)
          for (int sy = -1; sy <= 1; sy += 2) vs.insert(cg.find(c.cx / hf + sx * hn, c.cy / hf + sy * hn));
      }
      std::vector<std::int32_t> S(vs.begin(), vs.end());
      auto t = trace(cg.graph, S);
      std::vector<std::int32_t> a, b;
      for (std::size_t i = 0; i < S.size(); ++i) {
        if (S[i] == A[0]) a.push_back(static_cast<std::int32_t>(i));
        if (S[i] == B[0]) b.push_back(static_cast<std::int32_t>(i));
      }
      double r = eff_resistance(t.graph(), a, b).value;
      CHECK(r <= prev * (1 + 1e-12));
      prev = r;
      if (n == 3) CHECK(rel(r, eff_resistance(cg.graph, A, B).value) < 1e-10);
    }
  }

  TEST_CASE("resistance weights") {
    auto mu = resistance_weights(trace(path(2), {0, 2}));
    CHECK(mu(0, 1) == doctest::Approx(0.5));
    CHECK(std::abs(mu.row(0).sum()) < 1e-12);

    // SC level-2 corner graph traced onto the level-1 corners, compared with a dense Schur.
    PartitionHierarchy h(Schedule::pure(RuleTag::SC), 2);
    auto cg = corner_graph_of(h, 2);
    std::set<std::int32_t> vs;
    for (std::size_t i = 0; i < h.size(1); ++i) {
      const Cell& c = h.cell(1, i);
      for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2) vs.insert(cg.find(c.cx / h.half_side(2) + 3 * sx, c.cy / h.half_side(2) + 3 * sy));
    }
    std::vector<std::int32_t> S(vs.begin(), vs.end());
    REQUIRE(S.size() == 16);
    auto t = trace(cg.graph, S);
    auto w = resistance_weights(t);
    std::vector<int> Si(S.begin(), S.end());
    Eigen::MatrixXd ref = oracle::dense_schur(cg.graph.dense_laplacian(), Si);
    CHECK((t.schur - ref).norm() <= 1e-10 * ref.norm());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      CHECK(std::abs(w.row(i).sum()) < 1e-12);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        if (i != j) CHECK(w(i, j) >= -1e-10);
    }

    TracedForm bad;
    bad.vertices = {0, 1};
    bad.schur = Eigen::MatrixXd(2, 2);
    bad.schur << 1, 0.5, 0.5, 1;  // positive off-diagonal = negative weight
    CHECK_THROWS_AS(resistance_weights(bad), NumericalFailure);
  }

  TEST_CASE("min_energy_flow") {
    auto f = min_energy_flow(cycle4(), {0}, {2});
    CHECK(f.energy == doctest::Approx(1.0).epsilon(1e-13));
    for (double v : f.flow) CHECK(std::abs(v) == doctest::Approx(0.5).epsilon(1e-13));
    LevelGraph edge(2, {{0, 1, 4.0}});
    auto fe = min_energy_flow(edge, {0}, {1});
    CHECK(fe.flow[0] == doctest::Approx(1.0));
    CHECK(fe.energy == doctest::Approx(0.25));
    LevelGraph two(4, {{0, 1, 1}, {2, 3, 1}});
    CHECK(min_energy_flow(two, {0}, {3}).flag == ResistanceFlag::Infinite);
  }

  TEST_CASE("unit flow balance and Thomson duality") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      int n = 10 + trial * 2;
      auto raw = oracle::random_connected(n, rng);
      auto g = to_graph(n, raw);
      std::vector<std::int32_t> A = {0, 1}, B = {n - 1};
      auto fl = min_energy_flow(g, A, B);
      std::vector<double> div(static_cast<std::size_t>(n), 0.0);
      for (std::size_t k = 0; k < g.edges().size(); ++k) {
        div[static_cast<std::size_t>(g.edges()[k].u)] += fl.flow[k];
        div[static_cast<std::size_t>(g.edges()[k].v)] -= fl.flow[k];
      }
      for (int v = 2; v < n - 1; ++v) CHECK(std::abs(div[static_cast<std::size_t>(v)]) < 1e-10);
      CHECK(div[0] + div[1] == doctest::Approx(1.0));
      CHECK(div[static_cast<std::size_t>(n - 1)] == doctest::Approx(-1.0));
      double pot = eff_resistance(g, A, B).value;
      CHECK(std::abs(fl.energy - pot) <= 1e-8 * pot);
      CHECK(rel(pot, oracle::kirchhoff_set_resistance(n, raw, {0, 1}, {n - 1})) < 1e-8);
    }
  }

  TEST_CASE("triangle inequality of the resistance metric") {
    std::mt19937_64 rng(23);
    auto g = to_graph(35, oracle::random_connected(35, rng));
    auto R = dense_resistance_matrix(g);
    for (int x = 0; x < 35; x += 3)
      for (int y = 1; y < 35; y += 4)
        for (int z = 2; z < 35; z += 5) CHECK(R(x, y) <= R(x, z) + R(z, y) + 1e-12);
  }

  TEST_CASE("localized resistance") {
    auto whole = localized_resistance(cycle4(), 0, 2, 100);
    CHECK(whole.ratio == doctest::Approx(1.0));
    CHECK(whole.ball_size == 4);
    auto p = localized_resistance(path(4), 0, 4, 2);
    CHECK(p.ratio == doctest::Approx(1.0));
    CHECK(p.ball_size == 5);

    PartitionHierarchy h(Schedule::pure(RuleTag::SC), 3);
    auto cg = corner_graph_of(h, 3);
    // opposite corners of two side-adjacent level-3 cells
    auto x = cg.find(PlanePoint{Rational(1, 2), Rational(1, 2)});
    auto y = cg.find(PlanePoint{Rational(1, 2) - Rational(2, 27), Rational(1, 2) - Rational(1, 27)});
    REQUIRE(x >= 0);
    REQUIRE(y >= 0);
    auto sweep = sweep_alpha(cg.graph, x, y);
    CHECK(sweep.alpha > 0);
    CHECK(sweep.alpha <= 4);
    CHECK(sweep.tried.back().ratio <= 2);
    CHECK_THROWS_AS(localized_resistance(cycle4(), 0, 0, 2), std::invalid_argument);
  }

  TEST_CASE("cross weight decay") {
    PartitionHierarchy h(Schedule::pure(RuleTag::SC), 5);
    auto c1 = *h.find("1"), c5 = *h.find("5"), c2 = *h.find("2");
    auto seq = cross_weight_decay(h, {{1, c1}}, {{1, c5}}, 2, 4, 5);
    REQUIRE(seq.size() == 3);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      CHECK(seq[i] > 0);
      if (i > 0) CHECK(seq[i] < seq[i - 1]);
    }
    CHECK_THROWS_AS(cross_weight_decay(h, {{1, c1}}, {{1, c2}}, 2, 4, 5), std::invalid_argument);
    CHECK(cross_weight_decay(h, {{1, c1}}, {{1, c5}}, 3, 3, 4).size() == 1);
  }

  TEST_CASE("csv round trip") {
    LevelGraph g(3, {{0, 1, 0.5}, {1, 2, 2.0}});
    auto back = LevelGraph::from_csv(g.to_csv());
    CHECK(back.num_vertices() == 3);
    CHECK(back.edges()[1].c == 2.0);
  }
}
