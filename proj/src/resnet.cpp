#include "resdim/resnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <stdexcept>

#include "resdim/common.hpp"
#include "resdim/corner.hpp"
#include "resdim/linalg.hpp"

namespace resdim {

std::string flag_name(ResistanceFlag f) {
  switch (f) {
    case ResistanceFlag::Finite:
      return "finite";
    case ResistanceFlag::Infinite:
      return "infinite";
    case ResistanceFlag::Zero:
      return "zero";
  }
  return "finite";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_set(const LevelGraph& g, const std::vector<std::int32_t>& S, const char* name) {
  if (S.empty()) throw std::invalid_argument(std::string("empty vertex set ") + name);
  for (auto v : S)
    if (v < 0 || static_cast<std::size_t>(v) >= g.num_vertices())
      throw std::invalid_argument(std::string("vertex out of range in set ") + name);
}

bool intersects(const std::vector<std::int32_t>& A, const std::vector<std::int32_t>& B) {
  std::set<std::int32_t> a(A.begin(), A.end());
  return std::any_of(B.begin(), B.end(), [&](std::int32_t b) { return a.count(b) > 0; });
}

}  // namespace

ResistanceValue eff_resistance(const LevelGraph& g, const std::vector<std::int32_t>& A,
                               const std::vector<std::int32_t>& B, bool want_potential) {
  check_set(g, A, "A");
  check_set(g, B, "B");
  ResistanceValue r;
  if (intersects(A, B)) {
    r.flag = ResistanceFlag::Zero;
    r.value = 0;
    return r;
  }
  const std::size_t n = g.num_vertices();
  auto label = g.components();
  std::set<int> la, lb;
  for (auto a : A) la.insert(label[static_cast<std::size_t>(a)]);
  for (auto b : B) lb.insert(label[static_cast<std::size_t>(b)]);
  bool linked = std::any_of(la.begin(), la.end(), [&](int l) { return lb.count(l) > 0; });
  if (!linked) {
    r.flag = ResistanceFlag::Infinite;
    r.value = kInf;
    return r;
  }

  // role: 1 on A, 2 on B, 0 free inside an active component, -1 inactive.
  std::vector<int> role(n, -1);
  for (std::size_t v = 0; v < n; ++v)
    if (la.count(label[v]) || lb.count(label[v])) role[v] = 0;
  for (auto a : A) role[static_cast<std::size_t>(a)] = 1;
  for (auto b : B) role[static_cast<std::size_t>(b)] = 2;

  std::vector<int> free_idx;
  std::vector<int> pos(n, -1);
  for (std::size_t v = 0; v < n; ++v)
    if (role[v] == 0) {
      pos[v] = static_cast<int>(free_idx.size());
      free_idx.push_back(static_cast<int>(v));
    }

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free_idx.size()));
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& e : g.edges()) {
    int ru = role[static_cast<std::size_t>(e.u)], rv = role[static_cast<std::size_t>(e.v)];
    int pu = pos[static_cast<std::size_t>(e.u)], pv = pos[static_cast<std::size_t>(e.v)];
    if (ru == 0) {
      t.emplace_back(pu, pu, e.c);
      if (rv == 0) t.emplace_back(pu, pv, -e.c);
      if (rv == 1) rhs[pu] += e.c;
    }
    if (rv == 0) {
      t.emplace_back(pv, pv, e.c);
      if (ru == 0) t.emplace_back(pv, pu, -e.c);
      if (ru == 1) rhs[pv] += e.c;
    }
  }
  Eigen::SparseMatrix<double> L(static_cast<Eigen::Index>(free_idx.size()), static_cast<Eigen::Index>(free_idx.size()));
  L.setFromTriplets(t.begin(), t.end());
  Eigen::VectorXd u;
  if (free_idx.empty()) {
    u = Eigen::VectorXd();
  } else {
    SpdSolver solver(L, "grounded Laplacian");
    u = solver.solve(rhs);
  }

  auto value_at = [&](std::int32_t v) {
    int rv = role[static_cast<std::size_t>(v)];
    if (rv == 1) return 1.0;
    if (rv == 2) return 0.0;
    return u[pos[static_cast<std::size_t>(v)]];
  };
  double current = 0;
  for (const auto& e : g.edges()) {
    int ru = role[static_cast<std::size_t>(e.u)], rv = role[static_cast<std::size_t>(e.v)];
    if (ru == 1 && rv != 1) current += e.c * (1.0 - value_at(e.v));
    if (rv == 1 && ru != 1) current += e.c * (1.0 - value_at(e.u));
  }
  r.value = 1.0 / current;
  if (want_potential) {
    r.potential.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t v = 0; v < n; ++v)
      if (role[v] >= 0) r.potential[v] = value_at(static_cast<std::int32_t>(v));
  }
  return r;
}

struct GroundedSolver::Impl {
  SpdSolver solver;
  std::vector<int> keep;  // all vertices except the ground
  explicit Impl(SpdSolver s) : solver(std::move(s)) {}
};

GroundedSolver::GroundedSolver(const LevelGraph& g, std::int32_t ground) : n_(g.num_vertices()), ground_(ground) {
  if (ground < 0 || static_cast<std::size_t>(ground) >= n_) throw std::invalid_argument("ground vertex out of range");
  if (!g.connected()) throw std::invalid_argument("GroundedSolver needs a connected graph");
  std::vector<int> keep;
  keep.reserve(n_ - 1);
  for (std::size_t v = 0; v < n_; ++v)
    if (static_cast<std::int32_t>(v) != ground) keep.push_back(static_cast<int>(v));
  auto L = g.laplacian();
  impl_ = std::make_unique<Impl>(SpdSolver(submatrix(L, keep, keep), "grounded Laplacian", kCholeskyLimit));
  impl_->keep = std::move(keep);
}

GroundedSolver::~GroundedSolver() = default;
GroundedSolver::GroundedSolver(GroundedSolver&&) noexcept = default;
GroundedSolver& GroundedSolver::operator=(GroundedSolver&&) noexcept = default;

Eigen::VectorXd GroundedSolver::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd br(static_cast<Eigen::Index>(impl_->keep.size()));
  for (std::size_t i = 0; i < impl_->keep.size(); ++i) br[static_cast<Eigen::Index>(i)] = b[impl_->keep[i]];
  Eigen::VectorXd ur = impl_->solver.solve(br);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < impl_->keep.size(); ++i) u[impl_->keep[i]] = ur[static_cast<Eigen::Index>(i)];
  return u;
}

double GroundedSolver::resistance(std::int32_t x, std::int32_t y) const {
  if (x == y) return 0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
  b[x] = 1;
  b[y] = -1;
  auto u = solve(b);
  return u[x] - u[y];
}

Eigen::MatrixXd GroundedSolver::resistance_matrix(const std::vector<std::int32_t>& S) const {
  const auto k = static_cast<Eigen::Index>(S.size());
  // Columns of the grounded Green function for each point of S.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(impl_->keep.size()), k);
  std::vector<int> rpos(n_, -1);
  for (std::size_t i = 0; i < impl_->keep.size(); ++i) rpos[static_cast<std::size_t>(impl_->keep[i])] = static_cast<int>(i);
  for (Eigen::Index j = 0; j < k; ++j) {
    int r = rpos[static_cast<std::size_t>(S[static_cast<std::size_t>(j)])];
    if (r >= 0) B(r, j) = 1;
  }
  Eigen::MatrixXd G = impl_->solver.solve(B);
  Eigen::MatrixXd GS = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    int r = rpos[static_cast<std::size_t>(S[static_cast<std::size_t>(i)])];
    if (r >= 0) GS.row(i) = G.row(r);
  }
  Eigen::MatrixXd R(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) R(i, j) = GS(i, i) + GS(j, j) - GS(i, j) - GS(j, i);
  return R;
}

LevelGraph TracedForm::graph(double drop_below) const {
  std::vector<Edge> es;
  for (Eigen::Index i = 0; i < schur.rows(); ++i)
    for (Eigen::Index j = i + 1; j < schur.cols(); ++j) {
      double c = -schur(i, j);
      if (c > drop_below) es.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), c});
    }
  return LevelGraph(vertices.size(), es);
}

TracedForm trace(const LevelGraph& g, const std::vector<std::int32_t>& S) {
  if (S.empty()) throw std::invalid_argument("trace onto an empty set");
  std::set<std::int32_t> uniq(S.begin(), S.end());
  if (uniq.size() != S.size()) throw std::invalid_argument("trace set has duplicates");
  check_set(g, S, "S");
  if (!g.connected()) throw std::invalid_argument("trace needs a connected graph");
  TracedForm t;
  t.vertices = S;
  auto L = g.laplacian();
  std::vector<int> s(S.begin(), S.end()), interior;
  for (std::size_t v = 0; v < g.num_vertices(); ++v)
    if (!uniq.count(static_cast<std::int32_t>(v))) interior.push_back(static_cast<int>(v));
  Eigen::MatrixXd LSS = Eigen::MatrixXd(submatrix(L, s, s));
  if (interior.empty()) {
    t.schur = LSS;
    return t;
  }
  SpdSolver solver(submatrix(L, interior, interior),
                   "interior block of " + std::to_string(interior.size()) + " vertices");
  Eigen::SparseMatrix<double> LIS = submatrix(L, interior, s);
  Eigen::MatrixXd X = solver.solve(Eigen::MatrixXd(LIS));
  Eigen::MatrixXd schur = LSS - Eigen::MatrixXd(LIS.transpose()) * X;
  t.schur = 0.5 * (schur + schur.transpose());
  return t;
}

Eigen::MatrixXd resistance_weights(const TracedForm& t) {
  Eigen::MatrixXd mu = -t.schur;
  const Eigen::Index k = mu.rows();
  double scale = 0;
  for (Eigen::Index i = 0; i < k; ++i) scale = std::max(scale, std::abs(t.schur(i, i)));
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      if (mu(i, j) < -1e-10 * scale)
        throw NumericalFailure("negative resistance weight " + fmt(mu(i, j)) + " between traced vertices " +
                               std::to_string(t.vertices[static_cast<std::size_t>(i)]) + " and " +
                               std::to_string(t.vertices[static_cast<std::size_t>(j)]));
      if (mu(i, j) < 0) mu(i, j) = 0;
    }
  for (Eigen::Index i = 0; i < k; ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != i) s += mu(i, j);
    mu(i, i) = -s;
  }
  return mu;
}

UnitFlow min_energy_flow(const LevelGraph& g, const std::vector<std::int32_t>& A,
                         const std::vector<std::int32_t>& B) {
  check_set(g, A, "A");
  check_set(g, B, "B");
  const auto& edges = g.edges();
  UnitFlow out;
  out.source = A;
  out.sink = B;
  out.flow.assign(edges.size(), 0.0);
  if (intersects(A, B)) {
    out.flag = ResistanceFlag::Zero;
    return out;
  }
  // Identify A and B into two super nodes.
  const std::size_t n = g.num_vertices();
  std::vector<std::int32_t> node(n);
  for (std::size_t v = 0; v < n; ++v) node[v] = static_cast<std::int32_t>(v);
  const auto a_node = static_cast<std::int32_t>(n), b_node = static_cast<std::int32_t>(n + 1);
  for (auto a : A) node[static_cast<std::size_t>(a)] = a_node;
  for (auto b : B) node[static_cast<std::size_t>(b)] = b_node;

  std::vector<std::vector<std::pair<std::int32_t, std::size_t>>> adj(n + 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto u = node[static_cast<std::size_t>(edges[k].u)], v = node[static_cast<std::size_t>(edges[k].v)];
    if (u == v) continue;
    adj[static_cast<std::size_t>(u)].emplace_back(v, k);
    adj[static_cast<std::size_t>(v)].emplace_back(u, k);
  }
  // Breadth-first spanning tree rooted at the source.
  std::vector<std::int32_t> parent(n + 2, -2), depth(n + 2, 0);
  std::vector<std::size_t> parent_edge(n + 2, 0);
  std::deque<std::int32_t> q{a_node};
  parent[static_cast<std::size_t>(a_node)] = -1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (auto [v, k] : adj[static_cast<std::size_t>(u)]) {
      if (parent[static_cast<std::size_t>(v)] != -2) continue;
      parent[static_cast<std::size_t>(v)] = u;
      parent_edge[static_cast<std::size_t>(v)] = k;
      depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(u)] + 1;
      q.push_back(v);
    }
  }
  if (parent[static_cast<std::size_t>(b_node)] == -2) {
    out.flag = ResistanceFlag::Infinite;
    out.energy = kInf;
    return out;
  }
  // Sign of edge k when traversed from merged node `from` to its other end.
  auto sign_from = [&](std::size_t k, std::int32_t from) {
    return node[static_cast<std::size_t>(edges[k].u)] == from ? 1.0 : -1.0;
  };

  std::vector<double> f0(edges.size(), 0.0);
  for (auto v = b_node; parent[static_cast<std::size_t>(v)] >= 0; v = parent[static_cast<std::size_t>(v)]) {
    auto k = parent_edge[static_cast<std::size_t>(v)];
    f0[k] += sign_from(k, parent[static_cast<std::size_t>(v)]);
  }

  // Fundamental cycles of the non-tree edges.
  std::vector<Eigen::Triplet<double>> zt;
  Eigen::Index cycles = 0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto x = node[static_cast<std::size_t>(edges[k].u)], y = node[static_cast<std::size_t>(edges[k].v)];
    if (x == y || parent[static_cast<std::size_t>(x)] == -2) continue;
    if (parent_edge[static_cast<std::size_t>(y)] == k && parent[static_cast<std::size_t>(y)] == x) continue;
    if (parent_edge[static_cast<std::size_t>(x)] == k && parent[static_cast<std::size_t>(x)] == y) continue;
    zt.emplace_back(static_cast<Eigen::Index>(k), cycles, 1.0);
    // Walk x -> y along the edge, then back from y to x through the tree.
    auto a = y, b = x;
    std::vector<std::pair<std::size_t, double>> down;
    while (a != b) {
      if (depth[static_cast<std::size_t>(a)] >= depth[static_cast<std::size_t>(b)]) {
        auto ke = parent_edge[static_cast<std::size_t>(a)];
        zt.emplace_back(static_cast<Eigen::Index>(ke), cycles, sign_from(ke, a));
        a = parent[static_cast<std::size_t>(a)];
      } else {
        auto ke = parent_edge[static_cast<std::size_t>(b)];
        down.emplace_back(ke, sign_from(ke, parent[static_cast<std::size_t>(b)]));
        b = parent[static_cast<std::size_t>(b)];
      }
    }
    for (auto [ke, s] : down) zt.emplace_back(static_cast<Eigen::Index>(ke), cycles, s);
    ++cycles;
  }

  Eigen::VectorXd f = Eigen::Map<Eigen::VectorXd>(f0.data(), static_cast<Eigen::Index>(f0.size()));
  if (cycles > 0) {
    Eigen::SparseMatrix<double> Z(static_cast<Eigen::Index>(edges.size()), cycles);
    Z.setFromTriplets(zt.begin(), zt.end());
    Eigen::VectorXd r(static_cast<Eigen::Index>(edges.size()));
    for (std::size_t k = 0; k < edges.size(); ++k) r[static_cast<Eigen::Index>(k)] = 1.0 / edges[k].c;
    Eigen::SparseMatrix<double> M = Z.transpose() * r.asDiagonal() * Z;
    Eigen::VectorXd rhs = -(Z.transpose() * (r.asDiagonal() * f));
    SpdSolver solver(M, "mesh-current system");
    f += Z * solver.solve(rhs);
  }
  out.energy = 0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    out.flow[k] = f[static_cast<Eigen::Index>(k)];
    out.energy += out.flow[k] * out.flow[k] / edges[k].c;
  }
  return out;
}

Eigen::MatrixXd dense_resistance_matrix(const LevelGraph& g) {
  if (!g.connected()) throw std::invalid_argument("dense resistance needs a connected graph");
  Eigen::MatrixXd P = g.dense_laplacian().completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::Index n = P.rows();
  Eigen::MatrixXd R(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) R(i, j) = P(i, i) + P(j, j) - 2 * P(i, j);
  return R;
}

LocalizedResistance localized_resistance(const LevelGraph& g, std::int32_t x, std::int32_t y, double alpha) {
  if (x == y) throw std::invalid_argument("localized_resistance needs x != y");
  if (!(alpha > 1)) throw std::invalid_argument("alpha must exceed 1");
  LocalizedResistance out;
  out.alpha = alpha;
  auto label = g.components();
  if (label[static_cast<std::size_t>(x)] != label[static_cast<std::size_t>(y)])
    throw std::invalid_argument("x and y lie in different components");
  std::vector<std::int32_t> comp;
  std::int32_t xi = -1, yi = -1;
  for (std::size_t v = 0; v < g.num_vertices(); ++v)
    if (label[v] == label[static_cast<std::size_t>(x)]) {
      if (static_cast<std::int32_t>(v) == x) xi = static_cast<std::int32_t>(comp.size());
      if (static_cast<std::int32_t>(v) == y) yi = static_cast<std::int32_t>(comp.size());
      comp.push_back(static_cast<std::int32_t>(v));
    }
  LevelGraph h = g.induced(comp);
  GroundedSolver solver(h, xi);
  // R(x, z) is the diagonal of the Green function grounded at x.
  const std::size_t n = h.num_vertices();
  std::vector<double> rx(n, 0.0);
  const std::size_t block = 256;
  for (std::size_t start = 0; start < n; start += block) {
    std::size_t stop = std::min(n, start + block);
    for (std::size_t z = start; z < stop; ++z) {
      if (static_cast<std::int32_t>(z) == xi) continue;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      b[static_cast<Eigen::Index>(z)] = 1;
      rx[z] = solver.solve(b)[static_cast<Eigen::Index>(z)];
    }
  }
  out.global = rx[static_cast<std::size_t>(yi)];
  std::vector<std::int32_t> ball;
  std::int32_t bx = -1, by = -1;
  for (std::size_t z = 0; z < n; ++z)
    if (rx[z] < alpha * out.global) {
      if (static_cast<std::int32_t>(z) == xi) bx = static_cast<std::int32_t>(ball.size());
      if (static_cast<std::int32_t>(z) == yi) by = static_cast<std::int32_t>(ball.size());
      ball.push_back(static_cast<std::int32_t>(z));
    }
  out.ball_size = ball.size();
  auto local = eff_resistance(h.induced(ball), {bx}, {by});
  out.local = local.value;
  out.flag = local.flag;
  out.ratio = local.flag == ResistanceFlag::Infinite ? kInf : out.local / out.global;
  return out;
}

AlphaSweep sweep_alpha(const LevelGraph& g, std::int32_t x, std::int32_t y, double max_alpha) {
  AlphaSweep s;
  for (double a = 2; a <= max_alpha; a *= 2) {
    auto r = localized_resistance(g, x, y, a);
    s.tried.push_back(r);
    if (r.ratio <= 2) {
      s.alpha = a;
      break;
    }
  }
  return s;
}

namespace {

bool squares_touch(const PartitionHierarchy& h, const CellRef& a, const CellRef& b) {
  const Cell& ca = h.cell(a.level, a.index);
  const Cell& cb = h.cell(b.level, b.index);
  std::int64_t reach = h.half_side(a.level) + h.half_side(b.level);
  return std::llabs(ca.cx - cb.cx) <= reach && std::llabs(ca.cy - cb.cy) <= reach;
}

}  // namespace

std::vector<double> cross_weight_decay(const PartitionHierarchy& h, const std::vector<CellRef>& A1,
                                       const std::vector<CellRef>& A2, int n_lo, int n_hi, int fine_level) {
  if (A1.empty() || A2.empty()) throw std::invalid_argument("empty cell union");
  if (n_lo > n_hi || n_lo < 0) throw std::invalid_argument("bad level range");
  if (fine_level < n_hi || fine_level > h.depth()) throw std::out_of_range("fine level outside built range");
  for (const auto& a : A1)
    for (const auto& b : A2)
      if (squares_touch(h, a, b))
        throw std::invalid_argument("cell unions are adjacent (" + h.address(a.level, a.index) + " meets " +
                                    h.address(b.level, b.index) + ")");
  CornerGraph cg = corner_graph_of(h, fine_level);
  const std::int64_t hf = h.half_side(fine_level);
  auto member = [&](std::int32_t v, const std::vector<CellRef>& U) {
    std::int64_t lx = cg.lattice[static_cast<std::size_t>(v)][0] * hf, ly = cg.lattice[static_cast<std::size_t>(v)][1] * hf;
    for (const auto& c : U) {
      const Cell& cell = h.cell(c.level, c.index);
      std::int64_t s = h.half_side(c.level);
      if (std::llabs(lx - cell.cx) <= s && std::llabs(ly - cell.cy) <= s) return true;
    }
    return false;
  };
  auto L = cg.graph.laplacian();
  std::vector<double> out;
  for (int n = n_lo; n <= n_hi; ++n) {
    std::int64_t hn = h.half_side(n) / hf;
    std::set<std::int32_t> vs;
    for (std::size_t i = 0; i < h.size(n); ++i) {
      const Cell& c = h.cell(n, i);
      std::int64_t x = c.cx / hf, y = c.cy / hf;
      for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2) vs.insert(cg.find(x + sx * hn, y + sy * hn));
    }
    std::vector<int> S(vs.begin(), vs.end()), interior;
    for (std::size_t v = 0; v < cg.graph.num_vertices(); ++v)
      if (!vs.count(static_cast<std::int32_t>(v))) interior.push_back(static_cast<int>(v));
    Eigen::VectorXd a1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S.size()));
    Eigen::VectorXd a2 = a1;
    for (std::size_t i = 0; i < S.size(); ++i) {
      if (member(S[i], A1)) a1[static_cast<Eigen::Index>(i)] = 1;
      if (member(S[i], A2)) a2[static_cast<Eigen::Index>(i)] = 1;
    }
    Eigen::VectorXd y = submatrix(L, S, S) * a2;
    if (!interior.empty()) {
      Eigen::SparseMatrix<double> LIS = submatrix(L, interior, S);
      SpdSolver solver(submatrix(L, interior, interior), "interior block");
      y -= LIS.transpose() * solver.solve(Eigen::VectorXd(LIS * a2));
    }
    out.push_back(-2.0 * a1.dot(y));
  }
  return out;
}

}  // namespace resdim
