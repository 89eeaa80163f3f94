#include "resdim/penergy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/SparseCholesky>

#include "resdim/common.hpp"
#include "resdim/corner.hpp"
#include "resdim/linalg.hpp"
#include "resdim/mixedcarpet.hpp"
#include "resdim/resnet.hpp"

namespace resdim {

namespace {

struct Near {
  std::size_t cell;
  int dist;
  std::int64_t dx, dy;  // grid offset from w
};

// Cells of level b within chain distance m_star + 1 of w.
std::vector<Near> neighbourhood(const PartitionHierarchy& h, int b, std::size_t w, int m_star) {
  auto g0 = h.grid_pos(b, w);
  std::vector<Near> out{{w, 0, 0, 0}};
  std::unordered_map<std::size_t, int> dist{{w, 0}};
  std::deque<std::size_t> q{w};
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    int du = dist[u];
    if (du == m_star + 1) continue;
    auto gu = h.grid_pos(b, u);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        auto v = h.at_grid(b, gu[0] + dx, gu[1] + dy);
        if (!v || dist.count(*v)) continue;
        dist[*v] = du + 1;
        auto gv = h.grid_pos(b, *v);
        out.push_back({*v, du + 1, gv[0] - g0[0], gv[1] - g0[1]});
        q.push_back(*v);
      }
  }
  return out;
}

// Offsets under the dihedral group of the square, lexicographically least image.
std::string canonical_key(const std::vector<Near>& cells) {
  std::vector<std::pair<std::int64_t, std::int64_t>> best;
  for (int t = 0; t < 8; ++t) {
    std::vector<std::pair<std::int64_t, std::int64_t>> img;
    for (const auto& c : cells) {
      std::int64_t x = c.dx, y = c.dy;
      if (t & 1) std::swap(x, y);
      if (t & 2) x = -x;
      if (t & 4) y = -y;
      img.push_back({x, y});
    }
    std::sort(img.begin(), img.end());
    if (t == 0 || img < best) best = img;
  }
  std::ostringstream os;
  for (const auto& [x, y] : best) os << '(' << x << ',' << y << ')';
  return os.str();
}

struct EdgeIdx {
  std::int32_t u, v;
  double c;
};

// Dinic max flow on an undirected capacitated graph with super source and sink.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t n) : head_(n, -1), level_(n), it_(n) {}

  void add(std::int32_t u, std::int32_t v, double cap_uv, double cap_vu) {
    arcs_.push_back({v, head_[static_cast<std::size_t>(u)], cap_uv});
    head_[static_cast<std::size_t>(u)] = static_cast<int>(arcs_.size()) - 1;
    arcs_.push_back({u, head_[static_cast<std::size_t>(v)], cap_vu});
    head_[static_cast<std::size_t>(v)] = static_cast<int>(arcs_.size()) - 1;
  }

  double run(std::int32_t s, std::int32_t t) {
    double total = 0;
    while (bfs(s, t)) {
      it_ = head_;
      while (double f = dfs(s, t, std::numeric_limits<double>::infinity())) total += f;
    }
    return total;
  }

  // Vertices reachable from s in the residual graph.
  std::vector<char> source_side(std::int32_t s) const {
    std::vector<char> seen(head_.size(), 0);
    std::deque<std::int32_t> q{s};
    seen[static_cast<std::size_t>(s)] = 1;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (int a = head_[static_cast<std::size_t>(u)]; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
        const Arc& e = arcs_[static_cast<std::size_t>(a)];
        if (e.cap > kEps && !seen[static_cast<std::size_t>(e.to)]) {
          seen[static_cast<std::size_t>(e.to)] = 1;
          q.push_back(e.to);
        }
      }
    }
    return seen;
  }

 private:
  static constexpr double kEps = 1e-12;
  struct Arc {
    std::int32_t to;
    int next;
    double cap;
  };

  bool bfs(std::int32_t s, std::int32_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    level_[static_cast<std::size_t>(s)] = 0;
    std::deque<std::int32_t> q{s};
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (int a = head_[static_cast<std::size_t>(u)]; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
        const Arc& e = arcs_[static_cast<std::size_t>(a)];
        if (e.cap > kEps && level_[static_cast<std::size_t>(e.to)] < 0) {
          level_[static_cast<std::size_t>(e.to)] = level_[static_cast<std::size_t>(u)] + 1;
          q.push_back(e.to);
        }
      }
    }
    return level_[static_cast<std::size_t>(t)] >= 0;
  }

  double dfs(std::int32_t u, std::int32_t t, double f) {
    if (u == t) return f;
    for (int& a = it_[static_cast<std::size_t>(u)]; a >= 0; a = arcs_[static_cast<std::size_t>(a)].next) {
      Arc& e = arcs_[static_cast<std::size_t>(a)];
      if (e.cap > kEps && level_[static_cast<std::size_t>(e.to)] == level_[static_cast<std::size_t>(u)] + 1) {
        double got = dfs(e.to, t, std::min(f, e.cap));
        if (got > 0) {
          e.cap -= got;
          arcs_[static_cast<std::size_t>(a ^ 1)].cap += got;
          return got;
        }
      }
    }
    return 0;
  }

  std::vector<int> head_;
  std::vector<Arc> arcs_;
  std::vector<int> level_, it_;
};

// Free-vertex system shared by all exponents: index maps, the weighted Laplacian on free
// vertices and a factorization of it.
struct Setup {
  const LevelGraph& g;
  std::vector<int> role;    // 1 inner, 0 outer or constant, -1 free
  std::vector<int> idx;     // free index or -1
  std::vector<int> free;    // free vertex ids
  std::vector<double> fixed_value;
  Eigen::SparseMatrix<double> Lff;

  Setup(const LevelGraph& graph, const std::vector<std::int32_t>& inner, const std::vector<std::int32_t>& outer)
      : g(graph) {
    const std::size_t n = g.num_vertices();
    role.assign(n, -1);
    fixed_value.assign(n, 0.0);
    for (auto v : inner) {
      if (v < 0 || static_cast<std::size_t>(v) >= n) throw std::out_of_range("inner vertex out of range");
      role[static_cast<std::size_t>(v)] = 1;
      fixed_value[static_cast<std::size_t>(v)] = 1.0;
    }
    for (auto v : outer) {
      if (v < 0 || static_cast<std::size_t>(v) >= n) throw std::out_of_range("outer vertex out of range");
      if (role[static_cast<std::size_t>(v)] == 1) throw std::invalid_argument("inner and outer sets intersect");
      role[static_cast<std::size_t>(v)] = 0;
    }
    // Free components without a fixed vertex carry zero energy at any constant; pin them to 0.
    auto comp = g.components();
    std::map<int, bool> anchored;
    for (std::size_t v = 0; v < n; ++v)
      if (role[v] >= 0) anchored[comp[v]] = true;
    for (std::size_t v = 0; v < n; ++v)
      if (role[v] < 0 && !anchored[comp[v]]) role[v] = 0;
    idx.assign(n, -1);
    for (std::size_t v = 0; v < n; ++v)
      if (role[v] < 0) {
        idx[v] = static_cast<int>(free.size());
        free.push_back(static_cast<int>(v));
      }
    std::vector<Eigen::Triplet<double>> t;
    for (const auto& e : g.edges()) {
      int a = idx[static_cast<std::size_t>(e.u)], b = idx[static_cast<std::size_t>(e.v)];
      if (a >= 0) t.emplace_back(a, a, e.c);
      if (b >= 0) t.emplace_back(b, b, e.c);
      if (a >= 0 && b >= 0) {
        t.emplace_back(a, b, -e.c);
        t.emplace_back(b, a, -e.c);
      }
    }
    Lff.resize(static_cast<Eigen::Index>(free.size()), static_cast<Eigen::Index>(free.size()));
    Lff.setFromTriplets(t.begin(), t.end());
  }

  std::vector<double> assemble(const Eigen::VectorXd& x) const {
    std::vector<double> f = fixed_value;
    for (std::size_t i = 0; i < free.size(); ++i) f[static_cast<std::size_t>(free[i])] = x[static_cast<Eigen::Index>(i)];
    return f;
  }
};

// Hoelder dual bound: any flow j that is divergence free on free vertices, with net flux F
// out of the inner set, gives E >= F^p / (sum |j|^q c^(1-q))^(p-1).
double dual_bound(const Setup& s, const SpdSolver* lap, const std::vector<double>& f, double p) {
  const auto& edges = s.g.edges();
  std::vector<double> j(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    double a = f[static_cast<std::size_t>(edges[e].u)] - f[static_cast<std::size_t>(edges[e].v)];
    j[e] = edges[e].c * std::copysign(std::pow(std::abs(a), p - 1), a);
  }
  if (!s.free.empty()) {
    Eigen::VectorXd div = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.free.size()));
    for (std::size_t e = 0; e < edges.size(); ++e) {
      int a = s.idx[static_cast<std::size_t>(edges[e].u)], b = s.idx[static_cast<std::size_t>(edges[e].v)];
      if (a >= 0) div[a] += j[e];
      if (b >= 0) div[b] -= j[e];
    }
    Eigen::VectorXd gpot = lap->solve(div);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      int a = s.idx[static_cast<std::size_t>(edges[e].u)], b = s.idx[static_cast<std::size_t>(edges[e].v)];
      double gu = a >= 0 ? gpot[a] : 0.0, gv = b >= 0 ? gpot[b] : 0.0;
      j[e] -= edges[e].c * (gu - gv);
    }
  }
  double flux = 0, dual = 0;
  double q = p / (p - 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    int ru = s.role[static_cast<std::size_t>(edges[e].u)], rv = s.role[static_cast<std::size_t>(edges[e].v)];
    if (ru == 1) flux += j[e];
    if (rv == 1) flux -= j[e];
    dual += std::pow(std::abs(j[e]), q) * std::pow(edges[e].c, 1 - q);
  }
  if (!(flux > 0) || !(dual > 0)) return 0;
  return std::pow(flux, p) / std::pow(dual, p - 1);
}

void finish(PEnergyValue& r, double tol) {
  r.gap = r.value > 0 ? (r.value - r.lower) / r.value : 0.0;
  r.certified = r.gap <= tol;
}

PEnergyValue solve_p1(const Setup& s, const PEnergyOptions& opt) {
  const std::size_t n = s.g.num_vertices();
  MaxFlow mf(n + 2);
  auto S = static_cast<std::int32_t>(n), T = static_cast<std::int32_t>(n + 1);
  const double big = 1e300;
  for (const auto& e : s.g.edges()) mf.add(e.u, e.v, e.c, e.c);
  for (std::size_t v = 0; v < n; ++v) {
    if (s.role[v] == 1) mf.add(S, static_cast<std::int32_t>(v), big, 0);
    // Only true outer vertices are sinks; pinned isolated components have no edges anyway.
    if (s.role[v] == 0) mf.add(static_cast<std::int32_t>(v), T, big, 0);
  }
  PEnergyValue r;
  r.p = 1;
  r.method = "max-flow";
  r.lower = mf.run(S, T);
  auto side = mf.source_side(S);
  r.potential.assign(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) r.potential[v] = side[v] ? 1.0 : 0.0;
  r.value = p_energy_of(s.g, r.potential, 1.0);
  r.iterations = 1;
  finish(r, opt.gap_tol);
  return r;
}

// Newton's method on the smoothed energy sum c((a^2+eps^2)^(p/2) - eps^p), eps driven to zero.
PEnergyValue solve_newton(const Setup& s, const SpdSolver& lap, double p, const PEnergyOptions& opt,
                          Eigen::VectorXd x) {
  const auto& edges = s.g.edges();
  const auto nf = static_cast<Eigen::Index>(s.free.size());
  auto diff = [&](const Eigen::VectorXd& y, const EdgeIdx& e) {
    int a = s.idx[static_cast<std::size_t>(e.u)], b = s.idx[static_cast<std::size_t>(e.v)];
    double fu = a >= 0 ? y[a] : s.fixed_value[static_cast<std::size_t>(e.u)];
    double fv = b >= 0 ? y[b] : s.fixed_value[static_cast<std::size_t>(e.v)];
    return fu - fv;
  };
  std::vector<EdgeIdx> es;
  for (const auto& e : edges) {
    // Edges between fixed vertices contribute a constant.
    if (s.idx[static_cast<std::size_t>(e.u)] < 0 && s.idx[static_cast<std::size_t>(e.v)] < 0) continue;
    es.push_back({e.u, e.v, e.c});
  }
  double eps = opt.eps_start;
  auto J = [&](const Eigen::VectorXd& y) {
    double sum = 0, ep = std::pow(eps, p);
    for (const auto& e : es) {
      double a = diff(y, e);
      sum += e.c * (std::pow(a * a + eps * eps, p / 2) - ep);
    }
    return sum;
  };

  // Hessian pattern is the free Laplacian's; keep pointers to each edge's entries.
  Eigen::SparseMatrix<double> H = s.Lff;
  H.makeCompressed();
  struct Slots {
    double *uu = nullptr, *vv = nullptr, *uv = nullptr, *vu = nullptr;
  };
  std::vector<Slots> slots(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) {
    int a = s.idx[static_cast<std::size_t>(es[i].u)], b = s.idx[static_cast<std::size_t>(es[i].v)];
    if (a >= 0) slots[i].uu = &H.coeffRef(a, a);
    if (b >= 0) slots[i].vv = &H.coeffRef(b, b);
    if (a >= 0 && b >= 0) {
      slots[i].uv = &H.coeffRef(a, b);
      slots[i].vu = &H.coeffRef(b, a);
    }
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.analyzePattern(H);

  PEnergyValue r;
  r.p = p;
  r.method = "newton";
  int iters = 0;
  while (true) {
    for (int it = 0; it < 100 && iters < opt.max_newton; ++it, ++iters) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(nf);
      std::fill(H.valuePtr(), H.valuePtr() + H.nonZeros(), 0.0);
      for (std::size_t i = 0; i < es.size(); ++i) {
        const auto& e = es[i];
        double a = diff(x, e);
        double base = a * a + eps * eps;
        double d1 = e.c * p * a * std::pow(base, p / 2 - 1);
        double d2 = e.c * p * std::pow(base, p / 2 - 2) * ((p - 1) * a * a + eps * eps);
        int ia = s.idx[static_cast<std::size_t>(e.u)], ib = s.idx[static_cast<std::size_t>(e.v)];
        if (ia >= 0) {
          grad[ia] += d1;
          *slots[i].uu += d2;
        }
        if (ib >= 0) {
          grad[ib] -= d1;
          *slots[i].vv += d2;
        }
        if (ia >= 0 && ib >= 0) {
          *slots[i].uv -= d2;
          *slots[i].vu -= d2;
        }
      }
      ldlt.factorize(H);
      if (ldlt.info() != Eigen::Success) throw NumericalFailure("p-energy Newton system is not positive definite");
      Eigen::VectorXd d = ldlt.solve(-grad);
      double dec = -grad.dot(d);
      double j0 = J(x);
      if (!(dec > 1e-15 * std::max(j0, 1e-300))) break;
      double t = 1;
      Eigen::VectorXd y;
      while (true) {
        y = x + t * d;
        if (J(y) <= j0 - 1e-4 * t * dec || t < 1e-12) break;
        t *= 0.5;
      }
      x = y;
    }
    std::vector<double> f = s.assemble(x);
    for (auto& v : f) v = std::clamp(v, 0.0, 1.0);
    r.value = p_energy_of(s.g, f, p);
    r.lower = dual_bound(s, &lap, f, p);
    r.potential = std::move(f);
    finish(r, opt.gap_tol);
    if (r.certified || eps <= opt.eps_min || iters >= opt.max_newton) break;
    eps *= 0.1;
  }
  r.iterations = iters;
  return r;
}

}  // namespace

double p_energy_of(const LevelGraph& g, const std::vector<double>& f, double p) {
  if (f.size() != g.num_vertices()) throw std::invalid_argument("potential size does not match the graph");
  double sum = 0;
  for (const auto& e : g.edges())
    sum += e.c * std::pow(std::abs(f[static_cast<std::size_t>(e.u)] - f[static_cast<std::size_t>(e.v)]), p);
  return sum;
}

PEnergyValue p_energy(const LevelGraph& g, const std::vector<std::int32_t>& inner,
                      const std::vector<std::int32_t>& outer, double p, const PEnergyOptions& opt,
                      const std::vector<double>* warm) {
  if (!(p >= 1) || !std::isfinite(p)) throw std::invalid_argument("p-energy needs p >= 1");
  if (inner.empty()) throw std::invalid_argument("p-energy needs a nonempty inner set");
  if (outer.empty()) {
    PEnergyValue r;
    r.p = p;
    r.degenerate = true;
    r.certified = true;
    r.method = "empty-outer";
    r.potential.assign(g.num_vertices(), 1.0);
    return r;
  }
  Setup s(g, inner, outer);
  if (p == 1) return solve_p1(s, opt);
  SpdSolver lap(s.Lff, "free Laplacian of the separation problem");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.free.size()));
  for (const auto& e : g.edges()) {
    int a = s.idx[static_cast<std::size_t>(e.u)], b = s.idx[static_cast<std::size_t>(e.v)];
    if (a >= 0 && b < 0) rhs[a] += e.c * s.fixed_value[static_cast<std::size_t>(e.v)];
    if (b >= 0 && a < 0) rhs[b] += e.c * s.fixed_value[static_cast<std::size_t>(e.u)];
  }
  Eigen::VectorXd x = s.free.empty() ? Eigen::VectorXd() : lap.solve(rhs);
  if (p == 2) {
    PEnergyValue r;
    r.p = 2;
    r.method = "linear";
    r.potential = s.assemble(x);
    r.value = p_energy_of(g, r.potential, 2);
    r.lower = dual_bound(s, &lap, r.potential, 2);
    r.iterations = 1;
    finish(r, opt.gap_tol);
    return r;
  }
  if (warm && warm->size() == g.num_vertices())
    for (std::size_t i = 0; i < s.free.size(); ++i)
      x[static_cast<Eigen::Index>(i)] = std::clamp((*warm)[static_cast<std::size_t>(s.free[i])], 0.0, 1.0);
  return solve_newton(s, lap, p, opt, x);
}

PEnergyValue p_energy(const SeparationProblem& sp, double p, const PEnergyOptions& opt,
                      const std::vector<double>* warm) {
  if (sp.outer_empty) {
    PEnergyValue r;
    r.p = p;
    r.degenerate = true;
    r.certified = true;
    r.method = "empty-outer";
    r.potential.assign(sp.graph.num_vertices(), 1.0);
    return r;
  }
  return p_energy(sp.graph, sp.inner, sp.outer, p, opt, warm);
}

SeparationProblem separation_problem(const PartitionHierarchy& h, int base_level, std::size_t w, int k, int m_star) {
  if (k < 0 || base_level < 0 || base_level + k > h.depth())
    throw std::out_of_range("separation problem needs base_level + k <= depth");
  if (w >= h.size(base_level)) throw std::out_of_range("cell index out of range");
  if (m_star < 1) throw std::invalid_argument("m_star must be at least 1");
  SeparationProblem sp;
  sp.base_level = base_level;
  sp.k = k;
  sp.cell = w;
  sp.address = h.address(base_level, w);
  auto near = neighbourhood(h, base_level, w, m_star);
  sp.type_key = canonical_key(near);
  if (!h.schedule().uniform()) sp.type_key = "b" + std::to_string(base_level) + ":" + sp.type_key;
  sp.outer_empty = std::none_of(near.begin(), near.end(), [&](const Near& c) { return c.dist > m_star; });
  if (sp.outer_empty) return sp;

  const int fine = base_level + k;
  std::unordered_map<std::size_t, int> role;  // fine cell -> 1 inner, -1 free, 0 outer
  std::vector<std::size_t> free_cells;
  for (const auto& c : near)
    for (auto d : h.descendants(base_level, c.cell, fine)) {
      int r = c.dist == 0 ? 1 : (c.dist <= m_star ? -1 : 0);
      role[d] = r;
      if (r == -1) free_cells.push_back(d);
    }
  std::unordered_map<std::size_t, std::int32_t> local;
  auto id = [&](std::size_t cell) {
    auto [it, fresh] = local.emplace(cell, static_cast<std::int32_t>(local.size()));
    if (fresh) {
      int r = role[cell];
      if (r == 1) sp.inner.push_back(it->second);
      if (r == 0) sp.outer.push_back(it->second);
    }
    return it->second;
  };
  std::vector<Edge> edges;
  for (auto u : free_cells) {
    auto gu = h.grid_pos(fine, u);
    auto iu = id(u);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        auto v = h.at_grid(fine, gu[0] + dx, gu[1] + dy);
        if (!v) continue;
        auto rv = role.find(*v);
        if (rv == role.end()) throw std::logic_error("separation neighbourhood is not closed");
        if (rv->second == -1 && *v < u) continue;  // free-free edges once
        edges.push_back({iu, id(*v), 1.0});
      }
  }
  sp.graph = LevelGraph(local.size(), edges);
  if (sp.inner.empty()) sp.inner.push_back(id(h.descendants(base_level, w, fine).front()));
  return sp;
}

ProblemSet separation_family(const Schedule& s, int k, int horizon, bool exhaustive, int m_star) {
  if (k < 0 || horizon < 0) throw std::invalid_argument("separation family needs k >= 0 and horizon >= 0");
  PartitionHierarchy h(s, horizon + k);
  ProblemSet set;
  set.k = k;
  set.horizon = horizon;
  set.exhaustive = exhaustive;
  std::set<std::string> seen;
  for (int b = 0; b <= horizon; ++b) {
    std::size_t before = seen.size();
    for (std::size_t w = 0; w < h.size(b); ++w) {
      ++set.cells_covered;
      std::string key = canonical_key(neighbourhood(h, b, w, m_star));
      if (!s.uniform()) key = "b" + std::to_string(b) + ":" + key;
      bool fresh = seen.insert(key).second;
      if (exhaustive || fresh) set.problems.push_back(separation_problem(h, b, w, k, m_star));
    }
    set.new_types.push_back(seen.size() - before);
  }
  return set;
}

SupEnergy sup_energy(const ProblemSet& set, double p, const PEnergyOptions& opt,
                     std::vector<std::vector<double>>* warm) {
  SupEnergy out;
  out.p = p;
  out.k = set.k;
  out.values.assign(set.problems.size(), 0.0);
  std::vector<char> cert(set.problems.size(), 1);
  if (warm) warm->resize(set.problems.size());
  parallel_for(set.problems.size(), [&](std::size_t i) {
    const std::vector<double>* seed = warm ? &(*warm)[i] : nullptr;
    auto r = p_energy(set.problems[i], p, opt, seed);
    out.values[i] = r.value;
    cert[i] = r.certified;
    if (warm) (*warm)[i] = std::move(r.potential);
  });
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.certified = out.certified && cert[i];
    if (i == 0 || out.values[i] > out.value) {
      out.value = out.values[i];
      out.argmax = i;
    }
  }
  if (!set.problems.empty()) {
    const auto& sp = set.problems[out.argmax];
    out.argmax_cell = std::to_string(sp.base_level) + ":" + sp.address;
  }
  return out;
}

EnergyLadder::EnergyLadder(const Schedule& s, int kmax, int horizon, PEnergyOptions opt)
    : schedule_(s), kmax_(kmax), opt_(opt) {
  if (kmax < 2) throw std::invalid_argument("energy ladder needs kmax >= 2");
  for (int k = 1; k <= kmax; ++k) families_.push_back(separation_family(s, k, horizon));
  warm_.resize(families_.size());
}

const RateRow& EnergyLadder::row(double p) {
  for (const auto& r : rows_)
    if (r.p == p) return r;
  RateRow row;
  row.p = p;
  for (std::size_t i = 0; i < families_.size(); ++i) {
    row.sups.push_back(sup_energy(families_[i], p, opt_, &warm_[i]));
    row.certified = row.certified && row.sups.back().certified;
  }
  // Tail of ceil(kmax/2) points, at least two.
  int tail = std::max(2, (kmax_ + 1) / 2);
  std::vector<double> ks, logs;
  for (int k = kmax_ - tail + 1; k <= kmax_; ++k) {
    ks.push_back(k);
    logs.push_back(std::log(row.sups[static_cast<std::size_t>(k - 1)].value));
  }
  row.rate = ls_slope(ks, logs);
  row.rate_hi = -INFINITY;
  row.rate_lo = INFINITY;
  for (std::size_t i = 1; i < logs.size(); ++i) {
    row.rate_hi = std::max(row.rate_hi, logs[i] - logs[i - 1]);
    row.rate_lo = std::min(row.rate_lo, logs[i] - logs[i - 1]);
  }
  rows_.push_back(std::move(row));
  return rows_.back();
}

std::string EnergyLadder::csv() const {
  std::vector<const RateRow*> sorted;
  for (const auto& r : rows_) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const RateRow* a, const RateRow* b) { return a->p < b->p; });
  std::ostringstream os;
  os << "p,k,sup_energy,argmax_cell\n";
  for (const auto* r : sorted)
    for (const auto& s : r->sups) os << fmt(r->p) << ',' << s.k << ',' << fmt(s.value) << ',' << s.argmax_cell << '\n';
  return os.str();
}

nlohmann::json CriticalP::to_json() const {
  nlohmann::json j;
  j["interval"] = {lo, hi};
  j["flagged"] = flagged;
  for (const auto& r : table)
    j["rates"].push_back({{"p", r.p}, {"rate", r.rate}, {"rate_hi", r.rate_hi}, {"rate_lo", r.rate_lo},
                          {"certified", r.certified}});
  return j;
}

CriticalP critical_p(EnergyLadder& ladder, double p_lo, double p_hi, double tol, double rate_tol) {
  if (ladder.kmax() < 3) throw std::invalid_argument("critical_p needs kmax >= 3");
  if (!(p_lo >= 1) || !(p_hi > p_lo) || !(tol > 0)) throw std::invalid_argument("critical_p needs 1 <= p_lo < p_hi");
  auto above = [&](double p) { return ladder.row(p).rate < -rate_tol; };
  CriticalP out;
  std::vector<double> ps{p_lo, p_hi};
  if (above(p_lo)) {
    out.lo = out.hi = p_lo;
    out.flagged = true;
  } else if (!above(p_hi)) {
    out.lo = out.hi = p_hi;
    out.flagged = true;
  } else {
    double lo = p_lo, hi = p_hi;
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      ps.push_back(mid);
      (above(mid) ? hi : lo) = mid;
    }
    out.lo = lo;
    out.hi = hi;
  }
  std::sort(ps.begin(), ps.end());
  for (double p : ps) out.table.push_back(ladder.row(p));
  return out;
}

nlohmann::json SpectralDimEstimate::to_json() const {
  return {{"p", p},         {"rate", rate},   {"rate_hi", rate_hi}, {"rate_lo", rate_lo},      {"nstar", nstar},
          {"upper", upper}, {"lower", lower}, {"fitted", fitted},   {"degenerate", degenerate}};
}

SpectralDimEstimate p_spectral_dims(EnergyLadder& ladder, double p, double nstar) {
  if (!(nstar > 1)) throw std::invalid_argument("p_spectral_dims needs N_* > 1");
  const auto& row = ladder.row(p);
  SpectralDimEstimate e;
  e.p = p;
  e.rate = row.rate;
  e.rate_hi = row.rate_hi;
  e.rate_lo = row.rate_lo;
  e.nstar = nstar;
  double ln = std::log(nstar);
  auto dim = [&](double r) { return p / (1 - r / ln); };
  e.degenerate = row.rate_hi >= ln;
  e.fitted = dim(row.rate);
  e.upper = dim(row.rate_hi);
  e.lower = dim(row.rate_lo);
  return e;
}

CellBand cell_resistance_band(const Schedule& s, int levels, int fine_level, std::size_t cells_per_level,
                              std::uint64_t seed) {
  if (levels < 1 || fine_level < levels) throw std::invalid_argument("cell band needs 1 <= levels <= fine_level");
  PartitionHierarchy h(s, fine_level);
  CornerGraph g = corner_graph_of(h, fine_level);
  GroundedSolver solver(g.graph, 0);
  std::int64_t top = g.unit / 2;
  double pt_n = solver.resistance(g.find(top, top), g.find(-top, -top));
  std::mt19937_64 rng(seed);
  CellBand band;
  band.lo = INFINITY;
  band.hi = 0;
  for (int b = 1; b <= levels; ++b) {
    double pt_b = resistance_scales(s, b, 0).pt;
    auto lvl = adjacency(h, b);
    std::vector<std::vector<std::size_t>> owner(g.graph.num_vertices());
    for (std::size_t v = 0; v < owner.size(); ++v) owner[v] = h.cells_containing(g.point(v), b);
    std::vector<std::size_t> cells(h.size(b));
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    cells.resize(std::min(cells.size(), cells_per_level));
    double lo = INFINITY, hi = 0;
    for (auto w : cells) {
      auto dist = lvl.distances({w}, static_cast<int>(h.size(b)));
      std::vector<std::int32_t> K, A;
      for (std::size_t v = 0; v < owner.size(); ++v) {
        bool in = false, far = false;
        for (auto c : owner[v]) {
          in = in || c == w;
          far = far || dist[c] >= 2;
        }
        if (in) K.push_back(static_cast<std::int32_t>(v));
        if (far) A.push_back(static_cast<std::int32_t>(v));
      }
      if (A.empty()) continue;
      double r = eff_resistance(g.graph, K, A).value / pt_n * pt_b;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    band.ratio_lo.push_back(lo);
    band.ratio_hi.push_back(hi);
    band.lo = std::min(band.lo, lo);
    band.hi = std::max(band.hi, hi);
  }
  return band;
}

}  // namespace resdim
