#include "resdim/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "resdim/common.hpp"

namespace resdim {

const SubdivisionRule& SubdivisionRule::get(RuleTag tag) {
  static const SubdivisionRule sc{RuleTag::SC, {1, 2, 3, 4, 5, 6, 7, 8}};
  static const SubdivisionRule vicsek{RuleTag::Vicsek, {0, 1, 3, 5, 7}};
  return tag == RuleTag::SC ? sc : vicsek;
}

std::string SubdivisionRule::name() const { return tag == RuleTag::SC ? "sc" : "vicsek"; }

RuleTag parse_rule(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "sc") return RuleTag::SC;
  if (s == "vicsek") return RuleTag::Vicsek;
  throw std::invalid_argument("unknown rule tag '" + name + "'");
}

std::array<int, 2> fixed_point2(int letter) {
  static constexpr std::array<std::array<int, 2>, 9> p = {{
      {0, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}}};
  if (letter < 0 || letter > 8) throw std::invalid_argument("letter out of range");
  return p[static_cast<std::size_t>(letter)];
}

int schedule_F(int n) {
  if (n < 1) throw std::invalid_argument("schedule_F needs n >= 1");
  for (std::int64_t k = 1;; ++k) {
    std::int64_t lo = k * k * (k - 1), hi = k * k * k;
    if (n <= lo) return 0;
    if (n <= hi) return 1;
  }
}

Schedule Schedule::pure(RuleTag tag) {
  Schedule s;
  s.kind_ = Kind::Pure;
  s.pure_ = tag;
  return s;
}

Schedule Schedule::mixed() {
  Schedule s;
  s.kind_ = Kind::Mixed;
  return s;
}

Schedule Schedule::table(std::vector<int> F) {
  for (int f : F)
    if (f != 0 && f != 1) throw std::invalid_argument("schedule table entries must be 0 or 1");
  Schedule s;
  s.kind_ = Kind::Table;
  s.table_ = std::move(F);
  return s;
}

bool Schedule::defined(int level) const {
  if (level < 1) return false;
  if (kind_ == Kind::Table) return level + offset_ <= static_cast<int>(table_.size());
  return true;
}

RuleTag Schedule::rule(int level) const {
  if (!defined(level)) throw std::out_of_range("schedule undefined at level " + std::to_string(level));
  int n = level + offset_;
  switch (kind_) {
    case Kind::Pure:
      return pure_;
    case Kind::Mixed:
      return schedule_F(n) == 1 ? RuleTag::SC : RuleTag::Vicsek;
    case Kind::Table:
      return table_[static_cast<std::size_t>(n - 1)] == 1 ? RuleTag::SC : RuleTag::Vicsek;
  }
  return pure_;
}

Schedule Schedule::shifted(int m) const {
  if (m < 0) throw std::invalid_argument("negative schedule shift");
  Schedule s = *this;
  s.offset_ += m;
  return s;
}

std::string Schedule::name() const {
  std::string base;
  switch (kind_) {
    case Kind::Pure:
      base = SubdivisionRule::get(pure_).name();
      break;
    case Kind::Mixed:
      base = "mixed";
      break;
    case Kind::Table: {
      base = "table:";
      for (int f : table_) base += static_cast<char>('0' + f);
      break;
    }
  }
  if (offset_ != 0) base += "+" + std::to_string(offset_);
  return base;
}

namespace {

constexpr std::int64_t kDenseGridLimit = 16'000'000;

std::int64_t pow3(int e) { return ipow(3, e); }

}  // namespace

PartitionHierarchy::PartitionHierarchy(Schedule schedule, int depth, HierarchyOptions opts)
    : schedule_(std::move(schedule)), depth_(depth) {
  if (depth < 0) throw std::invalid_argument("negative depth");
  if (depth > 18) throw CapExceeded("depth " + std::to_string(depth) + " exceeds lattice range (18)");
  std::int64_t count = 1;
  for (int n = 1; n <= depth; ++n) {
    if (!schedule_.defined(n)) throw std::out_of_range("schedule undefined at level " + std::to_string(n));
    count *= schedule_.branching(n);
    if (count > opts.cell_cap)
      throw CapExceeded("level " + std::to_string(n) + " needs " + std::to_string(count) +
                        " cells, above cap " + std::to_string(opts.cell_cap));
  }
  unit_ = 2 * pow3(depth);
  levels_.resize(static_cast<std::size_t>(depth) + 1);
  levels_[0].push_back(Cell{});
  for (int n = 1; n <= depth; ++n) {
    const auto& rule = SubdivisionRule::get(schedule_.rule(n));
    std::int64_t side = 2 * pow3(depth - n);
    auto& parents = levels_[static_cast<std::size_t>(n - 1)];
    auto& kids = levels_[static_cast<std::size_t>(n)];
    kids.reserve(parents.size() * rule.alphabet.size());
    for (std::size_t p = 0; p < parents.size(); ++p) {
      parents[p].first_child = static_cast<std::int32_t>(kids.size());
      for (int letter : rule.alphabet) {
        auto off = fixed_point2(letter);
        Cell c;
        c.parent = static_cast<std::int32_t>(p);
        c.letter = static_cast<std::uint8_t>(letter);
        c.cx = parents[p].cx + off[0] * side;
        c.cy = parents[p].cy + off[1] * side;
        kids.push_back(c);
      }
    }
  }

  // Markers are determined by a fixed descent: Vicsek levels step into the center child,
  // SC levels step into child 2 or 6, whichever pulls the point back toward the middle.
  marker_offset_.assign(static_cast<std::size_t>(depth) + 1, {0, 0});
  for (int n = depth - 1; n >= 0; --n) {
    auto q = marker_offset_[static_cast<std::size_t>(n + 1)];
    if (schedule_.rule(n + 1) == RuleTag::SC) {
      std::int64_t side = 2 * pow3(depth - n - 1);
      q[1] += q[1] <= 0 ? side : -side;
    }
    marker_offset_[static_cast<std::size_t>(n)] = q;
  }

  dense_grid_.resize(levels_.size());
  sparse_grid_.resize(levels_.size());
  for (int n = 0; n <= depth; ++n) {
    std::int64_t g = pow3(n);
    const auto& cells = levels_[static_cast<std::size_t>(n)];
    bool dense = g * g <= kDenseGridLimit;
    if (dense) dense_grid_[static_cast<std::size_t>(n)].assign(static_cast<std::size_t>(g * g), -1);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      auto gp = grid_pos(n, i);
      std::int64_t key = gp[1] * g + gp[0];
      if (dense)
        dense_grid_[static_cast<std::size_t>(n)][static_cast<std::size_t>(key)] = static_cast<std::int32_t>(i);
      else
        sparse_grid_[static_cast<std::size_t>(n)][key] = static_cast<std::int32_t>(i);
    }
  }
}

void PartitionHierarchy::check_level(int level) const {
  if (level < 0 || level > depth_) throw std::out_of_range("level " + std::to_string(level) + " not built");
}

std::int64_t PartitionHierarchy::half_side(int level) const {
  check_level(level);
  return pow3(depth_ - level);
}

std::size_t PartitionHierarchy::size(int level) const {
  check_level(level);
  return levels_[static_cast<std::size_t>(level)].size();
}

const Cell& PartitionHierarchy::cell(int level, std::size_t i) const {
  check_level(level);
  return levels_[static_cast<std::size_t>(level)].at(i);
}

int PartitionHierarchy::branching(int level) const {
  check_level(level);
  if (level == 0) return 1;
  return schedule_.branching(level);
}

std::string PartitionHierarchy::address(int level, std::size_t i) const {
  std::string s(static_cast<std::size_t>(level), '0');
  for (int n = level; n > 0; --n) {
    const Cell& c = cell(n, i);
    s[static_cast<std::size_t>(n - 1)] = static_cast<char>('0' + c.letter);
    i = static_cast<std::size_t>(c.parent);
  }
  return s;
}

std::optional<std::size_t> PartitionHierarchy::find(const std::string& address) const {
  if (static_cast<int>(address.size()) > depth_) return std::nullopt;
  std::size_t i = 0;
  for (std::size_t k = 0; k < address.size(); ++k) {
    int n = static_cast<int>(k) + 1;
    int letter = address[k] - '0';
    const auto& alpha = SubdivisionRule::get(schedule_.rule(n)).alphabet;
    auto it = std::find(alpha.begin(), alpha.end(), letter);
    if (it == alpha.end()) return std::nullopt;
    i = static_cast<std::size_t>(cell(n - 1, i).first_child) + static_cast<std::size_t>(it - alpha.begin());
  }
  return i;
}

std::size_t PartitionHierarchy::ancestor(int level, std::size_t i, int target_level) const {
  if (target_level > level) throw std::invalid_argument("ancestor above the cell");
  for (int n = level; n > target_level; --n) i = static_cast<std::size_t>(cell(n, i).parent);
  return i;
}

std::array<std::int64_t, 2> PartitionHierarchy::marker_lattice(int level, std::size_t i) const {
  const Cell& c = cell(level, i);
  const auto& q = marker_offset_[static_cast<std::size_t>(level)];
  return {c.cx + q[0], c.cy + q[1]};
}

PlanePoint PartitionHierarchy::to_plane(std::int64_t lx, std::int64_t ly) const {
  return {Rational(lx, unit_), Rational(ly, unit_)};
}

PlanePoint PartitionHierarchy::center(int level, std::size_t i) const {
  const Cell& c = cell(level, i);
  return to_plane(c.cx, c.cy);
}

PlanePoint PartitionHierarchy::marker(int level, std::size_t i) const {
  auto m = marker_lattice(level, i);
  return to_plane(m[0], m[1]);
}

std::array<std::int64_t, 2> PartitionHierarchy::grid_pos(int level, std::size_t i) const {
  const Cell& c = cell(level, i);
  std::int64_t h = pow3(depth_ - level), U = pow3(depth_);
  return {(c.cx + U - h) / (2 * h), (c.cy + U - h) / (2 * h)};
}

std::optional<std::size_t> PartitionHierarchy::at_grid(int level, std::int64_t gx, std::int64_t gy) const {
  check_level(level);
  std::int64_t g = pow3(level);
  if (gx < 0 || gy < 0 || gx >= g || gy >= g) return std::nullopt;
  std::int64_t key = gy * g + gx;
  const auto& dense = dense_grid_[static_cast<std::size_t>(level)];
  if (!dense.empty()) {
    auto v = dense[static_cast<std::size_t>(key)];
    if (v < 0) return std::nullopt;
    return static_cast<std::size_t>(v);
  }
  const auto& sparse = sparse_grid_[static_cast<std::size_t>(level)];
  auto it = sparse.find(key);
  if (it == sparse.end()) return std::nullopt;
  return static_cast<std::size_t>(it->second);
}

namespace {

// Candidate grid indices along one axis for a lattice coordinate (possibly non-integer).
std::vector<std::int64_t> axis_candidates(const Rational& lat, std::int64_t U, std::int64_t h, std::int64_t g) {
  Rational t = (lat + Rational(U)) / Rational(2 * h);
  std::int64_t fl = t.num() >= 0 ? t.num() / t.den() : -((-t.num() + t.den() - 1) / t.den());
  std::vector<std::int64_t> out;
  if (t.den() == 1) {
    if (fl - 1 >= 0 && fl - 1 < g) out.push_back(fl - 1);
    if (fl >= 0 && fl < g) out.push_back(fl);
  } else if (fl >= 0 && fl < g) {
    out.push_back(fl);
  }
  return out;
}

}  // namespace

std::vector<std::size_t> PartitionHierarchy::cells_containing(const PlanePoint& p, int level) const {
  check_level(level);
  Rational lx = p.x * Rational(unit_), ly = p.y * Rational(unit_);
  std::int64_t U = pow3(depth_), h = pow3(depth_ - level), g = pow3(level);
  std::vector<std::size_t> out;
  for (auto gx : axis_candidates(lx, U, h, g))
    for (auto gy : axis_candidates(ly, U, h, g))
      if (auto c = at_grid(level, gx, gy)) out.push_back(*c);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> PartitionHierarchy::descendants(int level, std::size_t i, int target_level) const {
  check_level(target_level);
  std::size_t lo = i, hi = i + 1;
  for (int n = level; n < target_level; ++n) {
    const auto& cells = levels_[static_cast<std::size_t>(n)];
    std::size_t nlo = static_cast<std::size_t>(cells[lo].first_child);
    std::size_t nhi = static_cast<std::size_t>(cells[hi - 1].first_child) + static_cast<std::size_t>(branching(n + 1));
    lo = nlo;
    hi = nhi;
  }
  std::vector<std::size_t> out(hi - lo);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lo + k;
  return out;
}

std::size_t AdjacencyGraph::num_edges() const {
  std::size_t s = 0;
  for (const auto& a : adj) s += a.size();
  return s / 2;
}

int AdjacencyGraph::max_degree() const {
  std::size_t m = 0;
  for (const auto& a : adj) m = std::max(m, a.size());
  return static_cast<int>(m);
}

std::vector<int> AdjacencyGraph::distances(const std::vector<std::size_t>& sources, int max_dist) const {
  std::vector<int> d(adj.size(), -1);
  std::deque<std::size_t> q;
  for (auto s : sources) {
    if (d[s] < 0) {
      d[s] = 0;
      q.push_back(s);
    }
  }
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    if (d[u] >= max_dist) continue;
    for (auto v : adj[u]) {
      if (d[static_cast<std::size_t>(v)] < 0) {
        d[static_cast<std::size_t>(v)] = d[u] + 1;
        q.push_back(static_cast<std::size_t>(v));
      }
    }
  }
  return d;
}

// Closed same-level squares meet exactly when their grid positions differ by at most one
// in each coordinate, so neighbor search over the 3x3 block is an exact intersection test.
AdjacencyGraph adjacency(const PartitionHierarchy& h, int n) {
  AdjacencyGraph g;
  g.level = n;
  std::size_t N = h.size(n);
  g.adj.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto gp = h.grid_pos(n, i);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        if (auto j = h.at_grid(n, gp[0] + dx, gp[1] + dy)) g.adj[i].push_back(static_cast<std::int32_t>(*j));
      }
    std::sort(g.adj[i].begin(), g.adj[i].end());
  }
  return g;
}

namespace {

bool inside_root(const PlanePoint& p) {
  Rational half(1, 2);
  return p.x.abs() <= half && p.y.abs() <= half;
}

// Whether some level-n cell containing x lies within chain distance m of one containing y.
bool chained(const PartitionHierarchy& h, int n, const std::vector<std::size_t>& wx,
             const std::vector<std::size_t>& wy, int m) {
  std::unordered_set<std::size_t> target(wy.begin(), wy.end());
  std::unordered_set<std::size_t> seen(wx.begin(), wx.end());
  std::vector<std::size_t> frontier(wx.begin(), wx.end());
  for (auto c : frontier)
    if (target.count(c)) return true;
  for (int step = 0; step < m; ++step) {
    std::vector<std::size_t> next;
    for (auto c : frontier) {
      auto gp = h.grid_pos(n, c);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          auto j = h.at_grid(n, gp[0] + dx, gp[1] + dy);
          if (!j || seen.count(*j)) continue;
          if (target.count(*j)) return true;
          seen.insert(*j);
          next.push_back(*j);
        }
    }
    frontier.swap(next);
  }
  return false;
}

}  // namespace

DeltaResult delta_level(const PartitionHierarchy& h, const PlanePoint& x, const PlanePoint& y, int m) {
  if (x.x == y.x && x.y == y.y) throw std::invalid_argument("delta_level needs x != y");
  if (!inside_root(x) || !inside_root(y)) throw std::invalid_argument("point outside the root cell");
  if (m < 0) throw std::invalid_argument("negative chain length");
  DeltaResult r;
  for (int n = 0; n <= h.depth(); ++n) {
    auto wx = h.cells_containing(x, n);
    auto wy = h.cells_containing(y, n);
    if (wx.empty() || wy.empty()) break;
    if (chained(h, n, wx, wy, m)) r.value = n;
  }
  r.clipped = r.value == h.depth();
  return r;
}

FrameworkReport validate_framework(const PartitionHierarchy& h, int depth, std::size_t band_samples,
                                   std::uint64_t seed) {
  FrameworkReport rep;
  rep.depth = depth;
  if (depth <= 0) return rep;
  if (depth > h.depth()) throw std::out_of_range("validation depth exceeds built depth");

  // Diameter of each prefractal cell from the bounding box of its deepest descendants.
  std::vector<std::array<std::int64_t, 4>> box(h.size(depth));
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Cell& c = h.cell(depth, i);
    std::int64_t s = h.half_side(depth);
    box[i] = {c.cx - s, c.cx + s, c.cy - s, c.cy + s};
  }
  rep.diam_ratio_min = INFINITY;
  rep.diam_ratio_max = 0;
  for (int n = depth; n >= 0; --n) {
    for (const auto& b : box) {
      double dx = static_cast<double>(b[1] - b[0]) / static_cast<double>(h.unit());
      double dy = static_cast<double>(b[3] - b[2]) / static_cast<double>(h.unit());
      double ratio = std::hypot(dx, dy) * std::pow(3.0, n);
      rep.diam_ratio_min = std::min(rep.diam_ratio_min, ratio);
      rep.diam_ratio_max = std::max(rep.diam_ratio_max, ratio);
    }
    if (n == 0) break;
    std::vector<std::array<std::int64_t, 4>> up(h.size(n - 1),
                                                 {INT64_MAX, INT64_MIN, INT64_MAX, INT64_MIN});
    for (std::size_t i = 0; i < box.size(); ++i) {
      auto& u = up[static_cast<std::size_t>(h.cell(n, i).parent)];
      u[0] = std::min(u[0], box[i][0]);
      u[1] = std::max(u[1], box[i][1]);
      u[2] = std::min(u[2], box[i][2]);
      u[3] = std::max(u[3], box[i][3]);
    }
    box.swap(up);
  }
  if (rep.diam_ratio_max - rep.diam_ratio_min > 1e-12 * rep.diam_ratio_max)
    rep.violations.push_back("diameter ratio not constant across cells");

  // Inner ball: the marker keeps distance >= side/6 from the cell boundary; nesting is
  // checked by locating each marker again among the children.
  for (int n = 0; n <= depth; ++n) {
    std::int64_t s = h.half_side(n);
    for (std::size_t i = 0; i < h.size(n); ++i) {
      const Cell& c = h.cell(n, i);
      auto m = h.marker_lattice(n, i);
      std::int64_t gap = s - std::max(std::llabs(m[0] - c.cx), std::llabs(m[1] - c.cy));
      if (6 * gap < 2 * s) {
        rep.violations.push_back("inner ball fails at level " + std::to_string(n) + " cell " + h.address(n, i));
        break;
      }
      if (n < depth) {
        bool nested = false;
        for (auto k : h.descendants(n, i, n + 1))
          if (h.marker_lattice(n + 1, k) == m) nested = true;
        if (!nested) {
          rep.violations.push_back("marker nesting fails at level " + std::to_string(n));
          break;
        }
      }
    }
  }

  for (int n = 1; n <= depth; ++n) rep.l_star = std::max(rep.l_star, adjacency(h, n).max_degree());

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, h.size(depth) - 1);
  rep.band_lo = INFINITY;
  rep.band_hi = 0;
  std::size_t attempts = 0;
  while (rep.band_pairs < band_samples && attempts < 20 * band_samples + 100) {
    ++attempts;
    auto a = pick(rng), b = pick(rng);
    if (a == b) continue;
    auto x = h.marker(depth, a), y = h.marker(depth, b);
    auto d = delta_level(h, x, y, rep.m_star);
    if (d.clipped) continue;
    double rho = std::hypot((x.x - y.x).to_double(), (x.y - y.y).to_double());
    double ratio = rho * std::pow(3.0, d.value);
    rep.band_lo = std::min(rep.band_lo, ratio);
    rep.band_hi = std::max(rep.band_hi, ratio);
    ++rep.band_pairs;
  }
  if (rep.band_pairs > 0 && !(std::isfinite(rep.band_hi) && rep.band_lo > 0))
    rep.violations.push_back("resistance band not finite");
  return rep;
}

NStarEstimate nstar_estimate(const Schedule& s, int kmax, int horizon) {
  if (kmax < 1) throw std::invalid_argument("nstar_estimate needs kmax >= 1");
  if (horizon < 0) throw std::invalid_argument("negative horizon");
  NStarEstimate e;
  e.horizon = horizon;
  for (int k = 1; k <= kmax; ++k) {
    double best = 0;
    for (int n = 0; n <= horizon; ++n) {
      if (!s.defined(n + k)) break;
      double prod = 1;
      for (int j = n + 1; j <= n + k; ++j) prod *= s.branching(j);
      best = std::max(best, prod);
    }
    if (best == 0) throw std::out_of_range("schedule undefined for window length " + std::to_string(k));
    e.sup_counts.push_back(best);
    e.roots.push_back(std::pow(best, 1.0 / k));
  }
  e.nstar = *std::min_element(e.roots.begin(), e.roots.end());
  for (int j = 1; j <= kmax; ++j)
    for (int k = 1; j + k <= kmax; ++k)
      if (e.sup_counts[static_cast<std::size_t>(j + k - 1)] >
          e.sup_counts[static_cast<std::size_t>(j - 1)] * e.sup_counts[static_cast<std::size_t>(k - 1)] * (1 + 1e-12))
        e.submultiplicative = false;
  return e;
}

nlohmann::json hierarchy_json(const PartitionHierarchy& h, int max_level) {
  using nlohmann::json;
  json out;
  out["schedule"] = h.schedule().name();
  out["depth"] = h.depth();
  json levels = json::array();
  for (int n = 0; n <= std::min(max_level, h.depth()); ++n) {
    json cells = json::array();
    Rational half(h.half_side(n), h.unit());
    for (std::size_t i = 0; i < h.size(n); ++i) {
      auto c = h.center(n, i);
      auto m = h.marker(n, i);
      cells.push_back({{"address", h.address(n, i)},
                       {"center", {c.x.str(), c.y.str()}},
                       {"half_side", half.str()},
                       {"marker", {m.x.str(), m.y.str()}}});
    }
    levels.push_back({{"level", n}, {"cells", cells}});
  }
  out["levels"] = levels;
  return out;
}

std::string edges_csv(const PartitionHierarchy& h, int max_level) {
  std::ostringstream os;
  os << "level,w,v\n";
  for (int n = 1; n <= std::min(max_level, h.depth()); ++n) {
    auto g = adjacency(h, n);
    for (std::size_t i = 0; i < g.adj.size(); ++i)
      for (auto j : g.adj[i])
        if (static_cast<std::size_t>(j) > i)
          os << n << ',' << h.address(n, i) << ',' << h.address(n, static_cast<std::size_t>(j)) << '\n';
  }
  return os.str();
}

}  // namespace resdim
