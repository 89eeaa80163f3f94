#include "resdim/mixedcarpet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "resdim/common.hpp"
#include "resdim/resnet.hpp"

namespace resdim {

namespace {

void check_levels(int n, int m) {
  if (m < 0 || n < m) throw std::invalid_argument("corner graph needs 0 <= m <= n");
}

std::int64_t pow3(int k) { return ipow(3, k); }

// Corners of the level-m cells of h as exact plane points, in first-seen order.
std::vector<PlanePoint> level_corners(const PartitionHierarchy& h, int m) {
  std::vector<PlanePoint> out;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::int64_t hs = h.half_side(m);
  for (std::size_t i = 0; i < h.size(m); ++i) {
    const Cell& c = h.cell(m, i);
    for (int sx : {1, -1})
      for (int sy : {1, -1}) {
        std::int64_t lx = c.cx + sx * hs, ly = c.cy + sy * hs;
        if (seen.insert({lx, ly}).second) out.push_back(h.to_plane(lx, ly));
      }
  }
  return out;
}

bool same_point(const PlanePoint& a, const PlanePoint& b) { return a.x == b.x && a.y == b.y; }

// Up to k points of V_m; the corners p1 and p5 of Q come first.
std::vector<PlanePoint> sample_points(const PartitionHierarchy& h, int m, std::size_t k, std::mt19937_64& rng) {
  PlanePoint p1{Rational(1, 2), Rational(1, 2)}, p5{Rational(-1, 2), Rational(-1, 2)};
  std::vector<PlanePoint> rest;
  for (const auto& p : level_corners(h, m))
    if (!same_point(p, p1) && !same_point(p, p5)) rest.push_back(p);
  std::shuffle(rest.begin(), rest.end(), rng);
  std::vector<PlanePoint> out{p1, p5};
  for (std::size_t i = 0; i < rest.size() && out.size() < std::max<std::size_t>(k, 2); ++i) out.push_back(rest[i]);
  return out;
}

std::vector<std::int32_t> locate(const CornerGraph& g, const std::vector<PlanePoint>& pts) {
  std::vector<std::int32_t> out;
  for (const auto& p : pts) {
    auto v = g.find(p);
    if (v < 0) throw std::logic_error("sample point missing from a finer corner graph");
    out.push_back(v);
  }
  return out;
}

// Vertices of g inside phi_w(Q) and inside phi_w(A) for a cell with lattice center c and
// half side hs, both in g's lattice units.
std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> cell_sets(const CornerGraph& g, std::int64_t cx,
                                                                          std::int64_t cy, std::int64_t hs) {
  std::vector<std::int32_t> in, out;
  for (std::size_t v = 0; v < g.lattice.size(); ++v) {
    std::int64_t d = std::max(std::llabs(g.lattice[v][0] - cx), std::llabs(g.lattice[v][1] - cy));
    if (d <= hs) in.push_back(static_cast<std::int32_t>(v));
    if (d >= 3 * hs) out.push_back(static_cast<std::int32_t>(v));
  }
  return {in, out};
}

struct Acc {
  std::string id, relation;
  std::vector<double> per_n;  // max ratio among tests at exactly level n
  std::size_t samples = 0;

  void add(int n, double v) {
    if (per_n.size() <= static_cast<std::size_t>(n)) per_n.resize(static_cast<std::size_t>(n) + 1, 0.0);
    per_n[static_cast<std::size_t>(n)] = std::max(per_n[static_cast<std::size_t>(n)], v);
    ++samples;
  }
};

}  // namespace

CornerGraph corner_graph(const Schedule& s, int n, int m, std::int64_t cell_cap) {
  check_levels(n, m);
  Schedule shifted = s.shifted(m);
  HierarchyOptions opts;
  opts.cell_cap = cell_cap;
  PartitionHierarchy h(shifted, n - m, opts);
  return corner_graph_of(h, n - m);
}

int count_k1(const Schedule& s, int n, int m) {
  check_levels(n, m);
  int k = 0;
  for (int j = m + 1; j <= n; ++j) k += s.F(j);
  return k;
}

int count_k2(const Schedule& s, int n, int m) {
  check_levels(n, m);
  int k = 0;
  for (int j = m + 1; j < n; ++j) k += (s.F(j) == 1 && s.F(j + 1) == 0) ? 1 : 0;
  return k;
}

ScaleRow resistance_scales(const CornerGraph& g, const Schedule& s, int n, int m) {
  ScaleRow r;
  r.n = n;
  r.m = m;
  r.k1 = count_k1(s, n, m);
  r.k2 = count_k2(s, n, m);
  r.vertices = g.graph.num_vertices();
  r.edges = g.graph.num_edges();
  std::int64_t top = g.unit / 2;
  std::vector<std::int32_t> T, B;
  for (std::size_t v = 0; v < g.lattice.size(); ++v) {
    if (g.lattice[v][1] == top) T.push_back(static_cast<std::int32_t>(v));
    if (g.lattice[v][1] == -top) B.push_back(static_cast<std::int32_t>(v));
  }
  r.tb = eff_resistance(g.graph, T, B).value;
  r.pt = eff_resistance(g.graph, {g.find(top, top)}, {g.find(-top, -top)}).value;
  return r;
}

ScaleRow resistance_scales(const Schedule& s, int n, int m) {
  return resistance_scales(corner_graph(s, n, m), s, n, m);
}

std::string scales_csv(const std::vector<ScaleRow>& rows) {
  std::ostringstream os;
  os << "n,m,TB,Pt,k1,k2\n";
  for (const auto& r : rows)
    os << r.n << ',' << r.m << ',' << fmt(r.tb) << ',' << fmt(r.pt) << ',' << r.k1 << ',' << r.k2 << '\n';
  return os.str();
}

const ChainConstant& ChainReport::constant(const std::string& id) const {
  for (const auto& c : constants)
    if (c.id == id) return c;
  throw std::out_of_range("no chain constant " + id);
}

bool ChainReport::ok() const {
  if (tb_violations != 0) return false;
  for (const auto& c : constants)
    if (!c.finite || !c.stable) return false;
  return std::isfinite(band_lo) && band_lo > 0 && band_hi / band_lo <= band_bound;
}

nlohmann::json ChainReport::to_json() const {
  nlohmann::json j;
  j["n_max"] = n_max;
  j["pt"] = pt;
  j["tb_violations"] = tb_violations;
  j["band"] = {{"lo", band_lo}, {"hi", band_hi}, {"bound", band_bound}};
  for (const auto& c : constants)
    j["constants"].push_back({{"id", c.id},
                              {"relation", c.relation},
                              {"value", c.value},
                              {"by_level", c.by_level},
                              {"samples", c.samples},
                              {"finite", c.finite},
                              {"stable", c.stable}});
  for (const auto& r : scales)
    j["scales"].push_back({{"n", r.n}, {"m", r.m}, {"TB", r.tb}, {"Pt", r.pt}, {"k1", r.k1}, {"k2", r.k2}});
  j["ok"] = ok();
  return j;
}

ChainReport chain_check(const Schedule& s, int n_max, const ChainOptions& opt) {
  if (n_max < 1) throw std::invalid_argument("chain_check needs n_max >= 1");
  PartitionHierarchy h(s, n_max);
  std::mt19937_64 rng(opt.seed);
  const auto N = static_cast<std::size_t>(n_max) + 1;

  std::vector<std::vector<PlanePoint>> points(N);
  std::vector<std::vector<std::size_t>> cells(N);
  for (std::size_t m = 0; m < N; ++m) {
    points[m] = sample_points(h, static_cast<int>(m), opt.pair_points, rng);
    std::vector<std::size_t> all(h.size(static_cast<int>(m)));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(all.size(), opt.cells));
    cells[m] = all;
  }

  // Per level n: (Pt)_n, pair resistances of points[m] and set resistances for cells[m] in G_n,
  // and the scale rows (n, m) for m <= n.
  struct LevelResult {
    double pt = 0;
    std::vector<Eigen::MatrixXd> pairs;
    std::vector<std::vector<double>> sets;
    std::vector<ScaleRow> rows;
  };
  std::vector<LevelResult> res(N);
  parallel_for(N, [&](std::size_t n) {
    int ni = static_cast<int>(n);
    CornerGraph g = corner_graph(s, ni, 0);
    GroundedSolver solver(g.graph, 0);
    LevelResult& out = res[n];
    std::int64_t top = g.unit / 2;
    out.pt = solver.resistance(g.find(top, top), g.find(-top, -top));
    std::int64_t scale = pow3(n_max - ni);
    for (std::size_t m = 0; m <= n; ++m) {
      out.pairs.push_back(solver.resistance_matrix(locate(g, points[m])));
      std::vector<double> sets;
      std::int64_t hs = h.half_side(static_cast<int>(m)) / scale;
      for (auto w : cells[m]) {
        const Cell& c = h.cell(static_cast<int>(m), w);
        auto [in, far] = cell_sets(g, c.cx / scale, c.cy / scale, hs);
        sets.push_back(far.empty() ? std::nan("") : eff_resistance(g.graph, in, far).value);
      }
      out.sets.push_back(std::move(sets));
      out.rows.push_back(resistance_scales(s, ni, static_cast<int>(m)));
    }
  });

  ChainReport rep;
  rep.n_max = n_max;
  for (std::size_t n = 0; n < N; ++n) {
    rep.pt.push_back(res[n].pt);
    for (const auto& r : res[n].rows) rep.scales.push_back(r);
  }

  Acc c1a{"chain.pair.upper", "R_n(x,y) <= C R_m(x,y) (Pt)_{n,m}", {}, 0};
  Acc c1b{"chain.pair.lower", "C R_n(x,y) >= R_m(x,y) (TB)_{n,m}", {}, 0};
  Acc c2{"chain.tb", "C (TB)_{n,m} >= (Pt)_{n,m}", {}, 0};
  Acc c3{"chain.set", "C R_n(w-cell, w-far) >= R_m(w-cell, w-far) (TB)_{n,m}", {}, 0};
  Acc ceu{"chain.pt.upper", "(Pt)_n <= C (Pt)_m (Pt)_{n,m}", {}, 0};
  Acc cel{"chain.pt.lower", "(Pt)_m (TB)_{n,m} <= C (Pt)_n", {}, 0};
  rep.band_lo = INFINITY;
  rep.band_hi = 0;
  for (const auto& r : rep.scales) {
    auto n = static_cast<std::size_t>(r.n), m = static_cast<std::size_t>(r.m);
    if (r.pt < r.tb * (1 - 1e-10)) ++rep.tb_violations;
    c2.add(r.n, r.pt / r.tb);
    ceu.add(r.n, rep.pt[n] / (rep.pt[m] * r.pt));
    cel.add(r.n, rep.pt[m] * r.tb / rep.pt[n]);
    const auto& Rn = res[n].pairs[m];
    const auto& Rm = res[m].pairs[m];
    for (Eigen::Index i = 0; i < Rn.rows(); ++i)
      for (Eigen::Index j = i + 1; j < Rn.cols(); ++j) {
        c1a.add(r.n, Rn(i, j) / (Rm(i, j) * r.pt));
        c1b.add(r.n, Rm(i, j) * r.tb / Rn(i, j));
        double q = (Rn(i, j) / rep.pt[n]) / (Rm(i, j) / rep.pt[m]);
        rep.band_lo = std::min(rep.band_lo, q);
        rep.band_hi = std::max(rep.band_hi, q);
      }
    for (std::size_t w = 0; w < cells[m].size(); ++w) {
      double fine = res[n].sets[m][w], coarse = res[m].sets[m][w];
      if (std::isnan(fine) || std::isnan(coarse)) continue;
      c3.add(r.n, coarse * r.tb / fine);
    }
  }
  double cmax = 1;
  for (Acc* a : {&c1a, &c1b, &c2, &c3, &ceu, &cel}) {
    ChainConstant c;
    c.id = a->id;
    c.relation = a->relation;
    c.samples = a->samples;
    a->per_n.resize(N, 0.0);
    double run = 0;
    for (double v : a->per_n) {
      run = std::max(run, v);
      c.by_level.push_back(run);
    }
    c.value = run;
    c.finite = std::isfinite(run) && run > 0;
    c.stable = c.finite && c.by_level[N - 1] <= opt.stability_factor * c.by_level[N - 2];
    cmax = std::max(cmax, c.value);
    rep.constants.push_back(std::move(c));
  }
  rep.band_bound = std::pow(cmax, 5);
  return rep;
}

nlohmann::json EvresFit::to_json() const {
  nlohmann::json j;
  j["sc_pt"] = sc_pt;
  j["vicsek_pt"] = vicsek_pt;
  j["rho"] = rho;
  j["rho_change"] = rho_change;
  j["vicsek_deviation"] = vicsek_deviation;
  j["offset"] = offset;
  j["log_c"] = log_c;
  j["C_a"] = std::exp(log_ca);
  j["C_b"] = std::exp(log_cb);
  j["max_residual"] = max_residual;
  j["model_ok"] = model_ok;
  j["doubling_M"] = doubling_m;
  j["max_step"] = max_step;
  return j;
}

EvresFit evres_fit(const Schedule& s, int n_mixed, int n_pure) {
  if (n_pure < 3) throw std::invalid_argument("evres_fit needs at least 3 pure levels");
  if (n_mixed < 2) throw std::invalid_argument("evres_fit needs at least 2 schedule levels");
  EvresFit fit;
  Schedule sc = Schedule::pure(RuleTag::SC), vi = Schedule::pure(RuleTag::Vicsek);
  for (int n = 0; n <= n_pure; ++n) {
    fit.sc_pt.push_back(resistance_scales(sc, n, 0).pt);
    fit.vicsek_pt.push_back(resistance_scales(vi, n, 0).pt);
  }
  for (int n = 1; n <= n_pure; ++n)
    fit.vicsek_deviation = std::max(fit.vicsek_deviation, std::abs(fit.vicsek_pt[static_cast<std::size_t>(n)] /
                                                                       fit.vicsek_pt[static_cast<std::size_t>(n - 1)] -
                                                                   3.0));
  auto ratio = [&](int n) { return fit.sc_pt[static_cast<std::size_t>(n)] / fit.sc_pt[static_cast<std::size_t>(n - 1)]; };
  fit.rho = ratio(n_pure);
  fit.rho_change = std::abs(ratio(n_pure) - ratio(n_pure - 1)) / ratio(n_pure - 1);

  std::vector<double> k2s, es;
  for (int n = 1; n <= n_mixed; ++n)
    for (int m = 0; m < n; ++m) {
      ScaleRow r = resistance_scales(s, n, m);
      fit.rows.push_back(r);
      k2s.push_back(r.k2);
      es.push_back(std::log(r.pt) - r.k1 * std::log(fit.rho) - (n - m - r.k1) * std::log(3.0));
    }
  bool spread = std::any_of(k2s.begin(), k2s.end(), [&](double k) { return k != k2s.front(); });
  double mean_k = 0, mean_e = 0;
  for (std::size_t i = 0; i < es.size(); ++i) {
    mean_k += k2s[i];
    mean_e += es[i];
  }
  mean_k /= static_cast<double>(es.size());
  mean_e /= static_cast<double>(es.size());
  fit.log_c = spread ? ls_slope(k2s, es) : 0.0;
  fit.offset = mean_e - fit.log_c * mean_k;
  fit.log_ca = fit.log_cb = fit.log_c;
  bool first = true;
  for (std::size_t i = 0; i < es.size(); ++i) {
    double r = es[i] - fit.offset - fit.log_c * k2s[i];
    fit.residuals.push_back(r);
    fit.max_residual = std::max(fit.max_residual, std::abs(r));
    if (k2s[i] >= 1) {
      double v = (es[i] - fit.offset) / k2s[i];
      fit.log_ca = first ? v : std::min(fit.log_ca, v);
      fit.log_cb = first ? v : std::max(fit.log_cb, v);
      first = false;
    }
  }
  fit.model_ok = fit.max_residual <= fit.log_cb - fit.log_ca + 1e-12;

  std::vector<double> pt{1.0};
  for (const auto& r : fit.rows)
    if (r.m == 0) pt.push_back(r.pt);
  for (std::size_t n = 1; n < pt.size(); ++n) fit.max_step = std::max(fit.max_step, pt[n] / pt[n - 1]);
  for (int M = 1; M <= n_mixed && fit.doubling_m < 0; ++M) {
    bool all = true;
    for (int n = 0; n + M <= n_mixed; ++n)
      all = all && pt[static_cast<std::size_t>(n + M)] >= 2 * pt[static_cast<std::size_t>(n)];
    if (all) fit.doubling_m = M;
  }
  return fit;
}

DeltaResult delta_pair(const PartitionHierarchy& h, const PlanePoint& x, const PlanePoint& y) {
  if (same_point(x, y)) throw std::invalid_argument("delta_pair needs x != y");
  if (h.cells_containing(x, 0).empty() || h.cells_containing(y, 0).empty())
    throw std::invalid_argument("delta_pair point outside the root cell");
  Rational three_halves(3, 2);
  for (int n = 0; n <= h.depth(); ++n) {
    Rational side(2 * h.half_side(n), h.unit());
    for (auto w : h.cells_containing(x, n)) {
      PlanePoint c = h.center(n, w);
      Rational d = std::max((y.x - c.x).abs(), (y.y - c.y).abs());
      if (d >= three_halves * side) return {n, false};
    }
  }
  return {h.depth(), true};
}

namespace {
int bin_of(double t) {
  int e = 0;
  std::frexp(t, &e);
  return e - 1;  // t in [2^(e-1), 2^e)
}
}  // namespace

double QSDiagnostic::envelope_at(double t) const {
  if (bins.empty() || !(t > 0)) return std::nan("");
  int j = bin_of(t);
  double env = std::nan("");
  for (const auto& b : bins) {
    if (bin_of(b.t_lo) > j) break;
    env = b.envelope;
  }
  if (j > bin_of(bins.back().t_lo)) return std::nan("");
  return env;
}

std::string QSDiagnostic::csv() const {
  std::ostringstream os;
  os << "t,ratio\n";
  for (const auto& p : scatter) os << fmt(p[0]) << ',' << fmt(p[1]) << '\n';
  return os.str();
}

QSDiagnostic qs_diagnostic(const Schedule& s, int n, const QsOptions& opt) {
  if (opt.point_level < 0 || opt.point_level > n) throw std::invalid_argument("qs_diagnostic needs point_level <= n");
  PartitionHierarchy h(s, n);
  std::mt19937_64 rng(opt.seed);
  auto pts = sample_points(h, opt.point_level, opt.points, rng);
  if (pts.size() < 3) throw std::invalid_argument("qs_diagnostic needs at least three points");
  CornerGraph g = corner_graph(s, n, 0);
  GroundedSolver solver(g.graph, 0);
  Eigen::MatrixXd R = solver.resistance_matrix(locate(g, pts));
  QSDiagnostic q;
  q.n = n;
  std::int64_t top = g.unit / 2;
  q.pt = solver.resistance(g.find(top, top), g.find(-top, -top));
  R /= q.pt;
  std::vector<std::array<double, 2>> xy;
  for (const auto& p : pts) xy.push_back({p.x.to_double(), p.y.to_double()});
  auto dist = [&](std::size_t a, std::size_t b) { return std::hypot(xy[a][0] - xy[b][0], xy[a][1] - xy[b][1]); };
  std::map<int, QsBin> bins;
  const std::size_t k = pts.size();
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) {
      if (y == x) continue;
      for (std::size_t z = 0; z < k; ++z) {
        if (z == x) continue;
        double t = dist(x, y) / dist(x, z);
        double ratio = R(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) /
                       R(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z));
        q.scatter.push_back({t, ratio});
        QsBin& b = bins[bin_of(t)];
        ++b.count;
        b.max_ratio = std::max(b.max_ratio, ratio);
      }
    }
  double run = 0;
  for (auto& [j, b] : bins) {
    b.t_lo = std::ldexp(1.0, j);
    b.t_hi = std::ldexp(1.0, j + 1);
    run = std::max(run, b.max_ratio);
    b.envelope = run;
    q.bins.push_back(b);
  }
  q.finite = std::isfinite(run);
  return q;
}

double envelope_drift(const QSDiagnostic& a, const QSDiagnostic& b) {
  double drift = 0;
  for (const auto& ba : a.bins)
    for (const auto& bb : b.bins)
      if (ba.t_lo == bb.t_lo) drift = std::max(drift, std::abs(bb.envelope - ba.envelope) / ba.envelope);
  return drift;
}

bool DimReport::ok() const {
  for (const auto& c : checks)
    if (c.gating && !c.pass) return false;
  return true;
}

nlohmann::json DimReport::to_json() const {
  nlohmann::json j;
  j["inputs"] = {{"vicsek_window_ds", inputs.vicsek_window_ds}, {"sc_window_ds", inputs.sc_window_ds},
                 {"arc_lo", inputs.arc_lo},                     {"arc_hi", inputs.arc_hi},
                 {"nstar", inputs.nstar},                       {"d2_upper", inputs.d2_upper},
                 {"ds_upper", inputs.ds_upper},                 {"tol", inputs.tol}};
  j["vicsek_value"] = vicsek_value;
  j["threshold"] = threshold;
  j["sc_lower"] = sc_lower;
  j["mixed_asymptotic_ds"] = mixed_asymptotic;
  for (const auto& c : checks)
    j["checks"].push_back({{"id", c.id}, {"description", c.description}, {"pass", c.pass}, {"gating", c.gating}});
  j["ok"] = ok();
  return j;
}

DimReport gap_report(const GapInputs& in) {
  for (double v : {in.vicsek_window_ds, in.sc_window_ds, in.arc_lo, in.arc_hi, in.nstar, in.d2_upper, in.ds_upper})
    if (std::isnan(v)) throw std::invalid_argument("gap_report: missing upstream estimate");
  DimReport r;
  r.inputs = in;
  r.vicsek_value = 2 * std::log(5.0) / std::log(15.0);
  r.sc_lower = 1 + std::log(2.0) / std::log(3.0);
  r.checks.push_back({"gap.theory", "2log5/log15 < 1.5 < 1+log2/log3",
                      r.vicsek_value < r.threshold && r.threshold < r.sc_lower});
  r.checks.push_back({"gap.order", "Vicsek-window exponent < 1.5 < 1+log2/log3",
                      in.vicsek_window_ds < r.threshold && r.threshold < r.sc_lower});
  r.checks.push_back({"gap.vicsek_value", "Vicsek-window exponent within 0.1 of 2log5/log15",
                      std::abs(in.vicsek_window_ds - r.vicsek_value) <= 0.1});
  r.checks.push_back({"gap.sc_window", "SC-window upper spectral dimension < 2", in.sc_window_ds < 2});
  r.checks.push_back({"arc.lower", "critical-p bracket lower end >= 1", in.arc_lo >= 1 && in.arc_lo <= in.arc_hi});
  r.checks.push_back({"arc.vs_sc_lower", "critical-p bracket reaches 1+log2/log3", in.arc_hi >= r.sc_lower, false});
  r.checks.push_back({"ds2.le.ds", "p=2 spectral dimension <= heat estimate + tol", in.d2_upper <= in.ds_upper + in.tol});
  r.checks.push_back({"nstar.positive", "N_* > 1", in.nstar > 1});
  return r;
}

}  // namespace resdim
