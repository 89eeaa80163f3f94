#include "resdim/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "resdim/common.hpp"
#include "resdim/resnet.hpp"

namespace resdim {

namespace {

std::size_t child_begin(const PartitionHierarchy& h, int level, std::size_t i) {
  return static_cast<std::size_t>(h.cell(level, i).first_child);
}

HierMeasure with_doubles(HierMeasure m) {
  m.mass_d.resize(m.mass.size());
  for (std::size_t n = 0; n < m.mass.size(); ++n) {
    m.mass_d[n].resize(m.mass[n].size());
    for (std::size_t i = 0; i < m.mass[n].size(); ++i) m.mass_d[n][i] = m.mass[n][i].to_double();
  }
  return m;
}

struct Square {
  double cx, cy, hs;
};

Square square_of(const PartitionHierarchy& h, int level, std::size_t i) {
  const Cell& c = h.cell(level, i);
  double u = static_cast<double>(h.unit());
  return {static_cast<double>(c.cx) / u, static_cast<double>(c.cy) / u, static_cast<double>(h.half_side(level)) / u};
}

// Random points of K: corners of random cells at `level`.
std::vector<std::array<double, 2>> sample_corners(const PartitionHierarchy& h, int level, std::size_t count,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cell(0, h.size(level) - 1);
  std::uniform_int_distribution<int> corner(0, 3);
  std::vector<std::array<double, 2>> out;
  for (std::size_t s = 0; s < count; ++s) {
    auto q = square_of(h, level, cell(rng));
    int c = corner(rng);
    out.push_back({q.cx + ((c & 1) ? q.hs : -q.hs), q.cy + ((c & 2) ? q.hs : -q.hs)});
  }
  return out;
}

void ball_rec(const PartitionHierarchy& h, const HierMeasure& m, int level, std::size_t i, double x, double y,
              double r, int resolution, BallMass& out) {
  auto q = square_of(h, level, i);
  double ax = std::abs(x - q.cx), ay = std::abs(y - q.cy);
  double nx = std::max(ax - q.hs, 0.0), ny = std::max(ay - q.hs, 0.0);
  const double slack = 1e-12;
  if (nx * nx + ny * ny > r * r * (1 + slack)) return;
  double fx = ax + q.hs, fy = ay + q.hs;
  double w = m.mass_d[static_cast<std::size_t>(level)][i];
  if (fx * fx + fy * fy <= r * r * (1 - slack)) {
    out.lo += w;
    out.hi += w;
    return;
  }
  if (level == resolution) {
    out.hi += w;
    return;
  }
  std::size_t b = child_begin(h, level, i);
  for (int c = 0; c < h.branching(level + 1); ++c)
    ball_rec(h, m, level + 1, b + static_cast<std::size_t>(c), x, y, r, resolution, out);
}

}  // namespace

WeightRule uniform_rule() {
  return [](int, std::size_t, int, int siblings) { return Rational(1, siblings); };
}

HierMeasure hier_measure(const PartitionHierarchy& h, const WeightRule& rule) {
  HierMeasure m;
  m.depth = h.depth();
  m.mass.resize(static_cast<std::size_t>(h.depth()) + 1);
  m.mass[0] = {Rational(1)};
  for (int n = 1; n <= h.depth(); ++n) {
    auto& cur = m.mass[static_cast<std::size_t>(n)];
    cur.resize(h.size(n));
    int b = h.branching(n);
    for (std::size_t p = 0; p < h.size(n - 1); ++p) {
      std::size_t first = child_begin(h, n - 1, p);
      Rational sum(0);
      for (int c = 0; c < b; ++c) {
        std::size_t ci = first + static_cast<std::size_t>(c);
        Rational w = rule(n, p, h.cell(n, ci).letter, b);
        if (w <= Rational(0)) throw std::invalid_argument("weights must be positive");
        sum += w;
        cur[ci] = m.mass[static_cast<std::size_t>(n - 1)][p] * w;
      }
      if (sum != Rational(1))
        throw std::invalid_argument("child weights of level-" + std::to_string(n - 1) + " cell sum to " + sum.str());
    }
  }
  return with_doubles(std::move(m));
}

BallMass ball_mass(const PartitionHierarchy& h, const HierMeasure& m, double x, double y, double r, int resolution) {
  if (resolution < 0 || resolution > m.depth) throw std::out_of_range("resolution beyond the measure depth");
  if (!(r >= 0)) throw std::invalid_argument("negative radius");
  BallMass out;
  ball_rec(h, m, 0, 0, x, y, r, resolution, out);
  return out;
}

DoublingReport doubling_check(const PartitionHierarchy& h, const HierMeasure& m, std::size_t samples, int levels,
                              std::uint64_t seed) {
  if (levels < 0 || levels + 2 > m.depth) throw std::invalid_argument("doubling_check needs levels + 2 <= depth");
  const int res = m.depth;
  auto centers = sample_corners(h, res, samples, seed);
  const std::vector<double> gammas = {2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64};
  const double finest = std::pow(3.0, -(res - 1));

  struct Local {
    double ratio = 0, upper = 0, wr = 0;
    std::vector<bool> gamma_ok;
  };
  std::vector<Local> local(centers.size());
  parallel_for(centers.size(), [&](std::size_t s) {
    auto [x, y] = centers[s];
    Local& L = local[s];
    L.gamma_ok.assign(gammas.size(), true);
    for (int j = 0; j <= levels; ++j) {
      double r = std::pow(3.0, -j);
      auto v = ball_mass(h, m, x, y, r, res);
      auto v2 = ball_mass(h, m, x, y, 2 * r, res);
      double ratio = v2.mid() / v.mid();
      if (ratio > L.ratio) {
        L.ratio = ratio;
        L.wr = r;
      }
      L.upper = std::max(L.upper, v.lo > 0 ? v2.hi / v.lo : INFINITY);
      for (std::size_t g = 0; g < gammas.size(); ++g) {
        if (r / gammas[g] < finest) continue;
        if (ball_mass(h, m, x, y, r / gammas[g], res).mid() > 0.5 * v.mid()) L.gamma_ok[g] = false;
      }
    }
  });

  DoublingReport rep;
  rep.samples = centers.size();
  std::vector<bool> ok(gammas.size(), true);
  for (std::size_t s = 0; s < local.size(); ++s) {
    if (local[s].ratio > rep.ratio) {
      rep.ratio = local[s].ratio;
      rep.witness_x = centers[s];
      rep.witness_r = local[s].wr;
    }
    rep.ratio_upper = std::max(rep.ratio_upper, local[s].upper);
    for (std::size_t g = 0; g < gammas.size(); ++g) ok[g] = ok[g] && local[s].gamma_ok[g];
  }
  for (std::size_t g = 0; g < gammas.size(); ++g)
    if (ok[g]) {
      rep.gamma1 = gammas[g];
      break;
    }
  rep.finite = std::isfinite(rep.ratio) && std::isfinite(rep.ratio_upper);
  return rep;
}

PsiMeasure psi_measure(const PartitionHierarchy& h, const Rational& nstar, const Rational& eps, int k) {
  if (k < 1) throw std::invalid_argument("psi_measure needs k >= 1");
  if (eps <= Rational(0)) throw std::invalid_argument("psi_measure needs eps > 0");
  const int coarse = h.depth() / k;
  if (coarse < 1) throw std::invalid_argument("hierarchy too shallow for the k-step tree");
  PsiMeasure out;
  out.k = k;
  out.base = (nstar + eps).pow(k);
  HierMeasure& m = out.measure;
  m.step = k;
  m.depth = coarse * k;
  m.mass.resize(static_cast<std::size_t>(m.depth) + 1);
  m.mass[0] = {Rational(1)};
  out.interior.resize(static_cast<std::size_t>(coarse));
  for (int c = 0; c < coarse; ++c) {
    int L = c * k;
    auto& next = m.mass[static_cast<std::size_t>(L + k)];
    next.assign(h.size(L + k), Rational(0));
    auto& chosen = out.interior[static_cast<std::size_t>(c)];
    chosen.resize(h.size(L));
    for (std::size_t i = 0; i < h.size(L); ++i) {
      auto desc = h.descendants(L, i, L + k);
      Rational count(static_cast<std::int64_t>(desc.size()));
      if (out.base < count)
        throw std::invalid_argument("(nstar + eps)^k = " + out.base.str() + " is below the descendant count " +
                                    count.str());
      const Cell& w = h.cell(L, i);
      std::int64_t hw = h.half_side(L), hv = h.half_side(L + k);
      auto inside = std::find_if(desc.begin(), desc.end(), [&](std::size_t v) {
        const Cell& cv = h.cell(L + k, v);
        return std::llabs(cv.cx - w.cx) + hv < hw && std::llabs(cv.cy - w.cy) + hv < hw;
      });
      if (inside == desc.end())
        throw std::invalid_argument("no interior descendant " + std::to_string(k) + " levels below cell " +
                                    h.address(L, i));
      chosen[i] = *inside;
      Rational small = Rational(1) / out.base;
      Rational big = Rational(1) - (count - Rational(1)) / out.base;
      const Rational& pw = m.mass[static_cast<std::size_t>(L)][i];
      for (std::size_t v : desc) next[v] = pw * (v == *inside ? big : small);
    }
  }
  // Intermediate levels carry the mass of their descendants on the next coarse level.
  for (int n = m.depth - 1; n >= 0; --n) {
    if (n % k == 0) continue;
    auto& cur = m.mass[static_cast<std::size_t>(n)];
    cur.assign(h.size(n), Rational(0));
    int up = (n / k + 1) * k;
    for (std::size_t i = 0; i < h.size(n); ++i)
      for (std::size_t v : h.descendants(n, i, up)) cur[i] += m.mass[static_cast<std::size_t>(up)][v];
  }
  Rational factor = out.base - Rational(1);
  for (int c = 1; c <= coarse; ++c) {
    int L = c * k;
    auto adj = adjacency(h, L);
    const auto& psi = m.mass[static_cast<std::size_t>(L)];
    for (std::size_t w = 0; w < adj.adj.size(); ++w)
      for (auto u : adj.adj[w]) {
        ++out.comparability_pairs;
        if (factor * psi[w] < psi[static_cast<std::size_t>(u)]) ++out.comparability_violations;
      }
  }
  m = with_doubles(std::move(m));
  return out;
}

GrowthReport volume_growth(const PartitionHierarchy& h, const HierMeasure& m, int jmax, double base_per_level,
                           std::size_t samples, std::uint64_t seed) {
  const int nmax = m.depth - 2;
  if (jmax < 2 || jmax > nmax) throw std::invalid_argument("volume_growth needs 2 <= jmax <= depth - 2");
  auto centers = sample_corners(h, m.depth, samples, seed);
  std::vector<std::vector<double>> vols(centers.size());
  parallel_for(centers.size(), [&](std::size_t s) {
    for (int n = 0; n <= nmax; ++n)
      vols[s].push_back(ball_mass(h, m, centers[s][0], centers[s][1], std::pow(3.0, -n), m.depth).mid());
  });
  GrowthReport rep;
  rep.sup_ratio.assign(static_cast<std::size_t>(jmax), 0.0);
  for (const auto& v : vols)
    for (int j = 1; j <= jmax; ++j)
      for (int n = 0; n + j <= nmax; ++n)
        rep.sup_ratio[static_cast<std::size_t>(j - 1)] =
            std::max(rep.sup_ratio[static_cast<std::size_t>(j - 1)],
                     v[static_cast<std::size_t>(n)] / v[static_cast<std::size_t>(n + j)]);
  std::vector<double> xs, ys;
  for (int j = 1; j <= jmax; ++j) {
    double s = rep.sup_ratio[static_cast<std::size_t>(j - 1)];
    xs.push_back(j);
    ys.push_back(std::log(s));
    rep.constant = std::max(rep.constant, s / std::pow(base_per_level, j));
  }
  rep.exponent = ls_slope(xs, ys);
  return rep;
}

double cell_ratio_sup(const HierMeasure& m, const PartitionHierarchy& h, int k, int n_lo, int n_hi) {
  if (k < 1 || n_lo < 0 || n_lo > n_hi || n_hi + k > m.depth) throw std::invalid_argument("cell_ratio_sup window");
  double best = 0;
  for (int n = n_lo; n <= n_hi; ++n) {
    std::vector<double> least = m.mass_d[static_cast<std::size_t>(n + k)];
    for (int l = n + k - 1; l >= n; --l) {
      std::vector<double> up(h.size(l), INFINITY);
      for (std::size_t i = 0; i < h.size(l); ++i) {
        std::size_t b = child_begin(h, l, i);
        for (int c = 0; c < h.branching(l + 1); ++c) up[i] = std::min(up[i], least[b + static_cast<std::size_t>(c)]);
      }
      least = std::move(up);
    }
    for (std::size_t i = 0; i < least.size(); ++i)
      best = std::max(best, m.mass_d[static_cast<std::size_t>(n)][i] / least[i]);
  }
  return best;
}

nlohmann::json OldsVolume::to_json() const {
  return {{"f", f},
          {"g", g},
          {"rate", rate},
          {"exponent", exponent},
          {"upper", upper},
          {"pointwise_lo", pointwise_lo},
          {"pointwise_hi", pointwise_hi},
          {"degenerate", degenerate}};
}

OldsVolume olds_volume(const PartitionHierarchy& h, const HierMeasure& m, const std::vector<double>& zeta_r,
                       const VolumeWindow& w) {
  if (w.n_lo < 0 || w.n_hi <= w.n_lo) throw std::invalid_argument("olds_volume needs n_lo < n_hi");
  if (w.n_hi > m.depth) throw std::invalid_argument("window passes the measure depth");
  if (static_cast<int>(zeta_r.size()) < w.n_hi) throw std::invalid_argument("zeta table shorter than the window");
  for (int j = w.n_lo; j < w.n_hi; ++j)
    if (!(zeta_r[static_cast<std::size_t>(j)] > 0 && zeta_r[static_cast<std::size_t>(j)] < 1))
      throw std::invalid_argument("resistance scales must lie in (0,1)");
  auto log_r = [&](int n, int k) {
    double s = 0;
    for (int j = n + 1; j <= n + k; ++j) s -= std::log(zeta_r[static_cast<std::size_t>(j - 1)]);
    return s;
  };
  OldsVolume out;
  const int K = w.n_hi - w.n_lo;
  const int kmin = std::clamp(w.kmin, 1, K);
  out.degenerate = K - kmin + 1 < 2;
  out.rate = out.exponent = INFINITY;
  for (int k = 1; k <= K; ++k) {
    double fk = 0, gk = 0;
    for (int n = w.n_lo; n + k <= w.n_hi; ++n) {
      double lv = std::log(cell_ratio_sup(m, h, k, n, n));
      fk = std::max(fk, lv);
      gk = std::max(gk, lv / log_r(n, k));
    }
    out.f.push_back(fk);
    out.g.push_back(gk);
    if (k >= kmin) {
      out.rate = std::min(out.rate, fk / k);
      out.exponent = std::min(out.exponent, gk);
    }
  }
  out.upper = out.exponent > 0 ? 2 / (1 + 1 / out.exponent) : 0;
  out.pointwise_lo = INFINITY;
  out.pointwise_hi = 0;
  const double lr = log_r(w.n_lo, K);
  for (std::size_t v = 0; v < h.size(w.n_hi); ++v) {
    std::size_t a = h.ancestor(w.n_hi, v, w.n_lo);
    double e = std::log(m.mass_d[static_cast<std::size_t>(w.n_lo)][a] / m.mass_d[static_cast<std::size_t>(w.n_hi)][v]) / lr;
    double d = e > 0 ? 2 / (1 + 1 / e) : 0;
    out.pointwise_lo = std::min(out.pointwise_lo, d);
    out.pointwise_hi = std::max(out.pointwise_hi, d);
  }
  return out;
}

FeketeLimit fekete_limit(const std::vector<double>& ts, const std::vector<double>& fs) {
  if (ts.empty() || ts.size() != fs.size()) throw std::invalid_argument("fekete_limit needs matching nonempty grids");
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (!(ts[i] > 0) || (i > 0 && !(ts[i] > ts[i - 1]))) throw std::invalid_argument("grid must be positive increasing");
  FeketeLimit out;
  out.limit = INFINITY;
  for (std::size_t i = 0; i < ts.size(); ++i) out.limit = std::min(out.limit, fs[i] / ts[i]);
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i; j < ts.size(); ++j)
      for (std::size_t l = j; l < ts.size(); ++l) {
        double t = ts[i] + ts[j];
        if (std::abs(ts[l] - t) > 1e-12 * t) continue;
        double scale = std::max({std::abs(fs[i]), std::abs(fs[j]), std::abs(fs[l]), 1.0});
        if (fs[l] > fs[i] + fs[j] + 1e-12 * scale) ++out.violations;
      }
  out.subadditive = out.violations == 0;
  return out;
}

std::vector<double> vertex_masses(const CornerGraph& cg, const HierMeasure& m) {
  if (cg.level > m.depth) throw std::out_of_range("corner graph deeper than the measure");
  const auto& mass = m.mass_d.at(static_cast<std::size_t>(cg.level));
  if (mass.size() != cg.cell_corners.size()) throw std::invalid_argument("measure and corner graph disagree on cells");
  std::vector<double> out(cg.graph.num_vertices(), 0.0);
  for (std::size_t i = 0; i < mass.size(); ++i)
    for (auto v : cg.cell_corners[i]) out[static_cast<std::size_t>(v)] += 0.25 * mass[i];
  return out;
}

std::string HProfile::csv() const {
  std::ostringstream os;
  os << "x_id,r,V_lo,V_hi,olR,h_lo,h_hi\n";
  for (const auto& r : rows)
    os << x << ',' << fmt(r.r) << ',' << fmt(r.v_lo) << ',' << fmt(r.v_hi) << ',' << fmt(r.ol_r) << ','
       << fmt(r.h_lo) << ',' << fmt(r.h_hi) << '\n';
  return os.str();
}

HProfile h_profile(const CornerGraph& cg, const HierMeasure& m, std::int32_t x, double renorm, std::size_t cap) {
  const std::size_t n = cg.graph.num_vertices();
  if (n > cap) throw CapExceeded("h_profile: " + std::to_string(n) + " vertices exceed the cap " + std::to_string(cap));
  if (x < 0 || static_cast<std::size_t>(x) >= n) throw std::out_of_range("h_profile center");
  if (!(renorm > 0)) throw std::invalid_argument("renormalizer must be positive");
  Eigen::MatrixXd R = dense_resistance_matrix(cg.graph);
  std::vector<double> rx(n);
  for (std::size_t y = 0; y < n; ++y) rx[y] = R(x, static_cast<Eigen::Index>(y)) / renorm;
  rx[static_cast<std::size_t>(x)] = 0;
  auto vm = vertex_masses(cg, m);
  const auto& cm = m.mass_d.at(static_cast<std::size_t>(cg.level));

  auto row_at = [&](double r) {
    HRow row;
    row.r = r;
    double lim = r * (1 + 1e-12);
    for (std::size_t y = 0; y < n; ++y)
      if (rx[y] <= lim) {
        row.v += vm[y];
        row.ol_r = std::max(row.ol_r, rx[y]);
      }
    for (std::size_t i = 0; i < cm.size(); ++i) {
      int in = 0;
      for (auto v : cg.cell_corners[i]) in += rx[static_cast<std::size_t>(v)] <= lim;
      if (in == 4) row.v_lo += cm[i];
      if (in > 0) row.v_hi += cm[i];
    }
    row.h = row.v * row.ol_r;
    row.h_lo = row.v_lo * row.ol_r;
    row.h_hi = row.v_hi * row.ol_r;
    return row;
  };

  HProfile out;
  out.x = x;
  double rmin = INFINITY, rmax = 0;
  for (double r : rx)
    if (r > 0) {
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
  if (!std::isfinite(rmin)) return out;
  for (double r = rmin;; r *= 2) {
    out.rows.push_back(row_at(std::min(r, rmax)));
    if (r >= rmax) break;
  }
  for (std::size_t i = 0; i + 1 < out.rows.size(); ++i)
    if (out.rows[i].h > 0) out.h_doubling = std::max(out.h_doubling, row_at(2 * out.rows[i].r).h / out.rows[i].h);
  for (double g = 2; g <= 1024; g *= 2) {
    bool ok = std::all_of(out.rows.begin(), out.rows.end(),
                          [&](const HRow& row) { return row_at(row.r / g).h <= 0.5 * row.h * (1 + 1e-12); });
    if (ok) {
      out.gamma2 = g;
      break;
    }
  }
  return out;
}

}  // namespace resdim
