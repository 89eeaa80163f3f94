#include "resdim/heat.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "resdim/common.hpp"
#include "resdim/corner.hpp"

namespace resdim {

double FiniteDirichletForm::total_mass() const {
  double s = 0;
  for (double m : mass) s += m;
  return s;
}

FiniteDirichletForm build_form(const LevelGraph& g, std::vector<double> mass, double renormalizer) {
  if (!(renormalizer > 0)) throw std::invalid_argument("renormalizer must be positive");
  if (mass.size() != g.num_vertices()) throw std::invalid_argument("one mass per vertex required");
  for (std::size_t v = 0; v < mass.size(); ++v)
    if (!(mass[v] > 0)) throw std::invalid_argument("vertex " + std::to_string(v) + " has no positive mass");
  FiniteDirichletForm f;
  f.graph = g.scaled(renormalizer);
  f.mass = std::move(mass);
  f.renormalizer = renormalizer;
  return f;
}

FiniteDirichletForm build_form(const PartitionHierarchy& h, int level, const HierMeasure& m, double renormalizer) {
  auto cg = corner_graph_of(h, level);
  return build_form(cg.graph, vertex_masses(cg, m), renormalizer);
}

double HeatSpectrum::p(double t, std::int32_t x, std::int32_t y) const {
  double s = 0;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    auto ki = static_cast<Eigen::Index>(k);
    s += std::exp(-lambda[k] * t) * phi(x, ki) * phi(y, ki);
  }
  return s;
}

Eigen::VectorXd HeatSpectrum::diagonal(double t) const {
  Eigen::VectorXd e(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) e(static_cast<Eigen::Index>(k)) = std::exp(-lambda[k] * t);
  return phi.array().square().matrix() * e;
}

namespace {

// p(t,x,x) for the rows `xs` and every time, in row blocks to bound memory.
Eigen::MatrixXd diagonal_grid(const HeatSpectrum& s, const std::vector<std::int32_t>& xs,
                              const std::vector<double>& times) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd E(n, static_cast<Eigen::Index>(times.size()));
  for (Eigen::Index k = 0; k < n; ++k)
    for (std::size_t j = 0; j < times.size(); ++j)
      E(k, static_cast<Eigen::Index>(j)) = std::exp(-s.lambda[static_cast<std::size_t>(k)] * times[j]);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), E.cols());
  const std::size_t block = 256;
  for (std::size_t b = 0; b < xs.size(); b += block) {
    std::size_t e = std::min(xs.size(), b + block);
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(e - b), n);
    for (std::size_t i = b; i < e; ++i) rows.row(static_cast<Eigen::Index>(i - b)) = s.phi.row(xs[i]).array().square();
    out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) = rows * E;
  }
  return out;
}

std::vector<std::int32_t> all_vertices(std::size_t n) {
  std::vector<std::int32_t> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = static_cast<std::int32_t>(i);
  return xs;
}

double total(const std::vector<double>& mass) {
  double s = 0;
  for (double m : mass) s += m;
  return s;
}

// p(t,x,.) as a vector.
Eigen::VectorXd kernel_row(const HeatSpectrum& s, double t, std::int32_t x) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k)
    c(static_cast<Eigen::Index>(k)) = std::exp(-s.lambda[k] * t) * s.phi(x, static_cast<Eigen::Index>(k));
  return s.phi * c;
}

// Random-probe check of A U = U diag(w) and U^T U = I, using Eigen products only so a faulty
// BLAS cannot vouch for itself.
bool decomposition_ok(const Eigen::MatrixXd& A, const Eigen::MatrixXd& U, const std::vector<double>& w) {
  const auto n = A.rows();
  Eigen::Map<const Eigen::VectorXd> lam(w.data(), n);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1.0);
  for (int probe = 0; probe < 3; ++probe) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    Eigen::VectorXd Uv = U.lazyProduct(v);
    Eigen::VectorXd lhs = A.lazyProduct(Uv);
    Eigen::VectorXd rhs = U.lazyProduct(lam.cwiseProduct(v).eval());
    if ((lhs - rhs).norm() > 1e-9 * scale * v.norm() * std::sqrt(static_cast<double>(n))) return false;
    Eigen::VectorXd back = U.transpose().lazyProduct(Uv);
    if ((back - v).norm() > 1e-9 * v.norm() * std::sqrt(static_cast<double>(n))) return false;
  }
  return true;
}

}  // namespace

std::shared_ptr<const HeatSpectrum> heat_spectrum(const FiniteDirichletForm& f, std::size_t cap) {
  const std::size_t n = f.graph.num_vertices();
  if (n > cap)
    throw CapExceeded("heat spectrum: " + std::to_string(n) + " vertices exceed the dense cap " + std::to_string(cap) +
                      "; use a lower level");
  if (n == 0) throw std::invalid_argument("empty form");
  auto s = std::make_shared<HeatSpectrum>();
  s->mass = f.mass;
  Eigen::VectorXd d(static_cast<Eigen::Index>(n));
  for (std::size_t v = 0; v < n; ++v) d(static_cast<Eigen::Index>(v)) = 1 / std::sqrt(f.mass[v]);
  // Symmetric conjugate D L D of the generator, D = M^-1/2.
  Eigen::MatrixXd A = f.graph.dense_laplacian();
  A = d.asDiagonal() * A * d.asDiagonal();
  Eigen::MatrixXd U = A;
  std::vector<double> w(n);
  lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), U.data(),
                                   static_cast<lapack_int>(n), w.data());
  s->solver = "dsyevd";
  if (info != 0 || !decomposition_ok(A, U, w)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericalFailure("symmetric eigensolver failed");
    U = es.eigenvectors();
    for (std::size_t k = 0; k < n; ++k) w[k] = es.eigenvalues()(static_cast<Eigen::Index>(k));
    s->solver = "eigen";
  }
  for (double& l : w) l = std::max(l, 0.0);
  s->lambda = std::move(w);
  s->phi = d.asDiagonal() * U;
  return s;
}

HeatCurve heat_kernel(std::shared_ptr<const HeatSpectrum> s, std::int32_t x, const std::vector<double>& times) {
  if (x < 0 || static_cast<std::size_t>(x) >= s->size()) throw std::out_of_range("heat_kernel vertex");
  for (double t : times)
    if (!(t > 0)) throw std::invalid_argument("heat_kernel needs positive times");
  HeatCurve c;
  c.x = x;
  c.t = times;
  auto D = diagonal_grid(*s, {x}, times);
  for (Eigen::Index j = 0; j < D.cols(); ++j) c.p.push_back(D(0, j));
  c.spectrum = std::move(s);
  return c;
}

double mixing_time(const HeatSpectrum& s, double tol) {
  const double floor = 1 / total(s.mass);
  for (int i = 0; i < 400; ++i) {
    double t = std::ldexp(1.0, i) / s.lambda_max();
    if (s.diagonal(t).maxCoeff() <= (1 + tol) * floor) return t;
  }
  throw NumericalFailure("heat kernel does not approach its floor; is the form connected?");
}

nlohmann::json HeatDsEstimate::to_json() const {
  return {{"t_lo", t_lo}, {"t_hi", t_hi}, {"grid_points", grid.size()}, {"f", f},          {"ds", ds},
          {"ds_fit", ds_fit}, {"halving", halving}, {"degenerate", degenerate}};
}

HeatWindow matched_window(const std::vector<double>& pt, double branching, int level, int n_lo) {
  if (level < 1 || n_lo < 0 || n_lo >= level || pt.size() <= static_cast<std::size_t>(level))
    throw std::invalid_argument("matched_window needs 0 <= n_lo < level and (Pt) up to level");
  auto t = [&](int n) {
    return std::pow(branching, -n) * pt[static_cast<std::size_t>(level - n)] / pt[static_cast<std::size_t>(level)];
  };
  return {t(level), t(n_lo), true};
}

HeatDsEstimate ol_ds_heat(const HeatSpectrum& s, const std::vector<std::int32_t>& xs_in, const HeatWindow& w) {
  const double lo = 3 / s.lambda_max(), hi = 0.5 * mixing_time(s);
  HeatDsEstimate out;
  out.t_lo = w.t_lo > 0 ? w.t_lo : lo;
  out.t_hi = w.t_hi > 0 ? w.t_hi : hi;
  if (w.clip) {
    out.t_lo = std::max(out.t_lo, lo);
    out.t_hi = std::min(out.t_hi, hi);
  } else {
    out.degenerate = out.t_lo < lo * (1 - 1e-12) || out.t_hi > hi * (1 + 1e-12);
  }
  for (double t = out.t_lo; t <= out.t_hi * (1 + 1e-12); t *= 2) out.grid.push_back(t);
  if (out.grid.size() < 3) throw std::invalid_argument("heat window holds fewer than three grid points");
  auto xs = xs_in.empty() ? all_vertices(s.size()) : xs_in;
  auto D = diagonal_grid(s, xs, out.grid);
  const auto G = static_cast<Eigen::Index>(out.grid.size());
  for (Eigen::Index j = 1; j < G; ++j) {
    double fj = -INFINITY;
    for (Eigen::Index x = 0; x < D.rows(); ++x)
      for (Eigen::Index i = j; i < G; ++i) fj = std::max(fj, std::log(D(x, i - j) / D(x, i)));
    out.f.push_back(fj);
  }
  out.ds = INFINITY;
  std::vector<double> js;
  for (std::size_t j = 1; j <= out.f.size(); ++j) {
    out.ds = std::min(out.ds, 2 * out.f[j - 1] / (static_cast<double>(j) * std::log(2.0)));
    js.push_back(static_cast<double>(j));
  }
  out.ds_fit = 2 * ls_slope(js, out.f) / std::log(2.0);
  out.halving = std::exp(out.f[0]);
  return out;
}

std::vector<SlopeRow> ds_pointwise(const HeatSpectrum& s, std::int32_t x) {
  if (x < 0 || static_cast<std::size_t>(x) >= s.size()) throw std::out_of_range("ds_pointwise vertex");
  const double lo = 3 / s.lambda_max(), tmix = mixing_time(s);
  std::vector<double> grid;
  for (int i = -4;; ++i) {
    double t = std::ldexp(1.0, i) / s.lambda_max();
    grid.push_back(t);
    if (t > 2 * tmix) break;
  }
  auto D = diagonal_grid(s, {x}, grid);
  std::vector<SlopeRow> rows;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    SlopeRow r;
    r.t = grid[i];
    auto a = static_cast<Eigen::Index>(i);
    r.slope = -2 * std::log(D(0, a + 1) / D(0, a)) / std::log(2.0);
    r.resolved = grid[i] >= lo * (1 - 1e-12) && grid[i + 1] <= 0.5 * tmix * (1 + 1e-12);
    rows.push_back(r);
  }
  return rows;
}

HeatInvariants heat_invariants(const HeatSpectrum& s, std::size_t samples, std::uint64_t seed) {
  HeatInvariants out;
  const double tmix = mixing_time(s), floor = 1 / total(s.mass);
  std::vector<double> grid;
  for (double t = 0.25 / s.lambda_max(); t <= tmix; t *= 2) grid.push_back(t);
  auto D = diagonal_grid(s, all_vertices(s.size()), grid);
  out.floor_gap = INFINITY;
  for (Eigen::Index x = 0; x < D.rows(); ++x)
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      ++out.checks;
      out.floor_gap = std::min(out.floor_gap, D(x, j) - floor);
      if (j > 0 && !(D(x, j) < D(x, j - 1))) out.monotone = false;
    }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> vert(0, static_cast<std::int32_t>(s.size()) - 1);
  std::uniform_int_distribution<std::size_t> ti(0, grid.size() - 1);
  for (std::size_t k = 0; k < samples; ++k) {
    std::int32_t x = vert(rng), y = vert(rng);
    double t = grid[ti(rng)], u = grid[ti(rng)];
    Eigen::VectorXd a = kernel_row(s, t, x), b = kernel_row(s, u, y);
    double ck = 0;
    for (std::size_t z = 0; z < s.size(); ++z) ck += a(static_cast<Eigen::Index>(z)) * b(static_cast<Eigen::Index>(z)) * s.mass[z];
    double direct = s.p(t + u, x, y);
    double scale = std::sqrt(s.p(t + u, x, x) * s.p(t + u, y, y));
    out.ck_error = std::max(out.ck_error, std::abs(ck - direct) / scale);
    double sym = std::abs(s.p(t, x, y) - kernel_row(s, t, y)(x)) / std::sqrt(s.p(t, x, x) * s.p(t, y, y));
    out.symmetry_error = std::max(out.symmetry_error, sym);
    out.checks += 2;
  }
  return out;
}

std::string heat_csv(int level, const std::vector<HeatCurve>& curves) {
  std::ostringstream os;
  os << "level,x_id,t,p\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.t.size(); ++i) os << level << ',' << c.x << ',' << fmt(c.t[i]) << ',' << fmt(c.p[i]) << '\n';
  return os.str();
}

}  // namespace resdim
