#include "resdim/graph.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>
#include <stdexcept>

#include "resdim/common.hpp"

namespace resdim {

LevelGraph::LevelGraph(std::size_t n, const std::vector<Edge>& edges) : n_(n) {
  std::map<std::pair<std::int32_t, std::int32_t>, double> merged;
  for (const auto& e : edges) {
    if (e.u < 0 || e.v < 0 || static_cast<std::size_t>(e.u) >= n || static_cast<std::size_t>(e.v) >= n)
      throw std::invalid_argument("edge endpoint out of range");
    if (e.u == e.v) throw std::invalid_argument("self-loop");
    if (!(e.c > 0)) throw std::invalid_argument("conductance must be positive");
    merged[{std::min(e.u, e.v), std::max(e.u, e.v)}] += e.c;
  }
  edges_.reserve(merged.size());
  for (const auto& [k, c] : merged) edges_.push_back({k.first, k.second, c});
}

Eigen::SparseMatrix<double> LevelGraph::laplacian() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(4 * edges_.size());
  for (const auto& e : edges_) {
    t.emplace_back(e.u, e.u, e.c);
    t.emplace_back(e.v, e.v, e.c);
    t.emplace_back(e.u, e.v, -e.c);
    t.emplace_back(e.v, e.u, -e.c);
  }
  Eigen::SparseMatrix<double> L(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

Eigen::MatrixXd LevelGraph::dense_laplacian() const {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  for (const auto& e : edges_) {
    L(e.u, e.u) += e.c;
    L(e.v, e.v) += e.c;
    L(e.u, e.v) -= e.c;
    L(e.v, e.u) -= e.c;
  }
  return L;
}

std::vector<std::vector<std::pair<std::int32_t, double>>> LevelGraph::adjacency() const {
  std::vector<std::vector<std::pair<std::int32_t, double>>> adj(n_);
  for (const auto& e : edges_) {
    adj[static_cast<std::size_t>(e.u)].emplace_back(e.v, e.c);
    adj[static_cast<std::size_t>(e.v)].emplace_back(e.u, e.c);
  }
  return adj;
}

std::vector<int> LevelGraph::components() const {
  auto adj = adjacency();
  std::vector<int> label(n_, -1);
  int next = 0;
  for (std::size_t s = 0; s < n_; ++s) {
    if (label[s] >= 0) continue;
    std::deque<std::size_t> q{s};
    label[s] = next;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (auto [v, c] : adj[u]) {
        if (label[static_cast<std::size_t>(v)] < 0) {
          label[static_cast<std::size_t>(v)] = next;
          q.push_back(static_cast<std::size_t>(v));
        }
      }
    }
    ++next;
  }
  return label;
}

bool LevelGraph::connected() const {
  auto lab = components();
  return std::all_of(lab.begin(), lab.end(), [](int l) { return l == 0; });
}

LevelGraph LevelGraph::induced(const std::vector<std::int32_t>& keep) const {
  std::vector<std::int32_t> pos(n_, -1);
  for (std::size_t i = 0; i < keep.size(); ++i) pos[static_cast<std::size_t>(keep[i])] = static_cast<std::int32_t>(i);
  std::vector<Edge> es;
  for (const auto& e : edges_) {
    auto a = pos[static_cast<std::size_t>(e.u)], b = pos[static_cast<std::size_t>(e.v)];
    if (a >= 0 && b >= 0) es.push_back({a, b, e.c});
  }
  LevelGraph g(keep.size(), es);
  if (!coords.empty())
    for (auto k : keep) g.coords.push_back(coords[static_cast<std::size_t>(k)]);
  if (!mass.empty())
    for (auto k : keep) g.mass.push_back(mass[static_cast<std::size_t>(k)]);
  return g;
}

LevelGraph LevelGraph::scaled(double factor) const {
  if (!(factor > 0)) throw std::invalid_argument("scale factor must be positive");
  LevelGraph g = *this;
  for (auto& e : g.edges_) e.c *= factor;
  return g;
}

std::string LevelGraph::to_csv() const {
  std::ostringstream os;
  os << "u,v,conductance\n";
  for (const auto& e : edges_) os << e.u << ',' << e.v << ',' << fmt(e.c) << '\n';
  return os.str();
}

LevelGraph LevelGraph::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<Edge> es;
  std::int32_t maxv = -1;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("u,", 0) == 0) continue;
    }
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ','))
      throw std::invalid_argument("malformed edge line: " + line);
    Edge e{std::stoi(a), std::stoi(b), std::stod(c)};
    maxv = std::max({maxv, e.u, e.v});
    es.push_back(e);
  }
  return LevelGraph(static_cast<std::size_t>(maxv + 1), es);
}

}  // namespace resdim
