#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace resdim {

struct Edge {
  std::int32_t u = 0, v = 0;
  double c = 1.0;  // conductance
};

// Undirected weighted graph. Parallel edges are merged by summing conductances, so each
// unordered pair appears at most once.
class LevelGraph {
 public:
  LevelGraph() = default;
  LevelGraph(std::size_t n, const std::vector<Edge>& edges);

  std::size_t num_vertices() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<std::array<double, 2>> coords;  // optional plane coordinates
  std::vector<double> mass;                   // optional vertex measure

  Eigen::SparseMatrix<double> laplacian() const;
  Eigen::MatrixXd dense_laplacian() const;
  std::vector<std::vector<std::pair<std::int32_t, double>>> adjacency() const;

  // Component label per vertex, labels numbered from 0 in order of first vertex.
  std::vector<int> components() const;
  bool connected() const;

  // Subgraph on `keep` (vertex i of the result is keep[i]).
  LevelGraph induced(const std::vector<std::int32_t>& keep) const;
  LevelGraph scaled(double factor) const;

  std::string to_csv() const;  // u,v,conductance
  static LevelGraph from_csv(const std::string& text);

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

}  // namespace resdim
