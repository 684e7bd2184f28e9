#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stmc {

/// Undirected simple graph on `size` vertices. Each edge is stored once with
/// first < second.
class Adjacency {
 public:
  Adjacency() = default;
  Adjacency(Eigen::Index size, std::vector<std::pair<Eigen::Index, Eigen::Index>> edges);

  Eigen::Index size() const { return size_; }
  const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges() const { return edges_; }
  std::vector<Eigen::Index> degrees() const;
  Eigen::Index components() const { return components_; }
  /// Rank of D - W, i.e. size minus the number of connected components.
  Eigen::Index laplacian_rank() const { return size_ - components(); }

 private:
  Eigen::Index count_components() const;

  Eigen::Index size_ = 0;
  Eigen::Index components_ = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges_;
};

struct PrecisionMatrix {
  Eigen::MatrixXd matrix;
  bool positive_definite = false;

  Eigen::Index size() const { return matrix.rows(); }
};

/// Consecutive time points are neighbours.
Adjacency path_adjacency(Eigen::Index length);

/// Symmetrised k-nearest-neighbour graph over planar points, with any
/// remaining components joined through their closest pair of points.
Adjacency knn_adjacency(const std::vector<std::array<double, 2>>& points, int k);

/// Edge list CSV with columns id_a,id_b, resolved against `ids`.
Adjacency load_adjacency(const std::filesystem::path& path, const std::vector<std::string>& ids);
void write_adjacency(std::ostream& out, const Adjacency& adj, const std::vector<std::string>& ids,
                     const std::vector<std::string>& header_comments = {});

/// Graph Laplacian D - W. Singular, so never flagged positive definite.
PrecisionMatrix icar_structure(const Adjacency& adj);

/// rho (D - W) + (1 - rho) I for 0 <= rho < 1.
PrecisionMatrix leroux_precision(const Adjacency& adj, double rho);

/// One draw from N(0, tau2 * Q^{-1}), via the Cholesky factor of Q.
Eigen::VectorXd sample_gmrf(const PrecisionMatrix& precision, double tau2, std::mt19937_64& rng);

}  // namespace stmc
