#include "stmc/graphs.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace stmc {

Adjacency::Adjacency(Eigen::Index size, std::vector<std::pair<Eigen::Index, Eigen::Index>> edges) : size_(size) {
  if (size < 0) throw std::invalid_argument("adjacency size must be non-negative");
  for (auto [a, b] : edges) {
    if (a == b) throw std::invalid_argument("adjacency has a self-loop at " + std::to_string(a));
    if (a < 0 || b < 0 || a >= size || b >= size)
      throw std::invalid_argument("adjacency edge index out of range");
    edges_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  components_ = count_components();
}

std::vector<Eigen::Index> Adjacency::degrees() const {
  std::vector<Eigen::Index> d(static_cast<std::size_t>(size_), 0);
  for (auto [a, b] : edges_) {
    ++d[a];
    ++d[b];
  }
  return d;
}

Eigen::Index Adjacency::count_components() const {
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(size_));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Eigen::Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  Eigen::Index count = size_;
  for (auto [a, b] : edges_) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --count;
    }
  }
  return count;
}

Adjacency path_adjacency(Eigen::Index length) {
  if (length < 2) throw std::invalid_argument("path adjacency needs at least 2 time points");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
  for (Eigen::Index t = 0; t + 1 < length; ++t) edges.emplace_back(t, t + 1);
  return Adjacency(length, std::move(edges));
}

Adjacency knn_adjacency(const std::vector<std::array<double, 2>>& points, int k) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (k < 1 || k >= n) throw std::invalid_argument("knn_adjacency needs 1 <= k < number of points");
  auto dist2 = [&](Eigen::Index a, Eigen::Index b) {
    const double dx = points[a][0] - points[b][0];
    const double dy = points[a][1] - points[b][1];
    return dx * dx + dy * dy;
  };
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> order;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dist2(i, a) < dist2(i, b); });
    for (int r = 0; r < k; ++r) edges.emplace_back(i, order[r]);
  }
  Adjacency adj(n, edges);

  // Join components through their closest cross pair until connected.
  while (adj.components() > 1) {
    std::vector<Eigen::Index> label(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<Eigen::Index>> nbr(static_cast<std::size_t>(n));
    for (auto [a, b] : adj.edges()) {
      nbr[a].push_back(b);
      nbr[b].push_back(a);
    }
    std::vector<Eigen::Index> stack{0};
    label[0] = 0;
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto w : nbr[v])
        if (label[w] < 0) {
          label[w] = 0;
          stack.push_back(w);
        }
    }
    double best = std::numeric_limits<double>::infinity();
    std::pair<Eigen::Index, Eigen::Index> link{0, 0};
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        if (label[a] == 0 && label[b] != 0 && dist2(a, b) < best) {
          best = dist2(a, b);
          link = {a, b};
        }
    auto e = adj.edges();
    e.push_back(link);
    adj = Adjacency(n, std::move(e));
  }
  return adj;
}

Adjacency load_adjacency(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open adjacency file " + path.string());
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<Eigen::Index>(i);

  std::string line;
  long line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw std::runtime_error("adjacency file has no header");
  const auto header = csv::split(line);
  auto ca = std::find(header.begin(), header.end(), "id_a");
  auto cb = std::find(header.begin(), header.end(), "id_b");
  if (ca == header.end() || cb == header.end())
    throw std::runtime_error("adjacency file needs columns id_a,id_b");
  const auto ia = ca - header.begin();
  const auto ib = cb - header.begin();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
  while (csv::next_record(in, line, line_no)) {
    auto f = csv::split(line);
    if (f.size() != header.size())
      throw std::runtime_error("adjacency line " + std::to_string(line_no) + ": wrong field count");
    auto a = index.find(f[ia]);
    auto b = index.find(f[ib]);
    if (a == index.end() || b == index.end())
      throw std::runtime_error("adjacency line " + std::to_string(line_no) + ": unknown unit id");
    edges.emplace_back(a->second, b->second);
  }
  return Adjacency(static_cast<Eigen::Index>(ids.size()), std::move(edges));
}

void write_adjacency(std::ostream& out, const Adjacency& adj, const std::vector<std::string>& ids,
                     const std::vector<std::string>& header_comments) {
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << "id_a,id_b\n";
  for (auto [a, b] : adj.edges()) out << ids[a] << ',' << ids[b] << '\n';
}

PrecisionMatrix icar_structure(const Adjacency& adj) {
  PrecisionMatrix q{Eigen::MatrixXd::Zero(adj.size(), adj.size()), false};
  for (auto [a, b] : adj.edges()) {
    q.matrix(a, b) -= 1.0;
    q.matrix(b, a) -= 1.0;
    q.matrix(a, a) += 1.0;
    q.matrix(b, b) += 1.0;
  }
  return q;
}

PrecisionMatrix leroux_precision(const Adjacency& adj, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("Leroux rho must lie in [0, 1)");
  PrecisionMatrix q = icar_structure(adj);
  q.matrix *= rho;
  q.matrix.diagonal().array() += 1.0 - rho;
  q.positive_definite = true;
  return q;
}

Eigen::VectorXd sample_gmrf(const PrecisionMatrix& precision, double tau2, std::mt19937_64& rng) {
  if (!precision.positive_definite) throw std::invalid_argument("sample_gmrf needs a positive-definite precision");
  if (!(tau2 > 0.0)) throw std::invalid_argument("sample_gmrf needs tau2 > 0");
  Eigen::LLT<Eigen::MatrixXd> llt(precision.matrix);
  if (llt.info() != Eigen::Success) throw std::runtime_error("Cholesky factorisation of precision failed");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(precision.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  // Q = L L^T, so L^{-T} z has covariance Q^{-1}.
  Eigen::VectorXd x = llt.matrixU().solve(z);
  return std::sqrt(tau2) * x;
}

}  // namespace stmc
