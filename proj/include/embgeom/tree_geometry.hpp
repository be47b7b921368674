#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/error.hpp"

namespace embgeom {

// Rooted tree over nodes 0..n-1 with parent links. The root has parent -1.
// Immutable after construction; the constructor rejects cycles, multiple
// roots, out-of-range parents and unreachable nodes.
class Tree {
 public:
  explicit Tree(std::vector<int> parents, std::vector<std::string> labels = {});

  // {"n": 3, "parents": [-1, 0, 1], "labels": [...]}; a null parent marks the root.
  static Tree from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  static Tree path(int n);
  // Root 0 with `k` children 1..k.
  static Tree star(int k);

  int size() const noexcept { return static_cast<int>(parents_.size()); }
  int root() const noexcept { return root_; }
  int parent(int node) const { return parents_.at(node); }
  const std::vector<int>& parents() const noexcept { return parents_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<int>& children(int node) const { return children_.at(node); }

  // Nodes in breadth-first order from the root; every parent precedes its children.
  const std::vector<int>& topological_order() const noexcept { return order_; }

  // Number of edges on the unique path between a and b.
  int distance(int a, int b) const;

 private:
  std::vector<int> parents_;
  std::vector<std::string> labels_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
  std::vector<int> depth_;
  int root_ = -1;
};

// Points indexed by tree node; row i is f(t_i).
template <typename Scalar = double>
struct PointCloud {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix points;

  Eigen::Index size() const noexcept { return points.rows(); }
  Eigen::Index dim() const noexcept { return points.cols(); }
  bool all_finite() const { return points.allFinite(); }
};

struct FeasibilityReport {
  double p = 2.0;
  double min_eigenvalue = 0.0;
  double max_abs_eigenvalue = 0.0;
  bool feasible = true;
  double tolerance = 0.0;
};

// Symmetric n x n matrix of tree path lengths, by BFS from every node.
Eigen::MatrixXi tree_distance_matrix(const Tree& tree);

// f(root) = 0, f(t) = e_t + f(parent(t)) with a distinct basis vector per
// non-root node, so that ||f(x) - f(y)||^2 == d(x, y) exactly. Basis vectors are
// assigned to non-root nodes in increasing node index.
template <typename Scalar = double>
PointCloud<Scalar> canonical_pythagorean_embedding(const Tree& tree) {
  const int n = tree.size();
  PointCloud<Scalar> cloud;
  cloud.points.setZero(n, std::max(n - 1, 0));
  std::vector<int> axis(n, -1);
  int next = 0;
  for (int node = 0; node < n; ++node) {
    if (node != tree.root()) axis[node] = next++;
  }
  for (int node : tree.topological_order()) {
    if (node == tree.root()) continue;
    cloud.points.row(node) = cloud.points.row(tree.parent(node));
    cloud.points(node, axis[node]) += Scalar(1);
  }
  return cloud;
}

// Same recursion with i.i.d. N(0, I/dim) edge vectors drawn from a generator
// seeded with `seed`; draws happen in increasing node index.
PointCloud<double> random_branch_embedding(const Tree& tree, int dim, std::uint64_t seed);

// Classical-MDS test: a power-p embedding exists iff the matrix of
// d^(2/p) is squared-Euclidean realizable, i.e. -1/2 J D J is PSD.
// Without an explicit tolerance, 1e-8 * max |eigenvalue| is used.
FeasibilityReport power_p_feasibility(const Eigen::MatrixXd& distances, double p,
                                      std::optional<double> tolerance = std::nullopt);

// Upper bound (2 + 2/(k-1))^(p/2) on the smallest pairwise ||v_i - v_j||^p
// among k unit vectors. A value below 2 rules out a power-p embedding of the
// star with k leaves.
double star_tree_pairwise_bound(int k, double p);

// Largest |‖f(x) - f(y)‖^p - d(x, y)| over node pairs.
template <typename Scalar>
double verify_power_p(const PointCloud<Scalar>& cloud, const Tree& tree, double p) {
  if (cloud.size() != tree.size()) {
    throw ValidationError("point cloud has " + std::to_string(cloud.size()) +
                          " points but tree has " + std::to_string(tree.size()) + " nodes");
  }
  const Eigen::MatrixXi d = tree_distance_matrix(tree);
  double worst = 0.0;
  for (int i = 0; i < tree.size(); ++i) {
    for (int j = i + 1; j < tree.size(); ++j) {
      const double sq = static_cast<double>((cloud.points.row(i) - cloud.points.row(j)).squaredNorm());
      const double powered = p == 2.0 ? sq : std::pow(sq, p / 2.0);
      worst = std::max(worst, std::abs(powered - d(i, j)));
    }
  }
  return worst;
}

struct BranchDistanceStats {
  double mean = 0.0;
  double stddev = 0.0;
  double standard_error = 0.0;
  int trials = 0;
};

// Monte Carlo summary of ||f(a) - f(b)||^2 over random branch embeddings with
// seeds base_seed, base_seed + 1, ...
BranchDistanceStats sample_branch_distances(const Tree& tree, int a, int b, int dim, int trials,
                                            std::uint64_t base_seed);

}  // namespace embgeom
