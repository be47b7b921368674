#include "embgeom/tree_geometry.hpp"

#include <algorithm>
#include <queue>
#include <random>

namespace embgeom {

Tree::Tree(std::vector<int> parents, std::vector<std::string> labels)
    : parents_(std::move(parents)), labels_(std::move(labels)) {
  const int n = static_cast<int>(parents_.size());
  if (n == 0) throw ValidationError("tree must have at least one node");
  if (!labels_.empty() && static_cast<int>(labels_.size()) != n) {
    throw ValidationError("tree has " + std::to_string(n) + " nodes but " +
                          std::to_string(labels_.size()) + " labels");
  }
  children_.assign(n, {});
  for (int node = 0; node < n; ++node) {
    const int p = parents_[node];
    if (p == -1) {
      if (root_ != -1) {
        throw ValidationError("multiple roots: nodes " + std::to_string(root_) + " and " +
                              std::to_string(node));
      }
      root_ = node;
    } else if (p < 0 || p >= n || p == node) {
      throw ValidationError("node " + std::to_string(node) + " has invalid parent " +
                            std::to_string(p));
    } else {
      children_[p].push_back(node);
    }
  }
  if (root_ == -1) throw ValidationError("tree has no root (parent cycle)");

  depth_.assign(n, -1);
  order_.reserve(n);
  std::queue<int> frontier;
  frontier.push(root_);
  depth_[root_] = 0;
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    order_.push_back(node);
    for (int c : children_[node]) {
      depth_[c] = depth_[node] + 1;
      frontier.push(c);
    }
  }
  if (static_cast<int>(order_.size()) != n) {
    for (int node = 0; node < n; ++node) {
      if (depth_[node] < 0) {
        throw ValidationError("node " + std::to_string(node) +
                              " is not reachable from the root (parent cycle)");
      }
    }
  }
}

Tree Tree::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("parents") || !j["parents"].is_array()) {
    throw ValidationError("tree JSON needs a \"parents\" array");
  }
  std::vector<int> parents;
  for (const auto& p : j["parents"]) {
    if (p.is_null()) {
      parents.push_back(-1);
    } else if (p.is_number_integer()) {
      parents.push_back(p.get<int>());
    } else {
      throw ValidationError("tree parents must be integers or null");
    }
  }
  if (j.contains("n") && j["n"].get<int>() != static_cast<int>(parents.size())) {
    throw ValidationError("tree JSON: n = " + std::to_string(j["n"].get<int>()) +
                          " but parents has " + std::to_string(parents.size()) + " entries");
  }
  std::vector<std::string> labels;
  if (j.contains("labels")) labels = j["labels"].get<std::vector<std::string>>();
  return Tree(std::move(parents), std::move(labels));
}

nlohmann::json Tree::to_json() const {
  nlohmann::json j;
  j["n"] = size();
  j["parents"] = parents_;
  if (!labels_.empty()) j["labels"] = labels_;
  return j;
}

Tree Tree::path(int n) {
  std::vector<int> parents(std::max(n, 0));
  for (int i = 0; i < n; ++i) parents[i] = i - 1;
  return Tree(std::move(parents));
}

Tree Tree::star(int k) {
  std::vector<int> parents(k + 1, 0);
  parents[0] = -1;
  return Tree(std::move(parents));
}

int Tree::distance(int a, int b) const {
  int steps = 0;
  while (depth_.at(a) > depth_.at(b)) a = parents_[a], ++steps;
  while (depth_[b] > depth_[a]) b = parents_[b], ++steps;
  while (a != b) {
    a = parents_[a];
    b = parents_[b];
    steps += 2;
  }
  return steps;
}

Eigen::MatrixXi tree_distance_matrix(const Tree& tree) {
  const int n = tree.size();
  Eigen::MatrixXi d = Eigen::MatrixXi::Constant(n, n, -1);
  std::vector<int> queue(n);
  for (int source = 0; source < n; ++source) {
    int head = 0, tail = 0;
    queue[tail++] = source;
    d(source, source) = 0;
    while (head < tail) {
      const int node = queue[head++];
      auto visit = [&](int next) {
        if (next >= 0 && d(source, next) < 0) {
          d(source, next) = d(source, node) + 1;
          queue[tail++] = next;
        }
      };
      visit(tree.parent(node));
      for (int c : tree.children(node)) visit(c);
    }
  }
  return d;
}

PointCloud<double> random_branch_embedding(const Tree& tree, int dim, std::uint64_t seed) {
  if (dim < 1) throw ValidationError("random branch embedding needs dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));

  const int n = tree.size();
  Eigen::MatrixXd branch = Eigen::MatrixXd::Zero(n, dim);
  for (int node = 0; node < n; ++node) {
    if (node == tree.root()) continue;
    for (int c = 0; c < dim; ++c) branch(node, c) = gauss(rng);
  }
  PointCloud<double> cloud;
  cloud.points.setZero(n, dim);
  for (int node : tree.topological_order()) {
    if (node == tree.root()) continue;
    cloud.points.row(node) = cloud.points.row(tree.parent(node)) + branch.row(node);
  }
  return cloud;
}

FeasibilityReport power_p_feasibility(const Eigen::MatrixXd& distances, double p,
                                      std::optional<double> tolerance) {
  if (!(p > 0.0)) throw ValidationError("power p must be positive");
  if (distances.rows() != distances.cols() || distances.rows() == 0) {
    throw ValidationError("distance matrix must be square and non-empty");
  }
  if (!distances.allFinite()) throw ValidationError("distance matrix has non-finite entries");
  const Eigen::Index n = distances.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (distances(i, i) != 0.0) throw ValidationError("distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (distances(i, j) < 0.0) throw ValidationError("distance matrix has negative entries");
      if (distances(i, j) != distances(j, i)) {
        throw ValidationError("distance matrix is not symmetric");
      }
    }
  }

  const Eigen::MatrixXd powered = distances.array().pow(2.0 / p).matrix();
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd gram = -0.5 * centering * powered * centering;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& eig = solver.eigenvalues();

  FeasibilityReport report;
  report.p = p;
  report.min_eigenvalue = eig.minCoeff();
  report.max_abs_eigenvalue = eig.cwiseAbs().maxCoeff();
  report.tolerance = tolerance.value_or(1e-8 * report.max_abs_eigenvalue);
  report.feasible = report.min_eigenvalue >= -report.tolerance;
  return report;
}

double star_tree_pairwise_bound(int k, double p) {
  if (k < 2) throw ValidationError("star bound needs k >= 2");
  if (!(p > 0.0)) throw ValidationError("power p must be positive");
  return std::pow(2.0 + 2.0 / (k - 1), p / 2.0);
}

BranchDistanceStats sample_branch_distances(const Tree& tree, int a, int b, int dim, int trials,
                                            std::uint64_t base_seed) {
  if (trials < 2) throw ValidationError("need at least two trials");
  Eigen::VectorXd samples(trials);
  for (int t = 0; t < trials; ++t) {
    const auto cloud = random_branch_embedding(tree, dim, base_seed + static_cast<std::uint64_t>(t));
    samples(t) = (cloud.points.row(a) - cloud.points.row(b)).squaredNorm();
  }
  BranchDistanceStats stats;
  stats.trials = trials;
  stats.mean = samples.mean();
  stats.stddev = std::sqrt((samples.array() - stats.mean).square().sum() / (trials - 1));
  stats.standard_error = stats.stddev / std::sqrt(static_cast<double>(trials));
  return stats;
}

}  // namespace embgeom
