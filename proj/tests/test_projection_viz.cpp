#include <doctest.h>

#include "embgeom/error.hpp"
#include "embgeom/projection_viz.hpp"
#include "support/synthetic.hpp"

using namespace embgeom;

namespace {

Eigen::MatrixXd pairwise(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd d(p.rows(), p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.rows(); ++j) d(i, j) = (p.row(i) - p.row(j)).norm();
  return d;
}

std::vector<std::string> token_names(int n) {
  std::vector<std::string> t;
  for (int i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
  return t;
}

DependencyParse parse_of(const Tree& tree) {
  std::vector<std::string> rels(tree.size(), "dep");
  rels[tree.root()] = "root";
  return DependencyParse(tree.parents(), rels);
}

}  // namespace

TEST_SUITE("projection_viz") {

TEST_CASE("planar points keep their distances") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd plane = synthetic::gaussian_matrix(30, 2, rng) * 3.0;
  const Eigen::MatrixXd basis = synthetic::random_orthogonal(10, rng).leftCols(2);
  const Eigen::MatrixXd points = (plane * basis.transpose()).rowwise() +
                                 synthetic::gaussian_matrix(1, 10, rng).row(0);
  const auto pca = pca_project(points, 2);
  CHECK((pairwise(pca.coordinates) - pairwise(points)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(pca.captured_fraction() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("isotropic cloud captures about two axes' share") {
  std::mt19937_64 rng(2);
  const int d = 20;
  const auto pca = pca_project(synthetic::gaussian_matrix(20000, d, rng), 2);
  // top two sample eigenvalues sit slightly above 1 for n >> d
  CHECK(pca.captured_fraction() > 2.0 / d);
  CHECK(pca.captured_fraction() < 1.25 * 2.0 / d);
}

TEST_CASE("duplicates and sign convention") {
  Eigen::MatrixXd p(4, 3);
  p << 1, 2, 3, 1, 2, 3, -4, 0, 1, 5, 5, 5;
  const auto pca = pca_project(p, 2);
  CHECK(pca.coordinates.row(0) == pca.coordinates.row(1));
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::Index at;
    pca.coordinates.col(axis).cwiseAbs().maxCoeff(&at);
    CHECK(pca.coordinates(at, axis) > 0.0);
  }
  CHECK_THROWS_AS(pca_project(p.topRows(1), 2), ValidationError);
  CHECK_THROWS_AS(pca_project(p, 0), ValidationError);
  const auto same = pca_project(Eigen::MatrixXd::Ones(3, 4), 2);
  CHECK(same.coordinates.isZero(0.0));
}

TEST_CASE("pca is invariant under orthogonal maps") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd x = synthetic::gaussian_matrix(25, 12, rng) *
                              Eigen::VectorXd::LinSpaced(12, 3.0, 0.2).asDiagonal();
    const Eigen::MatrixXd q = synthetic::random_orthogonal(12, rng);
    const auto a = pca_project(x, 2);
    const auto b = pca_project(x * q, 2);
    CHECK((pairwise(a.coordinates) - pairwise(b.coordinates)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.coordinates - b.coordinates).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("canonical embedding draws without deviation") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tree = synthetic::random_tree(5 + 5 * trial, rng);
    const auto cloud = canonical_pythagorean_embedding(tree);
    const auto d = build_tree_drawing(token_names(tree.size()), parse_of(tree), cloud.points,
                                      ProbeMatrix::identity(cloud.dim()), 1.0);
    CHECK(d.solid.size() == static_cast<std::size_t>(tree.size() - 1));
    for (const auto& e : d.solid) CHECK(std::abs(e.deviation) < 1e-9);
    CHECK(d.dotted.empty());
    CHECK(d.coordinates.rows() == tree.size());
  }
}

TEST_CASE("a contracted pair becomes a dotted edge") {
  // path 0-1-2-3: d(0, 3) = 3; place 3 at squared distance 0.1 from 0
  Eigen::MatrixXd h = canonical_pythagorean_embedding(Tree::path(4)).points;
  h.row(3) = h.row(0);
  h(3, 0) += std::sqrt(0.1);
  const auto d = build_tree_drawing(token_names(4), parse_of(Tree::path(4)), h,
                                    ProbeMatrix::identity(3), 1.0);
  bool found = false;
  for (const auto& e : d.dotted) {
    if (e.a == 0 && e.b == 3) {
      found = true;
      CHECK(e.squared_distance == doctest::Approx(0.1));
      CHECK(e.tree_distance == 3);
    }
  }
  CHECK(found);
}

TEST_CASE("raising the threshold never adds dotted edges") {
  std::mt19937_64 rng(5);
  const auto tree = synthetic::random_tree(20, rng);
  const Eigen::MatrixXd h = synthetic::gaussian_matrix(20, 16, rng) * 0.4;
  std::vector<std::pair<int, int>> previous;
  bool first = true;
  for (double t = -2.0; t <= 6.0; t += 0.25) {
    const auto d = build_tree_drawing(token_names(20), parse_of(tree), h, ProbeMatrix::identity(16), t);
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : d.dotted) edges.emplace_back(e.a, e.b);
    if (!first) {
      for (const auto& e : edges) CHECK(std::find(previous.begin(), previous.end(), e) != previous.end());
    }
    previous = edges;
    first = false;
  }
}

TEST_CASE("token count mismatch") {
  const auto tree = Tree::path(3);
  CHECK_THROWS_AS(build_tree_drawing(token_names(2), parse_of(tree), Eigen::MatrixXd::Zero(3, 2),
                                     ProbeMatrix::identity(2)),
                  ValidationError);
  CHECK_THROWS_AS(build_tree_drawing(token_names(3), parse_of(tree), Eigen::MatrixXd::Zero(4, 2),
                                     ProbeMatrix::identity(2)),
                  ValidationError);
}

TEST_CASE("edge lengths match hand arithmetic") {
  const auto corpus = synthetic::edge_length_fixture();
  const auto table = per_dependency_edge_lengths(corpus, 0, ProbeMatrix::identity(2));
  // det: |(0,0)-(1,0)|^2 = 1 and |(0,0)-(0,3)|^2 = 9
  // nsubj: |(1,0)-(1,2)|^2 = 4 and |(0,3)-(2,3)|^2 = 4
  // advmod: |(2,3)-(2,4)|^2 = 1
  REQUIRE(table.size() == 3);
  CHECK(table.at("det").mean_squared_length == 5.0);
  CHECK(table.at("det").count == 2);
  CHECK(table.at("nsubj").mean_squared_length == 4.0);
  CHECK(table.at("advmod").mean_squared_length == 1.0);
  CHECK(table.at("advmod").count == 1);
  long total = 0;
  for (const auto& [label, e] : table) total += e.count;
  CHECK(total == 5);
  CHECK(to_json(table)["det"]["count"] == 2);
}

TEST_CASE("unit-length edges average to one") {
  synthetic::StructuralSpec spec;
  spec.sentences = 20;
  spec.noise_dims = 0;
  const auto corpus = synthetic::structural_corpus(spec);
  const auto table = per_dependency_edge_lengths(corpus, 0, ProbeMatrix::identity(spec.max_nodes - 1));
  REQUIRE(table.size() == 1);
  CHECK(table.at("dep").mean_squared_length == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("comparison panel") {
  std::mt19937_64 rng(6);
  const auto tree = synthetic::random_tree(15, rng);
  const auto parse = parse_of(tree);
  const Eigen::MatrixXd h = synthetic::gaussian_matrix(15, 8, rng);
  const ProbeMatrix probe(synthetic::gaussian_matrix(8, 4, rng));
  const auto panel = comparison_panel(token_names(15), parse, h, probe, 1024, 9);

  auto mean_abs = [](const TreeDrawing& d) {
    double s = 0.0;
    for (const auto& e : d.solid) s += std::abs(e.deviation);
    return s / d.solid.size();
  };
  for (const auto& e : panel[1].solid) CHECK(std::abs(e.deviation) < 1e-9);
  CHECK(mean_abs(panel[2]) < 0.2);
  CHECK(mean_abs(panel[3]) > 5.0 * mean_abs(panel[2]));
  for (const auto& d : panel) CHECK(d.solid.size() == 14);

  const auto again = comparison_panel(token_names(15), parse, h, probe, 1024, 9);
  CHECK(drawing_json_text(again[3]) == drawing_json_text(panel[3]));

  const auto single = comparison_panel(token_names(1), DependencyParse({-1}, {"root"}),
                                       Eigen::MatrixXd::Zero(1, 8), probe, 4, 1);
  CHECK(single[1].solid.empty());
}

TEST_CASE("json sidecar and svg") {
  const auto corpus = synthetic::edge_length_fixture();
  const auto d = build_tree_drawing(corpus.sentences[1], 0, ProbeMatrix::identity(2), 1.0);
  const auto j = nlohmann::json::parse(drawing_json_text(d));
  CHECK(j["sentence_id"] == "dog");
  CHECK(j["tokens"].size() == 4);
  CHECK(j["points"].size() == 4);
  CHECK(j["solid"].size() == 3);
  CHECK(j["color_scale"]["clip"] == 2.0);
  CHECK(j["solid"][0]["color"].get<std::string>().size() == 7);

  const auto svg = render_svg(d);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
  size_t lines = 0;
  for (size_t at = svg.find("class=\"solid\""); at != std::string::npos; at = svg.find("class=\"solid\"", at + 1)) ++lines;
  CHECK(lines == 3);

  ColorScale scale;
  CHECK(scale.color(0.0) == "#f7f7f7");
  CHECK(scale.color(2.0) == scale.color(50.0));
  CHECK(scale.color(-2.0) == "#2166ac");
}

}
