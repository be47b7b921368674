#include "embgeom/projection_viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "embgeom/tree_geometry.hpp"

namespace embgeom {

PcaResult pca_project(const Eigen::Ref<const Eigen::MatrixXd>& points, int out_dim) {
  if (out_dim < 1) throw ValidationError("PCA output dimension must be positive");
  const Eigen::Index n = points.rows();
  if (n < out_dim) {
    throw ValidationError("PCA to " + std::to_string(out_dim) + " dimensions needs at least " +
                          std::to_string(out_dim) + " points, got " + std::to_string(n));
  }
  if (!points.allFinite()) throw ValidationError("PCA input has non-finite values");

  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Eigen::MatrixXd centered = points.rowwise() - mean;
  const double dof = n > 1 ? static_cast<double>(n - 1) : 1.0;

  PcaResult out;
  out.coordinates = Eigen::MatrixXd::Zero(n, out_dim);
  out.axis_variance = Eigen::VectorXd::Zero(out_dim);
  out.total_variance = centered.squaredNorm() / dof;
  if (points.cols() == 0 || out.total_variance == 0.0) return out;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv(0) * 1e-12 * static_cast<double>(std::max(n, points.cols()));
  const Eigen::Index usable = std::min<Eigen::Index>(out_dim, sv.size());
  for (Eigen::Index axis = 0; axis < usable; ++axis) {
    if (sv(axis) <= cutoff) break;
    Eigen::VectorXd column = centered * svd.matrixV().col(axis);
    Eigen::Index extreme = 0;
    column.cwiseAbs().maxCoeff(&extreme);
    if (column(extreme) < 0.0) column = -column;
    out.coordinates.col(axis) = column;
    out.axis_variance(axis) = sv(axis) * sv(axis) / dof;
  }
  return out;
}

std::string ColorScale::color(double deviation) const {
  const double t = std::clamp((deviation - center) / clip, -1.0, 1.0);
  const double neutral[3] = {247, 247, 247};
  const double low[3] = {33, 102, 172};
  const double high[3] = {178, 24, 43};
  const double* target = t < 0.0 ? low : high;
  const double w = std::abs(t);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(neutral[c] + w * (target[c] - neutral[c])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

nlohmann::json TreeDrawing::to_json() const {
  nlohmann::json j;
  j["sentence_id"] = sentence_id;
  j["title"] = title;
  j["tokens"] = tokens;
  auto& pts = j["points"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    pts.push_back({coordinates(i, 0), coordinates(i, 1)});
  }
  auto& s = j["solid"] = nlohmann::json::array();
  for (const auto& e : solid) {
    s.push_back({{"head", e.head},
                 {"dependent", e.dependent},
                 {"label", e.label},
                 {"squared_distance", e.squared_distance},
                 {"deviation", e.deviation},
                 {"color", scale.color(e.deviation)}});
  }
  auto& d = j["dotted"] = nlohmann::json::array();
  for (const auto& e : dotted) {
    d.push_back({{"a", e.a},
                 {"b", e.b},
                 {"squared_distance", e.squared_distance},
                 {"tree_distance", e.tree_distance}});
  }
  j["dotted_threshold"] = dotted_threshold;
  j["color_scale"] = {{"center", scale.center}, {"clip", scale.clip}, {"scheme", scale.scheme}};
  return j;
}

std::string drawing_json_text(const TreeDrawing& drawing) { return drawing.to_json().dump(2) + "\n"; }

namespace {

constexpr double kPanelWidth = 480.0;
constexpr double kPanelHeight = 400.0;
constexpr double kMargin = 40.0;

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void draw_panel(std::ostringstream& svg, const TreeDrawing& d, double offset_x) {
  const auto& xy = d.coordinates;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  if (xy.rows() > 0) {
    min_x = xy.col(0).minCoeff(), max_x = xy.col(0).maxCoeff();
    min_y = xy.col(1).minCoeff(), max_y = xy.col(1).maxCoeff();
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const double scale = std::min(kPanelWidth, kPanelHeight - 20.0) - 2 * kMargin;
  auto px = [&](Eigen::Index i) { return offset_x + kMargin + (xy(i, 0) - min_x) / span * scale; };
  auto py = [&](Eigen::Index i) { return kPanelHeight - kMargin - (xy(i, 1) - min_y) / span * scale; };

  svg << "<g class=\"panel\">\n";
  svg << "<text x=\"" << offset_x + kMargin << "\" y=\"20\" font-size=\"14\">"
      << xml_escape(d.title) << "</text>\n";
  for (const auto& e : d.dotted) {
    svg << "<line class=\"dotted\" x1=\"" << px(e.a) << "\" y1=\"" << py(e.a) << "\" x2=\""
        << px(e.b) << "\" y2=\"" << py(e.b)
        << "\" stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"3,3\"/>\n";
  }
  for (const auto& e : d.solid) {
    svg << "<line class=\"solid\" x1=\"" << px(e.head) << "\" y1=\"" << py(e.head) << "\" x2=\""
        << px(e.dependent) << "\" y2=\"" << py(e.dependent) << "\" stroke=\""
        << d.scale.color(e.deviation) << "\" stroke-width=\"3\"><title>" << xml_escape(e.label)
        << " deviation " << e.deviation << "</title></line>\n";
  }
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    svg << "<circle cx=\"" << px(i) << "\" cy=\"" << py(i) << "\" r=\"3\" fill=\"#333333\"/>\n";
    svg << "<text x=\"" << px(i) + 5 << "\" y=\"" << py(i) - 5 << "\" font-size=\"11\">"
        << xml_escape(i < static_cast<Eigen::Index>(d.tokens.size()) ? d.tokens[i] : "") << "</text>\n";
  }
  svg << "</g>\n";
}

}  // namespace

std::string render_svg(std::span<const TreeDrawing> panel) {
  std::ostringstream svg;
  svg.precision(6);
  const double width = kPanelWidth * static_cast<double>(std::max<std::size_t>(panel.size(), 1));
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << kPanelHeight << "\" viewBox=\"0 0 " << width << ' ' << kPanelHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panel.size(); ++i) draw_panel(svg, panel[i], kPanelWidth * i);
  svg << "</svg>\n";
  return svg.str();
}

std::string render_svg(const TreeDrawing& drawing) { return render_svg(std::span(&drawing, 1)); }

namespace {

Eigen::MatrixXd pairwise_squared(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) sq(i, j) = (p.row(i) - p.row(j)).squaredNorm();
  }
  return sq;
}

}  // namespace

TreeDrawing build_tree_drawing(std::span<const std::string> tokens, const DependencyParse& parse,
                               const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                               const ProbeMatrix& probe, double dotted_threshold) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (parse.size() != n || embeddings.rows() != n) {
    throw ValidationError("token count mismatch: " + std::to_string(n) + " tokens, " +
                          std::to_string(parse.size()) + " parse nodes, " +
                          std::to_string(embeddings.rows()) + " embeddings");
  }
  TreeDrawing d;
  d.tokens.assign(tokens.begin(), tokens.end());
  d.dotted_threshold = dotted_threshold;

  const Eigen::MatrixXd projected = apply_probe(probe, embeddings);
  const Eigen::MatrixXd sq = pairwise_squared(projected);
  const Eigen::MatrixXi dist = tree_distance_matrix(parse.tree);

  for (int i = 0; i < n; ++i) {
    const int head = parse.parents[i];
    if (head < 0) continue;
    d.solid.push_back({head, i, parse.deprels[i], sq(head, i), sq(head, i) - 1.0});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (dist(i, j) >= 2 && sq(i, j) < dist(i, j) - dotted_threshold) {
        d.dotted.push_back({i, j, sq(i, j), dist(i, j)});
      }
    }
  }

  const int axes = static_cast<int>(std::min<Eigen::Index>(2, n));
  d.coordinates = Eigen::MatrixXd::Zero(n, 2);
  if (n > 0) d.coordinates.leftCols(axes) = pca_project(projected, axes).coordinates;
  return d;
}

TreeDrawing build_tree_drawing(const EmbeddedSentence& sentence, int layer, const ProbeMatrix& probe,
                               double dotted_threshold) {
  if (!sentence.parse) throw ValidationError("sentence '" + sentence.id + "' has no parse");
  auto d = build_tree_drawing(sentence.tokens, *sentence.parse, sentence.layer_matrix(layer), probe,
                              dotted_threshold);
  d.sentence_id = sentence.id;
  d.title = sentence.id + " (layer " + std::to_string(layer) + ")";
  return d;
}

EdgeLengthTable per_dependency_edge_lengths(const EmbeddingCorpus& corpus, int layer,
                                            const ProbeMatrix& probe) {
  EdgeLengthTable table;
  std::map<std::string, double> sums;
  for (const auto& s : corpus.sentences) {
    if (!s.parse) continue;
    const Eigen::MatrixXd projected = apply_probe(probe, s.layer_matrix(layer));
    for (int i = 0; i < s.size(); ++i) {
      const int head = s.parse->parents[i];
      if (head < 0) continue;
      const auto& label = s.parse->deprels[i];
      sums[label] += (projected.row(head) - projected.row(i)).squaredNorm();
      ++table[label].count;
    }
  }
  for (auto& [label, entry] : table) entry.mean_squared_length = sums[label] / entry.count;
  return table;
}

nlohmann::json to_json(const EdgeLengthTable& table) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [label, e] : table) {
    j[label] = {{"mean_squared_length", e.mean_squared_length}, {"count", e.count}};
  }
  return j;
}

std::array<TreeDrawing, 4> comparison_panel(std::span<const std::string> tokens,
                                            const DependencyParse& parse,
                                            const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                            const ProbeMatrix& probe, int dim, std::uint64_t seed,
                                            double dotted_threshold) {
  if (dim < 1) throw ValidationError("panel dimension must be positive");
  const Tree& tree = parse.tree;
  const int n = tree.size();

  std::array<TreeDrawing, 4> panel;
  panel[0] = build_tree_drawing(tokens, parse, embeddings, probe, dotted_threshold);
  panel[0].title = "probe-transformed embedding";

  Eigen::MatrixXd canonical = canonical_pythagorean_embedding<double>(tree).points;
  if (canonical.cols() == 0) canonical = Eigen::MatrixXd::Zero(n, 1);
  panel[1] = build_tree_drawing(tokens, parse, canonical, ProbeMatrix::identity(canonical.cols()),
                                dotted_threshold);
  panel[1].title = "canonical Pythagorean embedding";

  const auto branch = random_branch_embedding(tree, dim, seed);
  panel[2] = build_tree_drawing(tokens, parse, branch.points, ProbeMatrix::identity(dim),
                                dotted_threshold);
  panel[2].title = "random branch embedding";

  double mean_distance = 1.0;
  if (n >= 2) {
    const Eigen::MatrixXi dist = tree_distance_matrix(tree);
    mean_distance = static_cast<double>(dist.sum()) / (static_cast<double>(n) * (n - 1));
  }
  // E||x - y||^2 = 2 * variance * dim for i.i.d. N(0, variance I) points.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, std::sqrt(mean_distance / (2.0 * dim)));
  Eigen::MatrixXd random(n, dim);
  for (Eigen::Index i = 0; i < random.size(); ++i) random.data()[i] = gauss(rng);
  panel[3] = build_tree_drawing(tokens, parse, random, ProbeMatrix::identity(dim), dotted_threshold);
  panel[3].title = "random embedding";

  for (auto& d : panel) d.sentence_id = panel[0].sentence_id;
  return panel;
}

}  // namespace embgeom
