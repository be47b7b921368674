#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/ingest.hpp"
#include "embgeom/probe_matrix.hpp"

namespace embgeom {

struct PcaResult {
  Eigen::MatrixXd coordinates;   // points x out_dim
  Eigen::VectorXd axis_variance; // variance captured by each output axis
  double total_variance = 0.0;

  double captured_fraction() const {
    return total_variance > 0.0 ? axis_variance.sum() / total_variance : 0.0;
  }
};

// Mean-centres the rows and projects them onto the top `out_dim` right
// singular vectors. Each output axis is signed so that its largest-magnitude
// coordinate is positive. Axes beyond the rank of the data are zero.
PcaResult pca_project(const Eigen::Ref<const Eigen::MatrixXd>& points, int out_dim);

struct SolidEdge {
  int head = 0;
  int dependent = 0;
  std::string label;
  double squared_distance = 0.0;  // probe space, before PCA
  double deviation = 0.0;         // squared_distance - tree distance (1)
};

struct DottedEdge {
  int a = 0;
  int b = 0;
  double squared_distance = 0.0;
  int tree_distance = 0;
};

// Diverging map centred at `center`, saturating at +-`clip`.
struct ColorScale {
  double center = 0.0;
  double clip = 2.0;
  std::string scheme = "blue-white-red";

  // "#rrggbb"; negative deviations (too close) blue, positive red.
  std::string color(double deviation) const;
};

struct TreeDrawing {
  std::string sentence_id;
  std::string title;
  std::vector<std::string> tokens;
  Eigen::MatrixXd coordinates;  // tokens x 2
  std::vector<SolidEdge> solid;
  std::vector<DottedEdge> dotted;
  double dotted_threshold = 1.0;
  ColorScale scale;

  nlohmann::json to_json() const;
};

// Canonical JSON text of a drawing; shared by the CLI and the HTTP service.
std::string drawing_json_text(const TreeDrawing& drawing);
// Self-contained SVG with solid edges coloured by deviation and dotted edges dashed.
std::string render_svg(const TreeDrawing& drawing);
std::string render_svg(std::span<const TreeDrawing> panel);

// Solid edge per dependency with deviation ||B^T h_i - B^T h_j||^2 - 1; dotted
// edge for every non-adjacent pair whose squared probe distance is below
// d_tree - dotted_threshold. Coordinates are the 2-D PCA of the probe-space points.
TreeDrawing build_tree_drawing(std::span<const std::string> tokens, const DependencyParse& parse,
                               const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                               const ProbeMatrix& probe, double dotted_threshold = 1.0);
TreeDrawing build_tree_drawing(const EmbeddedSentence& sentence, int layer,
                               const ProbeMatrix& probe, double dotted_threshold = 1.0);

struct EdgeLength {
  double mean_squared_length = 0.0;
  long count = 0;
};
using EdgeLengthTable = std::map<std::string, EdgeLength>;

// Mean ||B^T h_head - B^T h_dep||^2 per dependency label over all parsed sentences.
EdgeLengthTable per_dependency_edge_lengths(const EmbeddingCorpus& corpus, int layer,
                                            const ProbeMatrix& probe);
nlohmann::json to_json(const EdgeLengthTable& table);

// (a) probe-transformed embeddings, (b) canonical Pythagorean embedding of the
// parse tree, (c) random branch embedding in R^dim, (d) i.i.d. Gaussian points
// in R^dim scaled so the mean squared pair distance matches the mean tree
// distance. Drawings (b)-(d) use the identity probe.
std::array<TreeDrawing, 4> comparison_panel(std::span<const std::string> tokens,
                                            const DependencyParse& parse,
                                            const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                            const ProbeMatrix& probe, int dim, std::uint64_t seed,
                                            double dotted_threshold = 1.0);

}  // namespace embgeom
