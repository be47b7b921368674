#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/error.hpp"
#include "embgeom/ingest.hpp"
#include "embgeom/probe_matrix.hpp"

namespace embgeom {

// The same keyword used in two senses in two sentences, plus the sentence
// formed by joining them. Positions are 0-based token indices.
struct SensePair {
  std::string keyword;
  std::string sentence_a;
  std::string sense_a;
  int position_a = 0;
  std::string sentence_b;
  std::string sense_b;
  int position_b = 0;
  std::string concat_id;
  int concat_position_a = 0;
  int concat_position_b = 0;

  static SensePair from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// JSON lines, one SensePair object per line.
std::vector<SensePair> read_sense_pairs(const std::filesystem::path& path);
void write_sense_pairs(std::span<const SensePair> pairs, const std::filesystem::path& path);

enum class CentroidPolicy {
  all_occurrences,  // every occurrence of the sense in individual sentences
  leave_out_pair,   // excludes the pair's own two keyword instances
};

struct PairCentroids {
  Eigen::VectorXd matching_a, opposing_a;
  Eigen::VectorXd matching_b, opposing_b;
};

// Sense centroids of the keyword at `layer` over individual sentences (probe
// applied first when given). Returns nullopt when either sense has no
// remaining occurrence.
std::optional<PairCentroids> matching_opposing_centroids(const SensePair& pair,
                                                         const EmbeddingCorpus& corpus, int layer,
                                                         CentroidPolicy policy,
                                                         const ProbeMatrix* probe = nullptr);

struct SimilarityRatio {
  double value = 0.0;
  bool flagged = false;  // cos(e, opposing) <= 0; the sign is kept
};

// cos(e, matching) / cos(e, opposing).
template <typename A, typename B, typename C>
SimilarityRatio similarity_ratio(const Eigen::MatrixBase<A>& keyword, const Eigen::MatrixBase<B>& matching,
                                 const Eigen::MatrixBase<C>& opposing) {
  const double nk = keyword.norm(), nm = matching.norm(), no = opposing.norm();
  if (nk == 0.0 || nm == 0.0 || no == 0.0) {
    throw ValidationError("similarity ratio of a zero vector");
  }
  if (keyword.size() != matching.size() || keyword.size() != opposing.size()) {
    throw ValidationError("similarity ratio arguments differ in dimension");
  }
  const double to_matching = keyword.dot(matching) / (nk * nm);
  const double to_opposing = keyword.dot(opposing) / (nk * no);
  SimilarityRatio r;
  r.flagged = !(to_opposing > 0.0);
  r.value = to_opposing != 0.0 ? to_matching / to_opposing
                               : std::copysign(std::numeric_limits<double>::infinity(), to_matching);
  return r;
}

struct LayerRatios {
  int layer = 0;
  bool probed = false;
  long instances = 0;
  long flagged = 0;
  double mean_individual = 0.0;
  double mean_concatenated = 0.0;
  double misclassified_individual = 0.0;    // fraction of instances with ratio < 1
  double misclassified_concatenated = 0.0;
  std::vector<double> individual;   // per keyword instance, two per pair (A then B)
  std::vector<double> concatenated;
};

struct RatioReport {
  std::vector<LayerRatios> layers;
  std::optional<LayerRatios> probed_final_layer;
  long pairs_used = 0;
  long pairs_skipped = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json(bool include_instances = false) const;
  // Tab-separated: layer, mean individual ratio, mean concatenated ratio.
  std::string plot_data() const;
};

struct ExperimentOptions {
  CentroidPolicy policy = CentroidPolicy::leave_out_pair;
  std::vector<int> layers;  // empty: every stored layer
};

// Per-layer means of the individual and concatenated similarity ratios. With a
// probe, the final layer is additionally scored on probe-transformed
// embeddings. Pairs failing validation (missing sentence, keyword mismatch,
// empty centroid) are skipped with a warning; requested layers outside the
// corpus are omitted with a warning.
RatioReport run_experiment(std::span<const SensePair> pairs, const EmbeddingCorpus& corpus,
                           const ProbeMatrix* probe = nullptr, const ExperimentOptions& opts = {});

}  // namespace embgeom
