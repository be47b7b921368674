#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/ingest.hpp"
#include "embgeom/probe_matrix.hpp"
#include "embgeom/senses.hpp"

namespace embgeom {

inline const std::string kUnknownSense = "UNKNOWN";

// lemma -> sense -> occurrence count. Lemmas are stored lower-cased.
struct SenseInventory {
  std::map<std::string, std::map<std::string, long>> counts;

  void add(const std::string& lemma, const std::string& sense, long count = 1);
  bool contains(const std::string& lemma) const;
  // Highest count; ties go to the lexicographically smallest sense id.
  std::optional<std::string> most_frequent(const std::string& lemma) const;

  static SenseInventory from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SenseCentroid {
  std::string sense;
  Eigen::VectorXd centroid;
  long count = 0;
};

struct CentroidModel {
  int layer = 0;
  std::optional<ProbeMatrix> probe;  // applied to embeddings before centroiding
  SenseInventory training_counts;
  SenseInventory fallback;           // most-frequent-sense table for lemmas absent from training
  std::map<std::string, std::vector<SenseCentroid>> centroids;  // sorted by sense id

  // Nearest centroid in Euclidean distance over the lemma's senses, ties to the
  // smallest sense id. Lemmas absent from training fall back to the fallback
  // table's most frequent sense, then to kUnknownSense.
  std::string classify(const Eigen::VectorXd& embedding, const std::string& lemma) const;
};

CentroidModel fit_centroids(std::span<const SenseOccurrence> training, int layer,
                            const ProbeMatrix* probe = nullptr, SenseInventory fallback = {});
CentroidModel fit_centroids(const EmbeddingCorpus& training, int layer,
                            const ProbeMatrix* probe = nullptr, SenseInventory fallback = {});

struct WsdScore {
  long total = 0;
  long attempted = 0;  // instances that did not get kUnknownSense
  long correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;

  nlohmann::json to_json() const;
};

// precision = correct / attempted, recall = correct / total; F1 equals accuracy
// whenever every instance receives a sense.
WsdScore evaluate_f1(const CentroidModel& model, std::span<const SenseOccurrence> test);

struct LayerScore {
  int layer = 0;
  WsdScore score;
};

// Fits and scores one model per layer.
std::vector<LayerScore> evaluate_layers(const EmbeddingCorpus& train, const EmbeddingCorpus& test,
                                        std::span<const int> layers,
                                        const ProbeMatrix* probe = nullptr,
                                        const SenseInventory& fallback = {});

// Directory with index.json (lemmas, senses, counts, layer, probe) and
// centroids.f32 holding the centroid rows in index order.
void save_centroid_model(const CentroidModel& model, const std::filesystem::path& dir);
CentroidModel load_centroid_model(const std::filesystem::path& dir);

}  // namespace embgeom
