#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
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

struct ProbeTrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  int batch_size = 32;
  double l2_lambda = 1e-4;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  // Learning rate at epoch e is learning_rate * lr_decay^e.
  double lr_decay = 1.0;

  void validate() const;
  static ProbeTrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Linear classifier. Binary probes carry one weight row (logistic model over
// classes {"false", "true"}); multiclass probes carry one row per class
// (softmax).
struct LinearProbe {
  std::vector<std::string> classes;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  double l2_lambda = 0.0;

  bool is_binary() const noexcept { return weights.rows() == 1; }
  Eigen::Index input_dim() const noexcept { return weights.cols(); }

  // Index into `classes`.
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<int> predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;
};

void write_linear_probe(const LinearProbe& probe, const std::filesystem::path& path);
void write_linear_probe(const LinearProbe& probe, std::ostream& out);
LinearProbe read_linear_probe(const std::filesystem::path& path);
LinearProbe read_linear_probe(std::istream& in, const std::string& source = "<stream>");

// Rows of `features` are examples; labels index into `classes`.
struct LabeledExamples {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> classes;

  std::size_t size() const noexcept { return labels.size(); }
  LabeledExamples subset(std::span<const std::size_t> rows) const;
};

// Logistic loss with an L2 penalty on the weights (not the bias), minimised by
// mini-batch SGD over a seeded shuffle. Deterministic given cfg.seed.
LinearProbe train_logistic_binary(const LabeledExamples& data, const ProbeTrainConfig& cfg);
// Multinomial logistic (softmax) counterpart.
LinearProbe train_logistic_multiclass(const LabeledExamples& data, const ProbeTrainConfig& cfg);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  long support = 0;    // gold examples
  long predicted = 0;  // examples predicted as this class
  bool unseen_in_training = false;
};

struct ProbeMetrics {
  double accuracy = 0.0;
  long total = 0;
  std::map<std::string, ClassMetrics> per_class;
  std::vector<std::string> unseen_classes;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Precision and recall per class; a class never predicted has precision 0.
// `trained_classes` lists the labels the probe can emit; gold labels outside
// it are reported with zero precision/recall and listed in unseen_classes.
ProbeMetrics score_predictions(std::span<const std::string> gold,
                               std::span<const std::string> predicted,
                               std::span<const std::string> trained_classes);
ProbeMetrics evaluate_probe(const LinearProbe& probe, const LabeledExamples& data);

// ---------------------------------------------------------------------------
// Attention probes

// has_relation as "true"/"false".
LabeledExamples binary_examples(const AttentionDataset& data);
// Records with a relation string; classes sorted by label.
LabeledExamples relation_examples(const AttentionDataset& data);

struct AttentionProbeRun {
  LinearProbe probe;
  ProbeMetrics train_metrics;
  ProbeMetrics test_metrics;
  std::size_t train_size = 0;
  std::size_t test_size = 0;

  nlohmann::json to_json() const;
};

// Downsamples the majority class to parity, makes a stratified split with
// cfg.train_fraction in the training part, trains and scores the held-out part.
AttentionProbeRun train_attention_binary(const AttentionDataset& data, const ProbeTrainConfig& cfg);

struct MulticlassOptions {
  RelationFilter filter;
  std::size_t max_train = 300000;
  std::size_t max_test = 150000;
};

// Keeps relations passing `opts.filter`, then a stratified split capped at
// max_train / max_test examples.
AttentionProbeRun train_attention_multiclass(const AttentionDataset& data,
                                             const ProbeTrainConfig& cfg,
                                             const MulticlassOptions& opts = {});

// ---------------------------------------------------------------------------
// Structural and semantic probes

struct TrainedProbe {
  ProbeMatrix probe;
  std::vector<double> loss_history;  // loss after each epoch; entry 0 is before training
};

// Gaussian k x m matrix with entries N(0, 1/k).
ProbeMatrix random_probe(Eigen::Index k, Eigen::Index m, std::uint64_t seed);

// Mean over parsed sentences (length >= 2) of the per-sentence mean over token
// pairs of |d_tree(i, j) - ||B^T (h_i - h_j)||^2|.
double structural_probe_loss(const EmbeddingCorpus& corpus, int layer, const ProbeMatrix& probe);

// Minimises structural_probe_loss by mini-batch SGD over sentences. Starts from
// `init` when given, otherwise from random_probe(k, rank, cfg.seed).
TrainedProbe train_structural_probe(const EmbeddingCorpus& corpus, int layer, int rank,
                                    const ProbeTrainConfig& cfg,
                                    const ProbeMatrix* init = nullptr);

struct ClampSpec {
  double half_width = 0.1;
  // Computed on the untransformed training embeddings when absent.
  std::optional<double> baseline_same;
  std::optional<double> baseline_diff;

  static constexpr double unclamped = std::numeric_limits<double>::infinity();
};

// Occurrences of lemmas with at least two senses, each sense having at least
// two occurrences.
std::vector<SenseOccurrence> semantic_training_set(std::span<const SenseOccurrence> occurrences);

struct SensePairBaselines {
  double same = 0.0;
  double diff = 0.0;
  std::size_t same_pairs = 0;
  std::size_t diff_pairs = 0;
};

// Mean cosine similarity over same-sense and different-sense pairs of the same
// lemma, on the embeddings as given.
SensePairBaselines sense_pair_baselines(std::span<const SenseOccurrence> occurrences);

struct SemanticProbeResult {
  TrainedProbe trained;
  SensePairBaselines baselines;
};

// Minimises mean_diff clip(cos(B^T u, B^T v), b_diff +- w)
//         - mean_same clip(cos(B^T u, B^T v), b_same +- w)
// over same-lemma pairs, starting from random_probe(k, rank, cfg.seed). Each SGD
// step uses cfg.batch_size same-sense and cfg.batch_size different-sense pairs.
SemanticProbeResult train_semantic_probe(std::span<const SenseOccurrence> occurrences, int rank,
                                         const ClampSpec& clamp, const ProbeTrainConfig& cfg);

struct SubspaceComparison {
  Eigen::VectorXd at_b;  // singular values of A^T B, descending
  Eigen::VectorXd a_bt;  // singular values of A B^T, descending
};

SubspaceComparison compare_probe_subspaces(const ProbeMatrix& a, const ProbeMatrix& b);

}  // namespace embgeom
