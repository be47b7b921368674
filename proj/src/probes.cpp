#include "embgeom/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace embgeom {

// ---------------------------------------------------------------------------
// Config

void ProbeTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (!(l2_lambda >= 0.0)) throw ValidationError("l2_lambda must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  if (!(lr_decay > 0.0)) throw ValidationError("lr_decay must be positive");
}

ProbeTrainConfig ProbeTrainConfig::from_json(const nlohmann::json& j) {
  ProbeTrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.l2_lambda = j.value("l2_lambda", cfg.l2_lambda);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
  cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
  cfg.validate();
  return cfg;
}

nlohmann::json ProbeTrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size},       {"l2_lambda", l2_lambda},
          {"seed", seed},                   {"train_fraction", train_fraction},
          {"lr_decay", lr_decay}};
}

// ---------------------------------------------------------------------------
// Linear probe

int LinearProbe::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dim()) {
    throw ValidationError("input dim " + std::to_string(x.size()) + " does not match probe dim " +
                          std::to_string(input_dim()));
  }
  if (is_binary()) return weights.row(0).dot(x) + bias(0) >= 0.0 ? 1 : 0;
  Eigen::Index best = 0;
  (weights * x + bias).maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<int> LinearProbe::predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  std::vector<int> out(rows.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out[r] = predict(rows.row(r).transpose());
  return out;
}

void write_linear_probe(const LinearProbe& probe, std::ostream& out) {
  const Eigen::Index rows = probe.weights.rows(), cols = probe.weights.cols();
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(rows * cols + rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) payload.push_back(probe.weights(r, c));
  }
  for (Eigen::Index r = 0; r < rows; ++r) payload.push_back(probe.bias(r));
  nlohmann::json header{{"format", "linear-probe-v1"}, {"classes", probe.classes},
                        {"rows", rows},                {"cols", cols},
                        {"l2_lambda", probe.l2_lambda}};
  detail::write_header_and_payload(out, header, payload.data(), payload.size());
}

void write_linear_probe(const LinearProbe& probe, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  write_linear_probe(probe, out);
}

LinearProbe read_linear_probe(std::istream& in, const std::string& source) {
  const auto header = detail::read_header(in, source);
  if (header.value("format", "") != "linear-probe-v1") {
    throw FormatError(source, "not a linear-probe-v1 file");
  }
  LinearProbe probe;
  probe.classes = header.at("classes").get<std::vector<std::string>>();
  probe.l2_lambda = header.value("l2_lambda", 0.0);
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  const bool shape_ok = rows >= 1 && cols >= 1 && probe.classes.size() >= 2 &&
                        (rows == 1 ? probe.classes.size() == 2
                                   : static_cast<Eigen::Index>(probe.classes.size()) == rows);
  if (!shape_ok) throw FormatError(source, "weight rows do not match class list");
  std::vector<double> payload(static_cast<std::size_t>(rows * cols + rows));
  detail::read_payload(in, source, payload.data(), payload.size());
  probe.weights.resize(rows, cols);
  probe.bias.resize(rows);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) probe.weights(r, c) = payload[at++];
  }
  for (Eigen::Index r = 0; r < rows; ++r) probe.bias(r) = payload[at++];
  if (!probe.weights.allFinite() || !probe.bias.allFinite()) {
    throw FormatError(source, "probe weights are not finite");
  }
  return probe;
}

LinearProbe read_linear_probe(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return read_linear_probe(in, path.string());
}

LabeledExamples LabeledExamples::subset(std::span<const std::size_t> rows) const {
  LabeledExamples out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD trainers

namespace {

void check_examples(const LabeledExamples& data) {
  if (data.size() == 0) throw ValidationError("training set is empty");
  if (static_cast<std::size_t>(data.features.rows()) != data.size()) {
    throw ValidationError("feature rows do not match label count");
  }
  if (!data.features.allFinite()) throw ValidationError("features contain non-finite values");
  std::set<int> present(data.labels.begin(), data.labels.end());
  for (int label : present) {
    if (label < 0 || label >= static_cast<int>(data.classes.size())) {
      throw ValidationError("label index out of range");
    }
  }
  if (present.size() < 2) throw ValidationError("training set contains a single class");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Calls step(batch_rows, lr) for every mini-batch of every epoch.
template <typename Step>
void run_sgd(std::size_t n, const ProbeTrainConfig& cfg, Step&& step) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      step(std::span<const std::size_t>(order.data() + start, stop - start), lr);
    }
    lr *= cfg.lr_decay;
  }
}

}  // namespace

LinearProbe train_logistic_binary(const LabeledExamples& data, const ProbeTrainConfig& cfg) {
  cfg.validate();
  check_examples(data);
  if (data.classes.size() != 2) throw ValidationError("binary probe needs exactly two classes");

  const Eigen::Index dim = data.features.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  double b = 0.0;
  Eigen::VectorXd grad(dim);
  run_sgd(data.size(), cfg, [&](std::span<const std::size_t> batch, double lr) {
    grad.setZero();
    double grad_b = 0.0;
    for (std::size_t row : batch) {
      const auto x = data.features.row(static_cast<Eigen::Index>(row));
      const double g = sigmoid(x.dot(w) + b) - (data.labels[row] == 1 ? 1.0 : 0.0);
      grad.noalias() += g * x.transpose();
      grad_b += g;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    w -= lr * (grad * inv + cfg.l2_lambda * w);
    b -= lr * grad_b * inv;
  });

  LinearProbe probe;
  probe.classes = data.classes;
  probe.weights = w.transpose();
  probe.bias = Eigen::VectorXd::Constant(1, b);
  probe.l2_lambda = cfg.l2_lambda;
  return probe;
}

LinearProbe train_logistic_multiclass(const LabeledExamples& data, const ProbeTrainConfig& cfg) {
  cfg.validate();
  check_examples(data);
  const auto classes = static_cast<Eigen::Index>(data.classes.size());
  const Eigen::Index dim = data.features.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(classes, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(classes);
  Eigen::MatrixXd grad(classes, dim);
  Eigen::VectorXd grad_b(classes), prob(classes);
  run_sgd(data.size(), cfg, [&](std::span<const std::size_t> batch, double lr) {
    grad.setZero();
    grad_b.setZero();
    for (std::size_t row : batch) {
      const auto x = data.features.row(static_cast<Eigen::Index>(row));
      prob = w * x.transpose() + b;
      prob = (prob.array() - prob.maxCoeff()).exp();
      prob /= prob.sum();
      prob(data.labels[row]) -= 1.0;
      grad.noalias() += prob * x;
      grad_b += prob;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    w -= lr * (grad * inv + cfg.l2_lambda * w);
    b -= lr * grad_b * inv;
  });

  LinearProbe probe;
  probe.classes = data.classes;
  probe.weights = std::move(w);
  probe.bias = std::move(b);
  probe.l2_lambda = cfg.l2_lambda;
  return probe;
}

// ---------------------------------------------------------------------------
// Metrics

ProbeMetrics score_predictions(std::span<const std::string> gold,
                               std::span<const std::string> predicted,
                               std::span<const std::string> trained_classes) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("gold and predicted label counts differ");
  }
  ProbeMetrics m;
  m.total = static_cast<long>(gold.size());
  std::set<std::string> trained(trained_classes.begin(), trained_classes.end());
  std::map<std::string, long> correct;
  for (const auto& c : trained_classes) m.per_class[c];
  long hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++m.per_class[gold[i]].support;
    ++m.per_class[predicted[i]].predicted;
    if (gold[i] == predicted[i]) {
      ++hits;
      ++correct[gold[i]];
    }
  }
  for (auto& [label, cm] : m.per_class) {
    const long tp = correct[label];
    cm.precision = cm.predicted > 0 ? static_cast<double>(tp) / cm.predicted : 0.0;
    cm.recall = cm.support > 0 ? static_cast<double>(tp) / cm.support : 0.0;
    if (!trained.count(label)) {
      cm.unseen_in_training = true;
      m.unseen_classes.push_back(label);
    }
  }
  m.accuracy = m.total > 0 ? static_cast<double>(hits) / m.total : 0.0;
  return m;
}

ProbeMetrics evaluate_probe(const LinearProbe& probe, const LabeledExamples& data) {
  if (data.features.cols() != probe.input_dim()) {
    throw ValidationError("dataset dim " + std::to_string(data.features.cols()) +
                          " does not match probe dim " + std::to_string(probe.input_dim()));
  }
  std::vector<std::string> gold, predicted;
  gold.reserve(data.size());
  predicted.reserve(data.size());
  const auto predictions = probe.predict_rows(data.features);
  for (std::size_t i = 0; i < data.size(); ++i) {
    gold.push_back(data.classes.at(data.labels[i]));
    predicted.push_back(probe.classes.at(predictions[i]));
  }
  return score_predictions(gold, predicted, probe.classes);
}

nlohmann::json ProbeMetrics::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["total"] = total;
  auto& classes = j["per_class"] = nlohmann::json::object();
  for (const auto& [label, cm] : per_class) {
    classes[label] = {{"precision", cm.precision},
                      {"recall", cm.recall},
                      {"support", cm.support},
                      {"unseen_in_training", cm.unseen_in_training}};
  }
  j["unseen_classes"] = unseen_classes;
  return j;
}

std::string ProbeMetrics::table() const {
  std::ostringstream out;
  out << std::left << std::setw(16) << "class" << std::right << std::setw(11) << "precision"
      << std::setw(9) << "recall" << std::setw(10) << "n" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& [label, cm] : per_class) {
    out << std::left << std::setw(16) << (cm.unseen_in_training ? label + "*" : label)
        << std::right << std::setw(11) << cm.precision << std::setw(9) << cm.recall
        << std::setw(10) << cm.support << '\n';
  }
  out << std::left << std::setw(16) << "accuracy" << std::right << std::setw(11)
      << std::setprecision(4) << accuracy << std::setw(19) << total << '\n';
  if (!unseen_classes.empty()) out << "* class not seen in training\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Attention probes

namespace {

LabeledExamples make_examples(const AttentionDataset& data, std::vector<std::size_t> rows,
                              std::vector<std::string> classes,
                              const std::function<std::string(const AttentionRecord&)>& label_of) {
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = static_cast<int>(c);
  LabeledExamples out;
  out.classes = std::move(classes);
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.vector_length());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = data.records[rows[i]];
    out.features.row(static_cast<Eigen::Index>(i)) = rec.values.cast<double>().transpose();
    out.labels.push_back(index.at(label_of(rec)));
  }
  return out;
}

std::string binary_label(const AttentionRecord& r) { return r.has_relation ? "true" : "false"; }

// Per-class shuffled row lists.
std::vector<std::vector<std::size_t>> rows_by_class(const LabeledExamples& data,
                                                    std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> groups(data.classes.size());
  for (std::size_t i = 0; i < data.size(); ++i) groups[data.labels[i]].push_back(i);
  for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
  return groups;
}

struct Split {
  std::vector<std::size_t> train, test;
};

Split stratified_split(const std::vector<std::vector<std::size_t>>& groups, double train_fraction,
                       std::size_t max_train, std::size_t max_test) {
  std::vector<std::size_t> train_n(groups.size()), test_n(groups.size());
  std::size_t total_train = 0, total_test = 0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    train_n[c] = static_cast<std::size_t>(std::llround(train_fraction * groups[c].size()));
    test_n[c] = groups[c].size() - train_n[c];
    total_train += train_n[c];
    total_test += test_n[c];
  }
  auto cap = [](std::vector<std::size_t>& counts, std::size_t total, std::size_t limit) {
    if (total <= limit) return;
    const double scale = static_cast<double>(limit) / static_cast<double>(total);
    for (auto& n : counts) n = static_cast<std::size_t>(std::floor(n * scale));
  };
  cap(train_n, total_train, max_train);
  cap(test_n, total_test, max_test);

  Split split;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const auto& g = groups[c];
    const std::size_t train_end = std::min(g.size(), train_n[c]);
    split.train.insert(split.train.end(), g.begin(), g.begin() + train_end);
    const std::size_t test_end = std::min(g.size(), train_end + test_n[c]);
    split.test.insert(split.test.end(), g.begin() + train_end, g.begin() + test_end);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

AttentionProbeRun fit_and_score(const LabeledExamples& all, const Split& split,
                                const ProbeTrainConfig& cfg, bool binary) {
  const auto train = all.subset(split.train);
  const auto test = all.subset(split.test);
  AttentionProbeRun run;
  run.probe = binary ? train_logistic_binary(train, cfg) : train_logistic_multiclass(train, cfg);
  run.train_metrics = evaluate_probe(run.probe, train);
  if (test.size() > 0) run.test_metrics = evaluate_probe(run.probe, test);
  run.train_size = train.size();
  run.test_size = test.size();
  return run;
}

}  // namespace

LabeledExamples binary_examples(const AttentionDataset& data) {
  std::vector<std::size_t> rows(data.records.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return make_examples(data, std::move(rows), {"false", "true"}, binary_label);
}

LabeledExamples relation_examples(const AttentionDataset& data) {
  std::set<std::string> labels;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.records[i].relation.empty()) continue;
    labels.insert(data.records[i].relation);
    rows.push_back(i);
  }
  return make_examples(data, std::move(rows), {labels.begin(), labels.end()},
                       [](const AttentionRecord& r) { return r.relation; });
}

AttentionProbeRun train_attention_binary(const AttentionDataset& data, const ProbeTrainConfig& cfg) {
  cfg.validate();
  const auto all = binary_examples(data);
  if (all.size() == 0) throw ValidationError("attention dataset is empty");
  std::mt19937_64 rng(cfg.seed);
  auto groups = rows_by_class(all, rng);
  if (groups[0].empty() || groups[1].empty()) {
    throw ValidationError("binary attention probe needs both labels; dataset has a single class");
  }
  const std::size_t parity = std::min(groups[0].size(), groups[1].size());
  for (auto& g : groups) g.resize(parity);
  const auto split = stratified_split(groups, cfg.train_fraction, SIZE_MAX, SIZE_MAX);
  return fit_and_score(all, split, cfg, /*binary=*/true);
}

AttentionProbeRun train_attention_multiclass(const AttentionDataset& data,
                                             const ProbeTrainConfig& cfg,
                                             const MulticlassOptions& opts) {
  cfg.validate();
  const auto filtered = filter_relations(data, opts.filter);
  const auto all = relation_examples(filtered);
  if (all.classes.size() < 2) {
    throw ValidationError("fewer than two relation classes remain after filtering (>" +
                          std::to_string(opts.filter.min_examples) + " examples each)");
  }
  std::mt19937_64 rng(cfg.seed);
  const auto groups = rows_by_class(all, rng);
  const auto split = stratified_split(groups, cfg.train_fraction, opts.max_train, opts.max_test);
  return fit_and_score(all, split, cfg, /*binary=*/false);
}

nlohmann::json AttentionProbeRun::to_json() const {
  return {{"train_size", train_size},
          {"test_size", test_size},
          {"classes", probe.classes},
          {"train", train_metrics.to_json()},
          {"test", test_metrics.to_json()}};
}

// ---------------------------------------------------------------------------
// Structural probe

ProbeMatrix random_probe(Eigen::Index k, Eigen::Index m, std::uint64_t seed) {
  if (k < 1 || m < 1 || m > k) throw ValidationError("probe shape needs 1 <= m <= k");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
  Eigen::MatrixXd b(k, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    for (Eigen::Index r = 0; r < k; ++r) b(r, c) = gauss(rng);
  }
  return ProbeMatrix(std::move(b));
}

namespace {

struct ParsedBlock {
  Eigen::MatrixXd embeddings;  // tokens x k
  Eigen::MatrixXd distances;   // tree distances
  double pairs = 0.0;
};

std::vector<ParsedBlock> parsed_blocks(const EmbeddingCorpus& corpus, int layer) {
  if (layer < 0 || layer >= corpus.meta.layers) {
    throw ValidationError("layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(corpus.meta.layers) + ")");
  }
  std::vector<ParsedBlock> blocks;
  for (const auto& s : corpus.sentences) {
    if (!s.parse || s.size() < 2) continue;
    const double n = s.size();
    blocks.push_back({s.layer_matrix(layer), tree_distance_matrix(s.parse->tree).cast<double>(),
                      n * (n - 1) / 2});
  }
  return blocks;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& projected) {
  const Eigen::MatrixXd gram = projected * projected.transpose();
  const Eigen::VectorXd diag = gram.diagonal();
  Eigen::MatrixXd sq = (-2.0 * gram).colwise() + diag;
  sq.rowwise() += diag.transpose();
  return sq.cwiseMax(0.0);
}

double block_loss(const ParsedBlock& block, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd sq = squared_distances(block.embeddings * b);
  // Each unordered pair appears twice off the diagonal; the diagonal is zero.
  return 0.5 * (sq - block.distances).cwiseAbs().sum() / block.pairs;
}

double mean_loss(const std::vector<ParsedBlock>& blocks, const Eigen::MatrixXd& b) {
  if (blocks.empty()) return 0.0;
  double total = 0.0;
  for (const auto& block : blocks) total += block_loss(block, b);
  return total / static_cast<double>(blocks.size());
}

}  // namespace

double structural_probe_loss(const EmbeddingCorpus& corpus, int layer, const ProbeMatrix& probe) {
  if (probe.input_dim() != corpus.meta.dim) {
    throw ValidationError("probe input dim does not match corpus dim");
  }
  return mean_loss(parsed_blocks(corpus, layer), probe.entries);
}

TrainedProbe train_structural_probe(const EmbeddingCorpus& corpus, int layer, int rank,
                                    const ProbeTrainConfig& cfg, const ProbeMatrix* init) {
  cfg.validate();
  const auto blocks = parsed_blocks(corpus, layer);
  if (blocks.empty()) throw ValidationError("no parsed sentences with at least two tokens");
  Eigen::MatrixXd b = init ? init->entries : random_probe(corpus.meta.dim, rank, cfg.seed).entries;
  if (b.rows() != corpus.meta.dim || b.cols() != rank) {
    throw ValidationError("initial probe shape does not match (dim, rank)");
  }

  TrainedProbe out;
  out.loss_history.push_back(mean_loss(blocks, b));
  Eigen::MatrixXd grad(b.rows(), b.cols());
  ProbeTrainConfig per_epoch = cfg;
  per_epoch.epochs = 1;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    per_epoch.seed = cfg.seed + static_cast<std::uint64_t>(epoch);
    per_epoch.learning_rate = lr;
    run_sgd(blocks.size(), per_epoch, [&](std::span<const std::size_t> batch, double step) {
      grad.setZero();
      for (std::size_t idx : batch) {
        const auto& block = blocks[idx];
        const Eigen::MatrixXd projected = block.embeddings * b;
        Eigen::MatrixXd weights =
            (squared_distances(projected) - block.distances).array().sign().matrix() / block.pairs;
        weights.diagonal().setZero();
        // sum_{i<j} w_ij (h_i - h_j)(p_i - p_j)^T == H^T L P with L the graph Laplacian of w.
        Eigen::MatrixXd laplacian = -weights;
        laplacian.diagonal() = weights.rowwise().sum();
        grad.noalias() += 2.0 * block.embeddings.transpose() * (laplacian * projected);
      }
      grad /= static_cast<double>(batch.size());
      b -= step * (grad + cfg.l2_lambda * b);
    });
    lr *= cfg.lr_decay;
    out.loss_history.push_back(mean_loss(blocks, b));
  }
  out.probe = ProbeMatrix(std::move(b), {{"kind", "structural"}, {"layer", layer}, {"rank", rank}});
  return out;
}

// ---------------------------------------------------------------------------
// Semantic probe

std::vector<SenseOccurrence> semantic_training_set(std::span<const SenseOccurrence> occurrences) {
  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& o : occurrences) ++counts[o.lemma][o.sense];
  std::set<std::string> keep;
  for (const auto& [lemma, senses] : counts) {
    const bool ok = senses.size() >= 2 &&
                    std::all_of(senses.begin(), senses.end(), [](const auto& s) { return s.second >= 2; });
    if (ok) keep.insert(lemma);
  }
  std::vector<SenseOccurrence> out;
  for (const auto& o : occurrences) {
    if (keep.count(o.lemma)) out.push_back(o);
  }
  return out;
}

namespace {

struct IndexPair {
  std::size_t a, b;
};

struct SensePairs {
  std::vector<IndexPair> same, diff;
};

SensePairs enumerate_pairs(std::span<const SenseOccurrence> occ) {
  std::map<std::string, std::vector<std::size_t>> by_lemma;
  for (std::size_t i = 0; i < occ.size(); ++i) by_lemma[occ[i].lemma].push_back(i);
  SensePairs pairs;
  for (const auto& [lemma, idx] : by_lemma) {
    for (std::size_t x = 0; x < idx.size(); ++x) {
      for (std::size_t y = x + 1; y < idx.size(); ++y) {
        auto& bucket = occ[idx[x]].sense == occ[idx[y]].sense ? pairs.same : pairs.diff;
        bucket.push_back({idx[x], idx[y]});
      }
    }
  }
  return pairs;
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const double denom = u.norm() * v.norm();
  return denom > 0.0 ? u.dot(v) / denom : 0.0;
}

double mean_cosine(std::span<const SenseOccurrence> occ, const std::vector<IndexPair>& pairs) {
  double total = 0.0;
  for (const auto& p : pairs) total += cosine(occ[p.a].embedding, occ[p.b].embedding);
  return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

double clip(double value, double center, double half_width) {
  if (std::isinf(half_width)) return value;
  return std::clamp(value, center - half_width, center + half_width);
}

}  // namespace

SensePairBaselines sense_pair_baselines(std::span<const SenseOccurrence> occurrences) {
  const auto pairs = enumerate_pairs(occurrences);
  return {mean_cosine(occurrences, pairs.same), mean_cosine(occurrences, pairs.diff),
          pairs.same.size(), pairs.diff.size()};
}

SemanticProbeResult train_semantic_probe(std::span<const SenseOccurrence> occurrences, int rank,
                                         const ClampSpec& clamp, const ProbeTrainConfig& cfg) {
  cfg.validate();
  if (!(clamp.half_width > 0.0)) throw ValidationError("clamp half_width must be positive");
  const auto occ = semantic_training_set(occurrences);
  const auto pairs = enumerate_pairs(occ);
  if (pairs.same.empty() || pairs.diff.empty()) {
    throw ValidationError("no qualifying same-sense and different-sense pairs");
  }
  const Eigen::Index k = occ.front().embedding.size();
  for (const auto& o : occ) {
    if (o.embedding.size() != k) throw ValidationError("sense embeddings differ in dimension");
  }

  SemanticProbeResult result;
  result.baselines = {mean_cosine(occ, pairs.same), mean_cosine(occ, pairs.diff),
                      pairs.same.size(), pairs.diff.size()};
  const double base_same = clamp.baseline_same.value_or(result.baselines.same);
  const double base_diff = clamp.baseline_diff.value_or(result.baselines.diff);
  for (double base : {base_same, base_diff}) {
    if (base < -1.0 || base > 1.0) throw ValidationError("clamp baselines must lie in [-1, 1]");
  }
  const double w = clamp.half_width;

  Eigen::MatrixXd b = random_probe(k, rank, cfg.seed).entries;

  auto full_loss = [&](const Eigen::MatrixXd& m) {
    auto term = [&](const std::vector<IndexPair>& list, double base) {
      double total = 0.0;
      for (const auto& p : list) {
        total += clip(cosine(m.transpose() * occ[p.a].embedding, m.transpose() * occ[p.b].embedding),
                      base, w);
      }
      return total / static_cast<double>(list.size());
    };
    return term(pairs.diff, base_diff) - term(pairs.same, base_same);
  };

  // Adds coeff * d clip(cos(B^T u, B^T v)) / dB to grad.
  Eigen::MatrixXd grad(k, rank);
  auto accumulate = [&](const IndexPair& p, double base, double coeff) {
    const Eigen::VectorXd& u = occ[p.a].embedding;
    const Eigen::VectorXd& v = occ[p.b].embedding;
    const Eigen::VectorXd pu = b.transpose() * u;
    const Eigen::VectorXd pv = b.transpose() * v;
    const double nu = pu.norm(), nv = pv.norm();
    if (nu == 0.0 || nv == 0.0) return;
    const double c = pu.dot(pv) / (nu * nv);
    if (!std::isinf(w) && (c <= base - w || c >= base + w)) return;
    const Eigen::VectorXd gu = pv / (nu * nv) - c * pu / (nu * nu);
    const Eigen::VectorXd gv = pu / (nu * nv) - c * pv / (nv * nv);
    grad.noalias() += coeff * (u * gu.transpose() + v * gv.transpose());
  };

  std::mt19937_64 rng(cfg.seed);
  auto same = pairs.same;
  auto diff = pairs.diff;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (std::max(same.size(), diff.size()) + batch - 1) / batch;
  double lr = cfg.learning_rate;
  result.trained.loss_history.push_back(full_loss(b));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(same.begin(), same.end(), rng);
    std::shuffle(diff.begin(), diff.end(), rng);
    for (std::size_t step = 0; step < steps; ++step) {
      grad.setZero();
      const std::size_t ns = std::min(batch, same.size());
      const std::size_t nd = std::min(batch, diff.size());
      for (std::size_t i = 0; i < nd; ++i) {
        accumulate(diff[(step * batch + i) % diff.size()], base_diff, 1.0 / nd);
      }
      for (std::size_t i = 0; i < ns; ++i) {
        accumulate(same[(step * batch + i) % same.size()], base_same, -1.0 / ns);
      }
      b -= lr * (grad + cfg.l2_lambda * b);
    }
    lr *= cfg.lr_decay;
    result.trained.loss_history.push_back(full_loss(b));
  }
  nlohmann::json meta{{"kind", "semantic"},
                      {"rank", rank},
                      {"baseline_same", base_same},
                      {"baseline_diff", base_diff}};
  meta["half_width"] = std::isinf(w) ? nlohmann::json("inf") : nlohmann::json(w);
  result.trained.probe = ProbeMatrix(std::move(b), std::move(meta));
  return result;
}

// ---------------------------------------------------------------------------
// Subspace comparison

SubspaceComparison compare_probe_subspaces(const ProbeMatrix& a, const ProbeMatrix& b) {
  if (a.input_dim() != b.input_dim()) {
    throw ValidationError("A^T B needs equal input dims, got " + std::to_string(a.input_dim()) +
                          " and " + std::to_string(b.input_dim()));
  }
  if (a.rank() != b.rank()) {
    throw ValidationError("A B^T needs equal ranks, got " + std::to_string(a.rank()) + " and " +
                          std::to_string(b.rank()));
  }
  SubspaceComparison out;
  out.at_b = Eigen::JacobiSVD<Eigen::MatrixXd>(a.entries.transpose() * b.entries).singularValues();
  out.a_bt = Eigen::JacobiSVD<Eigen::MatrixXd>(a.entries * b.entries.transpose()).singularValues();
  return out;
}

}  // namespace embgeom
