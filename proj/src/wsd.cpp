#include "embgeom/wsd.hpp"

#include <fstream>
#include <sstream>

namespace embgeom {

void SenseInventory::add(const std::string& lemma, const std::string& sense, long count) {
  if (count < 0) throw ValidationError("sense counts must be non-negative");
  counts[lowercase(lemma)][sense] += count;
}

bool SenseInventory::contains(const std::string& lemma) const {
  return counts.count(lowercase(lemma)) > 0;
}

std::optional<std::string> SenseInventory::most_frequent(const std::string& lemma) const {
  const auto it = counts.find(lowercase(lemma));
  if (it == counts.end() || it->second.empty()) return std::nullopt;
  const std::string* best = nullptr;
  long best_count = -1;
  for (const auto& [sense, count] : it->second) {
    if (count > best_count) {
      best = &sense;
      best_count = count;
    }
  }
  return *best;
}

SenseInventory SenseInventory::from_json(const nlohmann::json& j) {
  SenseInventory inv;
  for (const auto& [lemma, senses] : j.items()) {
    for (const auto& [sense, count] : senses.items()) inv.add(lemma, sense, count.get<long>());
  }
  return inv;
}

nlohmann::json SenseInventory::to_json() const { return counts; }

std::string CentroidModel::classify(const Eigen::VectorXd& embedding,
                                    const std::string& lemma) const {
  const auto it = centroids.find(lowercase(lemma));
  if (it == centroids.end() || it->second.empty()) {
    return fallback.most_frequent(lemma).value_or(kUnknownSense);
  }
  const Eigen::VectorXd query = probe ? Eigen::VectorXd(probe->entries.transpose() * embedding)
                                      : embedding;
  const std::string* best = nullptr;
  double best_distance = 0.0;
  for (const auto& c : it->second) {
    if (c.centroid.size() != query.size()) {
      throw ValidationError("query dim " + std::to_string(query.size()) +
                            " does not match centroid dim " + std::to_string(c.centroid.size()));
    }
    const double d = (c.centroid - query).squaredNorm();
    // Senses are sorted, so strict comparison keeps the smallest id on ties.
    if (!best || d < best_distance) {
      best = &c.sense;
      best_distance = d;
    }
  }
  return *best;
}

CentroidModel fit_centroids(std::span<const SenseOccurrence> training, int layer,
                            const ProbeMatrix* probe, SenseInventory fallback) {
  if (training.empty()) throw ValidationError("cannot fit centroids on an empty corpus");
  CentroidModel model;
  model.layer = layer;
  model.fallback = std::move(fallback);
  if (probe) model.probe = *probe;

  std::map<std::string, std::map<std::string, std::pair<Eigen::VectorXd, long>>> sums;
  const Eigen::Index dim = training.front().embedding.size();
  for (const auto& occ : training) {
    if (occ.embedding.size() != dim) throw ValidationError("training embeddings differ in dimension");
    const Eigen::VectorXd x = probe ? Eigen::VectorXd(apply_probe(*probe, std::span(&occ.embedding, 1))[0])
                                    : occ.embedding;
    auto& [sum, count] = sums[lowercase(occ.lemma)][occ.sense];
    if (count == 0) sum = Eigen::VectorXd::Zero(x.size());
    sum += x;
    ++count;
    model.training_counts.add(occ.lemma, occ.sense);
  }
  for (auto& [lemma, senses] : sums) {
    auto& list = model.centroids[lemma];
    for (auto& [sense, acc] : senses) {
      list.push_back({sense, acc.first / static_cast<double>(acc.second), acc.second});
    }
  }
  return model;
}

CentroidModel fit_centroids(const EmbeddingCorpus& training, int layer, const ProbeMatrix* probe,
                            SenseInventory fallback) {
  const auto occ = collect_sense_occurrences(training, layer);
  return fit_centroids(occ, layer, probe, std::move(fallback));
}

nlohmann::json WsdScore::to_json() const {
  return {{"total", total},         {"attempted", attempted}, {"correct", correct},
          {"precision", precision}, {"recall", recall},       {"f1", f1},
          {"accuracy", accuracy}};
}

WsdScore evaluate_f1(const CentroidModel& model, std::span<const SenseOccurrence> test) {
  if (test.empty()) throw ValidationError("cannot evaluate on an empty test set");
  WsdScore s;
  for (const auto& occ : test) {
    const auto predicted = model.classify(occ.embedding, occ.lemma);
    ++s.total;
    if (predicted == kUnknownSense) continue;
    ++s.attempted;
    if (predicted == occ.sense) ++s.correct;
  }
  s.precision = s.attempted > 0 ? static_cast<double>(s.correct) / s.attempted : 0.0;
  s.recall = static_cast<double>(s.correct) / s.total;
  s.accuracy = s.recall;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::vector<LayerScore> evaluate_layers(const EmbeddingCorpus& train, const EmbeddingCorpus& test,
                                        std::span<const int> layers, const ProbeMatrix* probe,
                                        const SenseInventory& fallback) {
  std::vector<LayerScore> out;
  for (int layer : layers) {
    const auto model = fit_centroids(train, layer, probe, fallback);
    const auto occ = collect_sense_occurrences(test, layer);
    out.push_back({layer, evaluate_f1(model, occ)});
  }
  return out;
}

void save_centroid_model(const CentroidModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["format"] = "centroid-model-v1";
  index["layer"] = model.layer;
  index["training_counts"] = model.training_counts.to_json();
  index["fallback"] = model.fallback.to_json();
  Eigen::Index dim = -1;
  std::vector<float> block;
  auto& entries = index["centroids"] = nlohmann::json::array();
  for (const auto& [lemma, list] : model.centroids) {
    for (const auto& c : list) {
      if (dim < 0) dim = c.centroid.size();
      entries.push_back({{"lemma", lemma}, {"sense", c.sense}, {"count", c.count}});
      for (Eigen::Index i = 0; i < c.centroid.size(); ++i) block.push_back(static_cast<float>(c.centroid(i)));
    }
  }
  index["dim"] = std::max<Eigen::Index>(dim, 0);
  if (model.probe) {
    std::ostringstream probe_bytes;
    write_probe_matrix(*model.probe, probe_bytes);
    std::ofstream(dir / "probe.bin", std::ios::binary | std::ios::trunc) << probe_bytes.str();
    index["probe"] = "probe.bin";
  }
  std::ofstream blob(dir / "centroids.f32", std::ios::binary | std::ios::trunc);
  blob.write(reinterpret_cast<const char*>(block.data()),
             static_cast<std::streamsize>(block.size() * sizeof(float)));
  std::ofstream(dir / "index.json", std::ios::trunc) << index.dump(1) << '\n';
}

CentroidModel load_centroid_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw FormatError((dir / "index.json").string(), "cannot open");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "index.json").string(), e.what());
  }
  if (index.value("format", "") != "centroid-model-v1") {
    throw FormatError((dir / "index.json").string(), "not a centroid-model-v1 index");
  }
  CentroidModel model;
  model.layer = index.at("layer").get<int>();
  model.training_counts = SenseInventory::from_json(index.at("training_counts"));
  model.fallback = SenseInventory::from_json(index.at("fallback"));
  if (index.contains("probe")) model.probe = read_probe_matrix(dir / index["probe"].get<std::string>());

  const auto dim = index.at("dim").get<Eigen::Index>();
  const auto& entries = index.at("centroids");
  std::vector<float> block(static_cast<std::size_t>(dim) * entries.size());
  std::ifstream blob(dir / "centroids.f32", std::ios::binary);
  blob.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(block.size() * sizeof(float)));
  if (static_cast<std::size_t>(blob.gcount()) != block.size() * sizeof(float)) {
    throw FormatError((dir / "centroids.f32").string(), "centroid block is truncated");
  }
  for (std::size_t e = 0; e < entries.size(); ++e) {
    SenseCentroid c;
    c.sense = entries[e].at("sense").get<std::string>();
    c.count = entries[e].at("count").get<long>();
    c.centroid = Eigen::Map<const Eigen::VectorXf>(block.data() + e * dim, dim).cast<double>();
    model.centroids[entries[e].at("lemma").get<std::string>()].push_back(std::move(c));
  }
  return model;
}

}  // namespace embgeom
