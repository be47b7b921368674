#include "embgeom/concat_experiment.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "embgeom/senses.hpp"

namespace embgeom {

SensePair SensePair::from_json(const nlohmann::json& j) {
  SensePair p;
  p.keyword = j.at("keyword").get<std::string>();
  p.sentence_a = j.at("sentence_a").get<std::string>();
  p.sense_a = j.at("sense_a").get<std::string>();
  p.position_a = j.at("position_a").get<int>();
  p.sentence_b = j.at("sentence_b").get<std::string>();
  p.sense_b = j.at("sense_b").get<std::string>();
  p.position_b = j.at("position_b").get<int>();
  p.concat_id = j.at("concat_id").get<std::string>();
  p.concat_position_a = j.at("concat_position_a").get<int>();
  p.concat_position_b = j.at("concat_position_b").get<int>();
  if (p.sense_a == p.sense_b) throw ValidationError("sense pair uses the same sense twice");
  return p;
}

nlohmann::json SensePair::to_json() const {
  return {{"keyword", keyword},
          {"sentence_a", sentence_a},
          {"sense_a", sense_a},
          {"position_a", position_a},
          {"sentence_b", sentence_b},
          {"sense_b", sense_b},
          {"position_b", position_b},
          {"concat_id", concat_id},
          {"concat_position_a", concat_position_a},
          {"concat_position_b", concat_position_b}};
}

std::vector<SensePair> read_sense_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  std::vector<SensePair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      pairs.push_back(SensePair::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno), e.what());
    }
  }
  return pairs;
}

void write_sense_pairs(std::span<const SensePair> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  for (const auto& p : pairs) out << p.to_json().dump() << '\n';
}

namespace {

struct Instance {
  std::string sentence;
  int token;
  bool operator==(const Instance&) const = default;
};

struct SenseSum {
  Eigen::VectorXd sum;
  long count = 0;
  std::vector<std::pair<Instance, Eigen::VectorXd>> members;
};

// (lemma, sense) -> running sum over individual sentences at one layer.
class SenseIndex {
 public:
  SenseIndex(const EmbeddingCorpus& corpus, int layer, const ProbeMatrix* probe) {
    for (const auto& s : corpus.sentences) {
      if (s.kind != "individual") continue;
      for (int t = 0; t < static_cast<int>(s.senses.size()); ++t) {
        if (!s.senses[t]) continue;
        Eigen::VectorXd x = s.embedding(layer, t);
        if (probe) x = probe->entries.transpose() * x;
        auto& acc = sums_[{token_lemma(s, t), *s.senses[t]}];
        if (acc.count == 0) acc.sum = Eigen::VectorXd::Zero(x.size());
        acc.sum += x;
        ++acc.count;
        acc.members.push_back({{s.id, t}, std::move(x)});
      }
    }
  }

  std::optional<Eigen::VectorXd> centroid(const std::string& lemma, const std::string& sense,
                                          std::span<const Instance> excluded) const {
    const auto it = sums_.find({lemma, sense});
    if (it == sums_.end()) return std::nullopt;
    Eigen::VectorXd sum = it->second.sum;
    long count = it->second.count;
    for (const auto& [inst, x] : it->second.members) {
      for (const auto& ex : excluded) {
        if (inst == ex) {
          sum -= x;
          --count;
        }
      }
    }
    if (count <= 0) return std::nullopt;
    return Eigen::VectorXd(sum / static_cast<double>(count));
  }

 private:
  std::map<std::pair<std::string, std::string>, SenseSum> sums_;
};

std::optional<PairCentroids> centroids_from_index(const SenseIndex& index, const SensePair& pair,
                                                  CentroidPolicy policy) {
  const std::string lemma = lowercase(pair.keyword);
  std::vector<Instance> excluded;
  if (policy == CentroidPolicy::leave_out_pair) {
    excluded = {{pair.sentence_a, pair.position_a}, {pair.sentence_b, pair.position_b}};
  }
  auto a = index.centroid(lemma, pair.sense_a, excluded);
  auto b = index.centroid(lemma, pair.sense_b, excluded);
  if (!a || !b) return std::nullopt;
  return PairCentroids{*a, *b, *b, *a};
}

// Empty string when the keyword sits at the recorded positions.
std::string check_pair(const SensePair& pair, const EmbeddingCorpus& corpus) {
  const std::string lemma = lowercase(pair.keyword);
  auto check = [&](const std::string& id, int pos, const char* role) -> std::string {
    const auto* s = corpus.find(id);
    if (!s) return std::string(role) + " sentence '" + id + "' not in corpus";
    if (pos < 0 || pos >= s->size()) return std::string(role) + " position out of range";
    if (token_lemma(*s, pos) != lemma && lowercase(s->tokens[pos]) != lemma) {
      return std::string(role) + " token '" + s->tokens[pos] + "' is not the keyword";
    }
    return {};
  };
  for (auto msg : {check(pair.sentence_a, pair.position_a, "A"),
                   check(pair.sentence_b, pair.position_b, "B"),
                   check(pair.concat_id, pair.concat_position_a, "concat A"),
                   check(pair.concat_id, pair.concat_position_b, "concat B")}) {
    if (!msg.empty()) return msg;
  }
  return {};
}

Eigen::VectorXd keyword_vector(const EmbeddingCorpus& corpus, const std::string& id, int pos,
                               int layer, const ProbeMatrix* probe) {
  Eigen::VectorXd x = corpus.find(id)->embedding(layer, pos);
  if (probe) x = probe->entries.transpose() * x;
  return x;
}

void summarize(LayerRatios& r) {
  r.instances = static_cast<long>(r.individual.size());
  if (r.instances == 0) return;
  long wrong_ind = 0, wrong_cat = 0;
  double sum_ind = 0.0, sum_cat = 0.0;
  for (std::size_t i = 0; i < r.individual.size(); ++i) {
    sum_ind += r.individual[i];
    sum_cat += r.concatenated[i];
    wrong_ind += r.individual[i] < 1.0;
    wrong_cat += r.concatenated[i] < 1.0;
  }
  const double n = static_cast<double>(r.instances);
  r.mean_individual = sum_ind / n;
  r.mean_concatenated = sum_cat / n;
  r.misclassified_individual = wrong_ind / n;
  r.misclassified_concatenated = wrong_cat / n;
}

LayerRatios score_layer(std::span<const SensePair> pairs, std::span<const char> usable,
                        const EmbeddingCorpus& corpus, int layer, const ProbeMatrix* probe,
                        CentroidPolicy policy, RatioReport& report, bool count_skips) {
  LayerRatios out;
  out.layer = layer;
  out.probed = probe != nullptr;
  const SenseIndex index(corpus, layer, probe);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!usable[p]) continue;
    const auto& pair = pairs[p];
    const auto centroids = centroids_from_index(index, pair, policy);
    if (!centroids) {
      if (count_skips) {
        ++report.pairs_skipped;
        report.warnings.push_back("pair " + std::to_string(p) + " ('" + pair.keyword +
                                  "'): a sense has no occurrences for its centroid");
      }
      continue;
    }
    if (count_skips) ++report.pairs_used;
    auto add = [&](const Eigen::VectorXd& individual, const Eigen::VectorXd& joined,
                   const Eigen::VectorXd& matching, const Eigen::VectorXd& opposing) {
      const auto ri = similarity_ratio(individual, matching, opposing);
      const auto rc = similarity_ratio(joined, matching, opposing);
      out.flagged += ri.flagged + rc.flagged;
      out.individual.push_back(ri.value);
      out.concatenated.push_back(rc.value);
    };
    add(keyword_vector(corpus, pair.sentence_a, pair.position_a, layer, probe),
        keyword_vector(corpus, pair.concat_id, pair.concat_position_a, layer, probe),
        centroids->matching_a, centroids->opposing_a);
    add(keyword_vector(corpus, pair.sentence_b, pair.position_b, layer, probe),
        keyword_vector(corpus, pair.concat_id, pair.concat_position_b, layer, probe),
        centroids->matching_b, centroids->opposing_b);
  }
  summarize(out);
  return out;
}

nlohmann::json layer_json(const LayerRatios& r, bool include_instances) {
  nlohmann::json j{{"layer", r.layer},
                   {"probed", r.probed},
                   {"instances", r.instances},
                   {"flagged", r.flagged},
                   {"mean_individual_ratio", r.mean_individual},
                   {"mean_concatenated_ratio", r.mean_concatenated},
                   {"misclassified_individual", r.misclassified_individual},
                   {"misclassified_concatenated", r.misclassified_concatenated}};
  if (include_instances) {
    j["individual"] = r.individual;
    j["concatenated"] = r.concatenated;
  }
  return j;
}

}  // namespace

std::optional<PairCentroids> matching_opposing_centroids(const SensePair& pair,
                                                         const EmbeddingCorpus& corpus, int layer,
                                                         CentroidPolicy policy,
                                                         const ProbeMatrix* probe) {
  if (layer < 0 || layer >= corpus.meta.layers) throw ValidationError("layer out of range");
  return centroids_from_index(SenseIndex(corpus, layer, probe), pair, policy);
}

RatioReport run_experiment(std::span<const SensePair> pairs, const EmbeddingCorpus& corpus,
                           const ProbeMatrix* probe, const ExperimentOptions& opts) {
  if (probe && probe->input_dim() != corpus.meta.dim) {
    throw ValidationError("probe input dim does not match corpus dim");
  }
  RatioReport report;
  std::vector<int> layers = opts.layers;
  if (layers.empty()) {
    for (int l = 0; l < corpus.meta.layers; ++l) layers.push_back(l);
  }

  std::vector<char> usable(pairs.size(), 1);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto problem = check_pair(pairs[p], corpus);
    if (!problem.empty()) {
      usable[p] = 0;
      ++report.pairs_skipped;
      report.warnings.push_back("pair " + std::to_string(p) + " skipped: " + problem);
    }
  }

  bool counted = false;
  for (int layer : layers) {
    if (layer < 0 || layer >= corpus.meta.layers) {
      report.warnings.push_back("layer " + std::to_string(layer) + " not in corpus; omitted");
      continue;
    }
    report.layers.push_back(score_layer(pairs, usable, corpus, layer, nullptr, opts.policy,
                                        report, !counted));
    counted = true;
  }
  if (probe) {
    report.probed_final_layer = score_layer(pairs, usable, corpus, corpus.meta.layers - 1,
                                            probe, opts.policy, report, !counted);
  }
  return report;
}

nlohmann::json RatioReport::to_json(bool include_instances) const {
  nlohmann::json j;
  j["pairs_used"] = pairs_used;
  j["pairs_skipped"] = pairs_skipped;
  auto& list = j["layers"] = nlohmann::json::array();
  for (const auto& r : layers) list.push_back(layer_json(r, include_instances));
  j["probed_final_layer"] =
      probed_final_layer ? layer_json(*probed_final_layer, include_instances) : nlohmann::json(nullptr);
  j["warnings"] = warnings;
  return j;
}

std::string RatioReport::plot_data() const {
  std::ostringstream out;
  out.precision(17);
  out << "layer\tindividual\tconcatenated\n";
  for (const auto& r : layers) {
    out << r.layer << '\t' << r.mean_individual << '\t' << r.mean_concatenated << '\n';
  }
  return out.str();
}

}  // namespace embgeom
