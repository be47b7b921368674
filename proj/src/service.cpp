#include "embgeom/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <iostream>
#include <set>

#include "embgeom/senses.hpp"

namespace embgeom {

nlohmann::json QueryResult::to_json() const {
  nlohmann::json j;
  j["word"] = word;
  j["layer"] = layer;
  j["method"] = method;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"x", p.x},
                   {"y", p.y},
                   {"sentence_id", p.sentence_id},
                   {"token", p.token},
                   {"text", p.text},
                   {"sense", p.sense ? nlohmann::json(*p.sense) : nlohmann::json(nullptr)}});
  }
  j["suggestions"] = suggestions;
  return j;
}

int resolve_probe_layer(const ProbeMatrix& probe, const EmbeddingCorpus& corpus,
                        std::optional<int> requested) {
  int layer = corpus.meta.layers - 1;
  if (requested) {
    layer = *requested;
  } else if (probe.metadata.contains("layer") && probe.metadata["layer"].is_number_integer()) {
    const int recorded = probe.metadata["layer"].get<int>();
    if (recorded >= 0 && recorded < corpus.meta.layers) layer = recorded;
  }
  if (layer < 0 || layer >= corpus.meta.layers) {
    throw ValidationError("layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(corpus.meta.layers) + ")");
  }
  return layer;
}

std::map<std::string, ProbeMatrix> load_probe_directory(const std::filesystem::path& dir) {
  std::map<std::string, ProbeMatrix> probes;
  if (dir.empty()) return probes;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".probe") {
      probes.emplace(entry.path().stem().string(), read_probe_matrix(entry.path()));
    }
  }
  return probes;
}

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

HttpReply json_reply(int status, const nlohmann::json& body) { return {status, body.dump() + "\n"}; }

HttpReply error_reply(int status, const std::string& message) {
  return json_reply(status, {{"error", message}, {"status", status}});
}

std::optional<std::string> param(const std::multimap<std::string, std::string>& params,
                                 const std::string& key) {
  const auto it = params.find(key);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

std::optional<int> int_param(const std::multimap<std::string, std::string>& params,
                             const std::string& key) {
  const auto text = param(params, key);
  if (!text) return std::nullopt;
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(*text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text->size()) throw ValidationError(key + " must be an integer");
  return value;
}

}  // namespace

ExplorerService::ExplorerService(EmbeddingCorpus corpus, std::map<std::string, ProbeMatrix> probes,
                                 double dotted_threshold)
    : corpus_(std::move(corpus)), probes_(std::move(probes)), dotted_threshold_(dotted_threshold) {
  corpus_.validate();
  std::set<std::string> vocab;
  for (const auto& s : corpus_.sentences) {
    for (const auto& t : s.tokens) vocab.insert(lowercase(t));
  }
  vocabulary_.assign(vocab.begin(), vocab.end());
}

QueryResult ExplorerService::query_word(const std::string& word, int layer, int limit) const {
  if (layer < 0 || layer >= corpus_.meta.layers) {
    throw ValidationError("layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(corpus_.meta.layers) + ")");
  }
  if (limit < 1) throw ValidationError("limit must be positive");
  QueryResult result;
  result.word = word;
  result.layer = layer;
  const std::string key = lowercase(word);

  std::vector<const EmbeddedSentence*> sources;
  for (const auto& s : corpus_.sentences) {
    for (int t = 0; t < s.size() && static_cast<int>(result.points.size()) < limit; ++t) {
      if (lowercase(s.tokens[t]) != key) continue;
      QueryPoint p;
      p.sentence_id = s.id;
      p.token = t;
      p.text = join_tokens(s.tokens);
      if (!s.senses.empty()) p.sense = s.senses[t];
      result.points.push_back(std::move(p));
      sources.push_back(&s);
    }
  }

  if (result.points.empty()) {
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto& v : vocabulary_) ranked.emplace_back(edit_distance(key, v), v);
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) result.suggestions.push_back(ranked[i].second);
    return result;
  }

  const auto n = static_cast<Eigen::Index>(result.points.size());
  Eigen::MatrixXd embeddings(n, corpus_.meta.dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    embeddings.row(i) = sources[i]->layers[layer].row(result.points[i].token).cast<double>();
  }
  const int axes = static_cast<int>(std::min<Eigen::Index>(2, n));
  const auto pca = pca_project(embeddings, axes);
  for (Eigen::Index i = 0; i < n; ++i) {
    result.points[i].x = pca.coordinates(i, 0);
    result.points[i].y = axes > 1 ? pca.coordinates(i, 1) : 0.0;
  }
  return result;
}

TreeDrawing ExplorerService::query_tree(const std::string& sentence_id, const std::string& probe_id,
                                        std::optional<int> layer) const {
  const auto* sentence = corpus_.find(sentence_id);
  if (!sentence) throw NotFoundError("unknown sentence '" + sentence_id + "'");
  const auto it = probes_.find(probe_id);
  if (it == probes_.end()) throw NotFoundError("unknown probe '" + probe_id + "'");
  if (!sentence->parse) throw NotFoundError("sentence '" + sentence_id + "' has no parse");
  const int resolved = resolve_probe_layer(it->second, corpus_, layer);
  return build_tree_drawing(*sentence, resolved, it->second, dotted_threshold_);
}

nlohmann::json ExplorerService::meta() const {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& [id, p] : probes_) {
    probes.push_back({{"id", id}, {"input_dim", p.input_dim()}, {"rank", p.rank()}, {"metadata", p.metadata}});
  }
  long parsed = 0;
  for (const auto& s : corpus_.sentences) parsed += s.parse.has_value();
  return {{"api", "v1"},
          {"model", corpus_.meta.model},
          {"layers", corpus_.meta.layers},
          {"heads", corpus_.meta.heads},
          {"dim", corpus_.meta.dim},
          {"wordpiece", corpus_.meta.wordpiece},
          {"sentences", corpus_.sentences.size()},
          {"parsed_sentences", parsed},
          {"probes", probes}};
}

HttpReply ExplorerService::handle(const std::string& path,
                                  const std::multimap<std::string, std::string>& params) const {
  try {
    if (path == "/v1/meta") return json_reply(200, meta());

    const std::string words = "/v1/words/";
    if (path.rfind(words, 0) == 0 && path.size() > words.size()) {
      const std::string word = path.substr(words.size());
      if (word.find('/') != std::string::npos) return error_reply(404, "no such route");
      const int layer = int_param(params, "layer").value_or(corpus_.meta.layers - 1);
      const int limit = int_param(params, "limit").value_or(1000);
      return json_reply(200, query_word(word, layer, limit).to_json());
    }

    const std::string sentences = "/v1/sentences/";
    const std::string tree_suffix = "/tree";
    if (path.rfind(sentences, 0) == 0 && path.size() > sentences.size() + tree_suffix.size() &&
        path.compare(path.size() - tree_suffix.size(), tree_suffix.size(), tree_suffix) == 0) {
      const std::string id =
          path.substr(sentences.size(), path.size() - sentences.size() - tree_suffix.size());
      auto probe = param(params, "probe");
      if (!probe) {
        if (probes_.size() != 1) return error_reply(400, "probe parameter is required");
        probe = probes_.begin()->first;
      }
      return {200, drawing_json_text(query_tree(id, *probe, int_param(params, "layer")))};
    }
    return error_reply(404, "no such route: " + path);
  } catch (const NotFoundError& e) {
    return error_reply(404, e.what());
  } catch (const ValidationError& e) {
    return error_reply(400, e.what());
  }
}

void ExplorerService::mount(httplib::Server& server, const std::filesystem::path& static_dir) const {
  server.Get(R"(/v1/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
    const auto reply = handle(req.path, params);
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  });
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now().time_since_epoch());
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : req.params) params[k] = v;
    std::clog << nlohmann::json{{"ts_ms", now.count()},
                                {"method", req.method},
                                {"path", req.path},
                                {"params", params},
                                {"status", res.status},
                                {"bytes", res.body.size()}}
                     .dump()
              << std::endl;
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir.string());
}

}  // namespace embgeom
