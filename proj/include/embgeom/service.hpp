#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "embgeom/ingest.hpp"
#include "embgeom/probe_matrix.hpp"
#include "embgeom/projection_viz.hpp"

namespace httplib {
class Server;
}

namespace embgeom {

struct QueryPoint {
  double x = 0.0;
  double y = 0.0;
  std::string sentence_id;
  int token = 0;
  std::string text;
  std::optional<std::string> sense;
};

struct QueryResult {
  std::string word;
  int layer = 0;
  std::string method = "pca";
  std::vector<QueryPoint> points;
  std::vector<std::string> suggestions;  // only for words with no occurrence

  nlohmann::json to_json() const;
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Layer a structural probe is drawn at: the explicit request, else the layer
// recorded in the probe metadata, else the corpus's last layer.
int resolve_probe_layer(const ProbeMatrix& probe, const EmbeddingCorpus& corpus,
                        std::optional<int> requested);

// Every "*.probe" file in `dir`, keyed by file stem.
std::map<std::string, ProbeMatrix> load_probe_directory(const std::filesystem::path& dir);

// Read-only queries over an in-memory corpus:
//   GET /v1/meta
//   GET /v1/words/{word}?layer=&limit=
//   GET /v1/sentences/{id}/tree?probe=&layer=
class ExplorerService {
 public:
  ExplorerService(EmbeddingCorpus corpus, std::map<std::string, ProbeMatrix> probes,
                  double dotted_threshold = 1.0);

  // First `limit` case-insensitive occurrences of `word` in corpus order,
  // PCA-projected to 2-D. Throws ValidationError for a layer outside [0, L).
  QueryResult query_word(const std::string& word, int layer, int limit = 1000) const;
  // Throws NotFoundError for an unknown sentence or probe id.
  TreeDrawing query_tree(const std::string& sentence_id, const std::string& probe_id,
                         std::optional<int> layer = std::nullopt) const;
  nlohmann::json meta() const;

  // Routes a GET request without a socket; used by mount() and tests.
  HttpReply handle(const std::string& path,
                   const std::multimap<std::string, std::string>& params) const;

  // Registers the /v1 routes; `static_dir`, when non-empty, is served at "/".
  void mount(httplib::Server& server, const std::filesystem::path& static_dir = {}) const;

  const EmbeddingCorpus& corpus() const noexcept { return corpus_; }

 private:
  EmbeddingCorpus corpus_;
  std::map<std::string, ProbeMatrix> probes_;
  double dotted_threshold_;
  std::vector<std::string> vocabulary_;  // distinct lower-cased tokens, sorted
};

}  // namespace embgeom
