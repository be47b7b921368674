#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "embgeom/error.hpp"
#include "embgeom/tree_geometry.hpp"

namespace embgeom {

// Dependency parse over token positions 0..n-1: parents[i] == -1 marks the root,
// deprels[i] labels the edge parents[i] -> i.
struct DependencyParse {
  std::vector<int> parents;
  std::vector<std::string> deprels;
  Tree tree;

  DependencyParse(std::vector<int> parents_in, std::vector<std::string> deprels_in);
  int size() const noexcept { return static_cast<int>(parents.size()); }
};

// ---------------------------------------------------------------------------
// CoNLL-U

struct ConlluSentence {
  std::string id;
  std::vector<std::string> forms;
  std::vector<std::string> lemmas;
  DependencyParse parse;
};

struct ConlluError {
  int sentence_index = 0;  // 0-based position of the sentence block in the file
  int line = 0;            // 1-based line of the offending entry
  std::string message;
};

struct ConlluDocument {
  std::vector<ConlluSentence> sentences;
  std::vector<ConlluError> errors;      // rejected sentences
  std::vector<std::string> warnings;
};

// HEAD column defines the parent (0 = root), DEPREL labels the edge. Comment
// lines, multiword ranges ("2-3") and empty nodes ("4.1") are skipped. A
// sentence with a malformed line, no root, several roots or a head cycle is
// rejected with its line numbers; the remaining sentences are still returned.
ConlluDocument read_conllu(std::istream& in, const std::string& source = "<stream>");
ConlluDocument read_conllu(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Embedding corpus

using LayerMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CorpusMetadata {
  std::string model = "unknown";
  int layers = 0;  // stored embedding layers per sentence
  int heads = 0;
  int dim = 0;
  std::string wordpiece = "first";
};

struct EmbeddedSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> lemmas;                   // empty, or one per token
  std::vector<std::optional<std::string>> senses;    // empty, or one per token
  std::optional<DependencyParse> parse;
  std::string kind = "individual";                   // "individual" or "concat"
  std::vector<std::string> sources;                  // sentence ids a concat was built from
  std::vector<LayerMatrix> layers;                   // layers[l] is tokens x dim

  int size() const noexcept { return static_cast<int>(tokens.size()); }
  Eigen::VectorXd embedding(int layer, int token) const {
    return layers.at(layer).row(token).transpose().cast<double>();
  }
  // tokens x dim, double precision
  Eigen::MatrixXd layer_matrix(int layer) const { return layers.at(layer).cast<double>(); }
};

struct EmbeddingCorpus {
  CorpusMetadata meta;
  std::vector<EmbeddedSentence> sentences;

  const EmbeddedSentence* find(const std::string& id) const;
  // Throws FormatError naming the first offending sentence.
  void validate() const;
};

// Directory layout: metadata.json plus one little-endian float32 block per
// sentence (layer-major, then token-major, then dimension).
EmbeddingCorpus read_embedding_corpus(const std::filesystem::path& dir);
void write_embedding_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir);

struct CorpusStats {
  int sentences = 0;
  int concat_sentences = 0;
  long tokens = 0;
  int parsed_sentences = 0;
  long sense_labels = 0;
  std::map<std::string, long> deprel_counts;
};
CorpusStats corpus_stats(const EmbeddingCorpus& corpus);
nlohmann::json to_json(const CorpusStats& stats);

// ---------------------------------------------------------------------------
// Attention vectors

inline bool is_special_token(const std::string& token) {
  return token == "[CLS]" || token == "[SEP]";
}

struct AttentionRecord {
  std::string sentence_id;
  int token_i = 0;
  int token_j = 0;
  std::string text_i;
  std::string text_j;
  bool has_relation = false;
  std::string relation;   // empty for binary-labelled records
  Eigen::VectorXf values; // layer-major: values[l * heads + h]
};

struct AttentionDataset {
  int layers = 0;
  int heads = 0;
  std::vector<AttentionRecord> records;

  int vector_length() const noexcept { return layers * heads; }
};

// JSON lines. Line 1: {"format":"attention-v1","layers":L,"heads":H}; then one
// record per ordered pair:
// {"sentence":"s1","i":0,"j":2,"tokens":["the","dog"],"label":"det"|true|false,
//  "values":"<base64 little-endian float32 x L*H>"}
AttentionDataset read_attention_dataset(std::istream& in, const std::string& source = "<stream>");
AttentionDataset read_attention_dataset(const std::filesystem::path& path);
void write_attention_dataset(const AttentionDataset& data, std::ostream& out);
void write_attention_dataset(const AttentionDataset& data, const std::filesystem::path& path);

struct RelationFilter {
  long min_examples = 5000;  // keep relations with strictly more examples
  int max_relations = 30;
};

// Keeps records whose relation is among the `max_relations` most frequent
// relations having more than `min_examples` records. Ties in frequency are
// broken by label.
AttentionDataset filter_relations(const AttentionDataset& data, const RelationFilter& filter = {});

namespace detail {
std::string base64_encode(const void* data, std::size_t size);
std::vector<unsigned char> base64_decode(const std::string& text);
}  // namespace detail

}  // namespace embgeom
