#include "embgeom/ingest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace embgeom {

static_assert(std::endian::native == std::endian::little,
              "on-disk float blocks are little-endian; big-endian hosts are not supported");

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<int> parse_int(const std::string& s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

DependencyParse::DependencyParse(std::vector<int> parents_in, std::vector<std::string> deprels_in)
    : parents(std::move(parents_in)), deprels(std::move(deprels_in)), tree(parents) {
  if (deprels.size() != parents.size()) {
    throw ValidationError("parse has " + std::to_string(parents.size()) + " heads but " +
                          std::to_string(deprels.size()) + " relation labels");
  }
}

// ---------------------------------------------------------------------------
// CoNLL-U

namespace {

struct PendingSentence {
  int index = 0;
  int first_line = 0;
  std::string id;
  std::vector<std::pair<int, std::string>> lines;
};

void finish_sentence(PendingSentence& pending, ConlluDocument& doc) {
  if (pending.lines.empty()) return;
  auto reject = [&](int line, std::string message) {
    doc.errors.push_back({pending.index, line, std::move(message)});
  };

  std::vector<std::string> forms, lemmas, deprels;
  std::vector<int> heads;
  std::vector<int> line_of;
  for (const auto& [lineno, text] : pending.lines) {
    const auto fields = split(text, '\t');
    if (fields.size() < 8) {
      return reject(lineno, "expected 10 tab-separated fields, found " +
                                std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    const auto token_id = parse_int(id);
    if (!token_id || *token_id != static_cast<int>(forms.size()) + 1) {
      return reject(lineno, "token id '" + id + "' is not the next integer id");
    }
    const auto head = parse_int(fields[6]);
    if (!head || *head < 0) return reject(lineno, "HEAD '" + fields[6] + "' is not an integer");
    forms.push_back(fields[1]);
    lemmas.push_back(fields[2]);
    heads.push_back(*head);
    deprels.push_back(fields[7]);
    line_of.push_back(lineno);
  }
  if (forms.empty()) return;

  const int n = static_cast<int>(forms.size());
  std::vector<int> parents(n);
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (heads[i] > n) {
      return reject(line_of[i], "HEAD " + std::to_string(heads[i]) + " exceeds sentence length " +
                                    std::to_string(n));
    }
    if (heads[i] == i + 1) return reject(line_of[i], "token is its own head");
    parents[i] = heads[i] - 1;
    if (heads[i] == 0 && ++roots > 1) return reject(line_of[i], "multiple roots");
  }
  if (roots == 0) return reject(pending.first_line, "no root (HEAD 0) in sentence");
  // A node that never reaches the root within n steps sits on a cycle.
  for (int i = 0; i < n; ++i) {
    int node = i, steps = 0;
    while (node >= 0 && steps <= n) node = parents[node], ++steps;
    if (node >= 0) return reject(line_of[i], "head cycle through token " + std::to_string(i + 1));
  }

  std::string id = pending.id.empty() ? "s" + std::to_string(pending.index + 1) : pending.id;
  doc.sentences.push_back(
      {std::move(id), std::move(forms), std::move(lemmas),
       DependencyParse(std::move(parents), std::move(deprels))});
}

}  // namespace

ConlluDocument read_conllu(std::istream& in, const std::string& source) {
  ConlluDocument doc;
  PendingSentence pending;
  int sentence_index = 0;
  int lineno = 0;
  std::string line;
  bool open = false;
  auto close = [&] {
    if (open) {
      finish_sentence(pending, doc);
      ++sentence_index;
    }
    pending = PendingSentence{};
    open = false;
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      close();
      continue;
    }
    if (!open) {
      open = true;
      pending.index = sentence_index;
      pending.first_line = lineno;
    }
    if (line[0] == '#') {
      const std::string key = "# sent_id =";
      if (line.rfind(key, 0) == 0) {
        pending.id = line.substr(key.size());
        pending.id.erase(0, pending.id.find_first_not_of(' '));
      }
      continue;
    }
    pending.lines.emplace_back(lineno, line);
  }
  close();
  if (doc.sentences.empty() && doc.errors.empty()) {
    doc.warnings.push_back(source + ": no sentences found");
  }
  return doc;
}

ConlluDocument read_conllu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return read_conllu(in, path.string());
}

// ---------------------------------------------------------------------------
// Embedding corpus

const EmbeddedSentence* EmbeddingCorpus::find(const std::string& id) const {
  for (const auto& s : sentences) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

void EmbeddingCorpus::validate() const {
  if (meta.layers < 1 || meta.dim < 1) {
    throw FormatError("metadata", "layers and dim must be positive");
  }
  for (const auto& s : sentences) {
    const std::string where = "sentence '" + s.id + "'";
    const auto n = static_cast<Eigen::Index>(s.tokens.size());
    if (static_cast<int>(s.layers.size()) != meta.layers) {
      throw FormatError(where, "has " + std::to_string(s.layers.size()) + " layers, expected " +
                                   std::to_string(meta.layers));
    }
    for (const auto& layer : s.layers) {
      if (layer.rows() != n || layer.cols() != meta.dim) {
        throw FormatError(where, "layer matrix is " + std::to_string(layer.rows()) + "x" +
                                     std::to_string(layer.cols()) + ", expected " +
                                     std::to_string(n) + "x" + std::to_string(meta.dim));
      }
      if (!layer.allFinite()) throw FormatError(where, "embedding contains non-finite values");
    }
    if (!s.lemmas.empty() && static_cast<Eigen::Index>(s.lemmas.size()) != n) {
      throw FormatError(where, "lemma count does not match token count");
    }
    if (!s.senses.empty() && static_cast<Eigen::Index>(s.senses.size()) != n) {
      throw FormatError(where, "sense count does not match token count");
    }
    if (s.parse && s.parse->size() != n) {
      throw FormatError(where, "parse has " + std::to_string(s.parse->size()) +
                                   " tokens but sentence has " + std::to_string(n));
    }
    if (s.kind != "individual" && s.kind != "concat") {
      throw FormatError(where, "unknown sentence kind '" + s.kind + "'");
    }
  }
}

namespace {

std::string block_name(std::size_t index) {
  std::ostringstream name;
  name << "blocks/" << std::setw(6) << std::setfill('0') << index << ".f32";
  return name.str();
}

nlohmann::json sentence_json(const EmbeddedSentence& s, const std::string& file) {
  nlohmann::json j;
  j["id"] = s.id;
  j["tokens"] = s.tokens;
  if (!s.lemmas.empty()) j["lemmas"] = s.lemmas;
  if (!s.senses.empty()) {
    auto& senses = j["senses"] = nlohmann::json::array();
    for (const auto& sense : s.senses) senses.push_back(sense ? nlohmann::json(*sense) : nullptr);
  }
  if (s.parse) j["parse"] = {{"parents", s.parse->parents}, {"deprels", s.parse->deprels}};
  j["kind"] = s.kind;
  if (!s.sources.empty()) j["sources"] = s.sources;
  j["file"] = file;
  return j;
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where, std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where, std::string("field \"") + key + "\": " + e.what());
  }
}

}  // namespace

void write_embedding_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir) {
  corpus.validate();
  std::filesystem::create_directories(dir / "blocks");
  nlohmann::json meta;
  meta["format"] = "embedding-corpus-v1";
  meta["model"] = corpus.meta.model;
  meta["layers"] = corpus.meta.layers;
  meta["heads"] = corpus.meta.heads;
  meta["dim"] = corpus.meta.dim;
  meta["wordpiece"] = corpus.meta.wordpiece;
  meta["sentences"] = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto& s = corpus.sentences[i];
    const std::string file = block_name(i);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError((dir / file).string(), "cannot open for writing");
    for (const auto& layer : s.layers) {
      out.write(reinterpret_cast<const char*>(layer.data()),
                static_cast<std::streamsize>(layer.size() * sizeof(float)));
    }
    if (!out) throw FormatError((dir / file).string(), "write failed");
    meta["sentences"].push_back(sentence_json(s, file));
  }
  std::ofstream out(dir / "metadata.json", std::ios::trunc);
  if (!out) throw FormatError((dir / "metadata.json").string(), "cannot open for writing");
  out << meta.dump(1) << '\n';
}

EmbeddingCorpus read_embedding_corpus(const std::filesystem::path& dir) {
  const auto meta_path = dir / "metadata.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError(meta_path.string(), "cannot open metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string(), e.what());
  }
  const std::string where = meta_path.string();
  if (meta.value("format", "") != "embedding-corpus-v1") {
    throw FormatError(where, "not an embedding-corpus-v1 metadata file");
  }
  EmbeddingCorpus corpus;
  corpus.meta.model = meta.value("model", "unknown");
  corpus.meta.layers = field<int>(meta, "layers", where);
  corpus.meta.heads = meta.value("heads", 0);
  corpus.meta.dim = field<int>(meta, "dim", where);
  corpus.meta.wordpiece = meta.value("wordpiece", "first");
  if (corpus.meta.layers < 1 || corpus.meta.dim < 1) {
    throw FormatError(where, "layers and dim must be positive");
  }

  const auto& list = meta.at("sentences");
  corpus.sentences.reserve(list.size());
  for (std::size_t idx = 0; idx < list.size(); ++idx) {
    const auto& js = list[idx];
    EmbeddedSentence s;
    s.id = js.value("id", std::to_string(idx));
    const std::string swhere = "sentence '" + s.id + "'";
    s.tokens = field<std::vector<std::string>>(js, "tokens", swhere);
    if (js.contains("lemmas")) s.lemmas = field<std::vector<std::string>>(js, "lemmas", swhere);
    if (js.contains("senses")) {
      for (const auto& sense : js["senses"]) {
        s.senses.push_back(sense.is_null() ? std::nullopt
                                           : std::optional<std::string>(sense.get<std::string>()));
      }
    }
    if (js.contains("parse")) {
      try {
        s.parse.emplace(field<std::vector<int>>(js["parse"], "parents", swhere),
                        field<std::vector<std::string>>(js["parse"], "deprels", swhere));
      } catch (const ValidationError& e) {
        throw FormatError(swhere, std::string("invalid parse: ") + e.what());
      }
    }
    s.kind = js.value("kind", "individual");
    if (js.contains("sources")) s.sources = field<std::vector<std::string>>(js, "sources", swhere);

    const auto block_path = dir / field<std::string>(js, "file", swhere);
    const auto rows = static_cast<Eigen::Index>(s.tokens.size());
    const auto expected = static_cast<std::uintmax_t>(corpus.meta.layers) * rows *
                          corpus.meta.dim * sizeof(float);
    std::error_code ec;
    const auto actual = std::filesystem::file_size(block_path, ec);
    if (ec) throw FormatError(swhere, "missing payload " + block_path.string());
    if (actual != expected) {
      throw FormatError(swhere, "payload has " + std::to_string(actual) + " bytes, expected " +
                                    std::to_string(expected) + " (layers x tokens x dim x 4)");
    }
    std::ifstream in(block_path, std::ios::binary);
    s.layers.resize(corpus.meta.layers);
    for (auto& layer : s.layers) {
      layer.resize(rows, corpus.meta.dim);
      in.read(reinterpret_cast<char*>(layer.data()),
              static_cast<std::streamsize>(layer.size() * sizeof(float)));
    }
    if (!in) throw FormatError(swhere, "short read on " + block_path.string());
    corpus.sentences.push_back(std::move(s));
  }
  corpus.validate();
  return corpus;
}

CorpusStats corpus_stats(const EmbeddingCorpus& corpus) {
  CorpusStats stats;
  for (const auto& s : corpus.sentences) {
    ++stats.sentences;
    if (s.kind == "concat") ++stats.concat_sentences;
    stats.tokens += s.size();
    if (s.parse) {
      ++stats.parsed_sentences;
      for (int i = 0; i < s.parse->size(); ++i) {
        if (s.parse->parents[i] >= 0) ++stats.deprel_counts[s.parse->deprels[i]];
      }
    }
    for (const auto& sense : s.senses) stats.sense_labels += sense.has_value();
  }
  return stats;
}

nlohmann::json to_json(const CorpusStats& stats) {
  return {{"sentences", stats.sentences},         {"concat_sentences", stats.concat_sentences},
          {"tokens", stats.tokens},               {"parsed_sentences", stats.parsed_sentences},
          {"sense_labels", stats.sense_labels},   {"deprel_counts", stats.deprel_counts}};
}

// ---------------------------------------------------------------------------
// Attention vectors

namespace detail {

std::string base64_encode(const void* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                      static_cast<const unsigned char*>(data),
                                      static_cast<int>(size));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ValidationError("base64 length is not a multiple of 4");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
  if (written < 0) throw ValidationError("invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

}  // namespace detail

AttentionDataset read_attention_dataset(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  auto where = [&](const std::string& what) { return source + ":" + std::to_string(lineno) + what; };

  AttentionDataset data;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim_cr(line).empty()) break;
  }
  if (lineno == 0 || trim_cr(line).empty()) throw FormatError(source, "empty attention dataset");
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "attention-v1") {
      throw FormatError(where(""), "header is not attention-v1");
    }
    data.layers = header.at("layers").get<int>();
    data.heads = header.at("heads").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where(""), std::string("bad header: ") + e.what());
  }
  if (data.layers < 1 || data.heads < 1) throw FormatError(where(""), "layers and heads must be positive");

  const auto expected_bytes = static_cast<std::size_t>(data.vector_length()) * sizeof(float);
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty()) continue;
    const std::string loc = where(" (record " + std::to_string(data.records.size()) + ")");
    AttentionRecord rec;
    try {
      const auto j = nlohmann::json::parse(line);
      rec.sentence_id = j.at("sentence").get<std::string>();
      rec.token_i = j.at("i").get<int>();
      rec.token_j = j.at("j").get<int>();
      if (j.contains("tokens")) {
        const auto tokens = j["tokens"].get<std::vector<std::string>>();
        if (tokens.size() != 2) throw FormatError(loc, "\"tokens\" must hold two strings");
        rec.text_i = tokens[0];
        rec.text_j = tokens[1];
      }
      const auto& label = j.at("label");
      if (label.is_boolean()) {
        rec.has_relation = label.get<bool>();
      } else if (label.is_string()) {
        rec.relation = label.get<std::string>();
        rec.has_relation = true;
        if (rec.relation.empty()) throw FormatError(loc, "empty relation label");
      } else {
        throw FormatError(loc, "label must be a boolean or a relation string");
      }
      const auto bytes = detail::base64_decode(j.at("values").get<std::string>());
      if (bytes.size() != expected_bytes) {
        throw FormatError(loc, "vector has " + std::to_string(bytes.size() / sizeof(float)) +
                                   " values, expected L*H = " +
                                   std::to_string(data.vector_length()));
      }
      rec.values.resize(data.vector_length());
      std::memcpy(rec.values.data(), bytes.data(), bytes.size());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(loc, e.what());
    } catch (const ValidationError& e) {
      throw FormatError(loc, e.what());
    }
    if (rec.token_i < 0 || rec.token_j < 0 || rec.token_i == rec.token_j) {
      throw FormatError(loc, "token indices must be distinct and non-negative");
    }
    if (is_special_token(rec.text_i) || is_special_token(rec.text_j)) {
      throw FormatError(loc, "pair involves a [CLS]/[SEP] token");
    }
    if (!rec.values.allFinite()) throw FormatError(loc, "non-finite attention value");
    data.records.push_back(std::move(rec));
  }
  return data;
}

AttentionDataset read_attention_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return read_attention_dataset(in, path.string());
}

void write_attention_dataset(const AttentionDataset& data, std::ostream& out) {
  out << nlohmann::json{{"format", "attention-v1"}, {"layers", data.layers}, {"heads", data.heads}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.values.size() != data.vector_length()) {
      throw ValidationError("record " + std::to_string(i) + " has wrong vector length");
    }
    nlohmann::json j;
    j["sentence"] = r.sentence_id;
    j["i"] = r.token_i;
    j["j"] = r.token_j;
    if (!r.text_i.empty() || !r.text_j.empty()) j["tokens"] = {r.text_i, r.text_j};
    j["label"] = r.relation.empty() ? nlohmann::json(r.has_relation) : nlohmann::json(r.relation);
    j["values"] = detail::base64_encode(r.values.data(), r.values.size() * sizeof(float));
    out << j.dump() << '\n';
  }
}

void write_attention_dataset(const AttentionDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  write_attention_dataset(data, out);
}

AttentionDataset filter_relations(const AttentionDataset& data, const RelationFilter& filter) {
  std::map<std::string, long> counts;
  for (const auto& r : data.records) {
    if (!r.relation.empty()) ++counts[r.relation];
  }
  std::vector<std::pair<std::string, long>> ranked;
  for (const auto& [label, count] : counts) {
    if (count > filter.min_examples) ranked.emplace_back(label, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<int>(ranked.size()) > filter.max_relations) ranked.resize(filter.max_relations);

  std::map<std::string, bool> keep;
  for (const auto& [label, count] : ranked) keep[label] = true;
  AttentionDataset out;
  out.layers = data.layers;
  out.heads = data.heads;
  for (const auto& r : data.records) {
    if (keep.count(r.relation)) out.records.push_back(r);
  }
  return out;
}

}  // namespace embgeom
