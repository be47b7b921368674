#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "embgeom/ingest.hpp"

namespace embgeom {

// One sense-labelled keyword occurrence with its embedding at some layer.
struct SenseOccurrence {
  std::string lemma;  // lower-cased
  std::string sense;
  std::string sentence_id;
  int token = 0;
  Eigen::VectorXd embedding;
};

std::string lowercase(std::string text);

// Lemma used for sense lookup: the lemma column when present, otherwise the
// token, lower-cased in both cases.
std::string token_lemma(const EmbeddedSentence& sentence, int token);

// Every sense-labelled token of the individual (non-concatenated) sentences,
// in corpus order.
std::vector<SenseOccurrence> collect_sense_occurrences(const EmbeddingCorpus& corpus, int layer);

}  // namespace embgeom
