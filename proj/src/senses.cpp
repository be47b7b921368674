#include "embgeom/senses.hpp"

#include <algorithm>
#include <cctype>

namespace embgeom {

std::string lowercase(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return text;
}

std::string token_lemma(const EmbeddedSentence& sentence, int token) {
  if (!sentence.lemmas.empty() && !sentence.lemmas.at(token).empty() &&
      sentence.lemmas[token] != "_") {
    return lowercase(sentence.lemmas[token]);
  }
  return lowercase(sentence.tokens.at(token));
}

std::vector<SenseOccurrence> collect_sense_occurrences(const EmbeddingCorpus& corpus, int layer) {
  if (layer < 0 || layer >= corpus.meta.layers) {
    throw ValidationError("layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(corpus.meta.layers) + ")");
  }
  std::vector<SenseOccurrence> out;
  for (const auto& s : corpus.sentences) {
    if (s.kind != "individual") continue;
    for (int t = 0; t < static_cast<int>(s.senses.size()); ++t) {
      if (!s.senses[t]) continue;
      out.push_back({token_lemma(s, t), *s.senses[t], s.id, t, s.embedding(layer, t)});
    }
  }
  return out;
}

}  // namespace embgeom
