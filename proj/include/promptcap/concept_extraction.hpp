#pragma once

#include "promptcap/embedding_space.hpp"
#include "promptcap/text.hpp"

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace promptcap {

struct ConceptEntry {
  std::string phrase;
  int frequency = 0;

  friend bool operator==(const ConceptEntry&, const ConceptEntry&) = default;
};

// Ranked by frequency descending, ties by phrase; phrases unique.
struct ConceptVocabulary {
  std::vector<ConceptEntry> entries;

  std::size_t size() const { return entries.size(); }
};

using StopwordSet = std::set<std::string>;

// Shipped stopword list for a language code; empty for unknown languages.
const StopwordSet& default_stopwords(std::string_view lang);

// Candidate phrases are maximal runs of at most `max_len` lowercased source
// tokens containing no stopword and no punctuation token. Every occurrence
// counts; the `cap` most frequent are kept.
ConceptVocabulary extract_concepts(std::span<const CaptionRecord> corpus, int cap, const StopwordSet& stopwords,
                                   int max_len = 3);

// Externally produced phrase list (UTF-8, one per line). Frequencies are the
// phrase's occurrence count in `corpus` (at least 1), then ranked as usual.
ConceptVocabulary read_concepts_file(const std::filesystem::path& path, std::span<const CaptionRecord> corpus = {});
void write_concepts_file(const std::filesystem::path& path, const ConceptVocabulary& vocab);

// Embeds each phrase verbatim with the identity template "{concept}".
ConceptBank embed_concepts(const ConceptVocabulary& vocab, const TextEmbedder& embedder);

}  // namespace promptcap
