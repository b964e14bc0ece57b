#include "promptcap/concept_extraction.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

namespace promptcap {

namespace {

const StopwordSet kEnglish = {
    "a", "about", "above", "across", "after", "against", "along", "among", "an", "and", "another", "around",
    "as", "at", "be", "been", "before", "behind", "being", "below", "beside", "between", "both", "but", "by",
    "can", "could", "do", "does", "down", "during", "each", "either", "for", "from", "has", "have", "having",
    "he", "her", "here", "his", "how", "in", "inside", "into", "is", "it", "its", "near", "next", "of", "off",
    "on", "onto", "or", "other", "out", "outside", "over", "she", "some", "that", "the", "their", "them",
    "there", "these", "they", "this", "those", "through", "to", "toward", "towards", "under", "up", "upon",
    "was", "were", "while", "who", "whom", "with", "within", "without", "are", "am", "will", "would", "while",
    "what", "which", "where", "when", "why", "one", "two", "three", "several", "many", "very", "so", "than",
};

const StopwordSet kGerman = {
    "der", "die", "das", "den", "dem", "des", "ein", "eine", "einer", "eines", "einem", "einen", "und", "oder",
    "in", "im", "auf", "mit", "von", "vor", "zu", "zum", "zur", "an", "am", "bei", "aus", "ist", "sind", "hat",
    "haben", "sich", "er", "sie", "es", "über", "unter", "neben", "hinter", "durch", "für", "gegen", "ohne",
};

const StopwordSet kFrench = {
    "le", "la", "les", "un", "une", "des", "du", "de", "d'", "l'", "et", "ou", "dans", "sur", "sous", "avec",
    "par", "pour", "en", "au", "aux", "est", "sont", "a", "ont", "il", "elle", "ils", "elles", "qui", "que",
    "se", "son", "sa", "ses", "leur", "leurs", "devant", "derrière", "près",
};

const StopwordSet kEmpty = {};

}  // namespace

const StopwordSet& default_stopwords(std::string_view lang) {
  if (lang == "en") return kEnglish;
  if (lang == "de") return kGerman;
  if (lang == "fr") return kFrench;
  return kEmpty;
}

ConceptVocabulary extract_concepts(std::span<const CaptionRecord> corpus, int cap, const StopwordSet& stopwords,
                                   int max_len) {
  if (corpus.empty()) throw Error(ErrorKind::empty_input, "extract_concepts: empty corpus");
  if (cap <= 0 || max_len <= 0) throw Error(ErrorKind::argument, "extract_concepts: cap and max_len must be positive");

  std::map<std::string, int> counts;
  for (const CaptionRecord& r : corpus) {
    std::vector<std::string> lowered;
    lowered.reserve(r.source.size());
    for (const std::string& t : r.source) lowered.push_back(to_lower(t));
    std::size_t i = 0;
    while (i < lowered.size()) {
      if (stopwords.count(lowered[i]) || is_punctuation(lowered[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < lowered.size() && !stopwords.count(lowered[j]) && !is_punctuation(lowered[j])) ++j;
      if (j - i <= static_cast<std::size_t>(max_len)) {
        ++counts[join(std::span<const std::string>(lowered).subspan(i, j - i))];
      }
      i = j;
    }
  }
  if (counts.empty()) throw Error(ErrorKind::empty_input, "extract_concepts: no candidate phrases found");

  ConceptVocabulary vocab;
  for (auto& [phrase, n] : counts) vocab.entries.push_back({phrase, n});
  std::stable_sort(vocab.entries.begin(), vocab.entries.end(),
                   [](const ConceptEntry& a, const ConceptEntry& b) { return a.frequency > b.frequency; });
  if (vocab.entries.size() > static_cast<std::size_t>(cap)) vocab.entries.resize(static_cast<std::size_t>(cap));
  return vocab;
}

ConceptVocabulary read_concepts_file(const std::filesystem::path& path, std::span<const CaptionRecord> corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open concepts file " + path.string());
  std::vector<std::string> phrases;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string phrase = join(tokenize(line));
    if (phrase.empty()) continue;
    if (!seen.insert(phrase).second) throw Error(ErrorKind::data, "concepts file repeats phrase '" + phrase + "'");
    phrases.push_back(phrase);
  }
  if (phrases.empty()) throw Error(ErrorKind::empty_input, "concepts file " + path.string() + " has no phrases");

  std::map<std::string, int> counts;
  for (const std::string& p : phrases) counts[p] = 0;
  std::size_t longest = 1;
  for (const std::string& p : phrases) longest = std::max(longest, tokenize(p).size());
  for (const CaptionRecord& r : corpus) {
    std::vector<std::string> lowered;
    for (const std::string& t : r.source) lowered.push_back(to_lower(t));
    for (std::size_t i = 0; i < lowered.size(); ++i) {
      for (std::size_t n = 1; n <= longest && i + n <= lowered.size(); ++n) {
        auto it = counts.find(join(std::span<const std::string>(lowered).subspan(i, n)));
        if (it != counts.end()) ++it->second;
      }
    }
  }
  ConceptVocabulary vocab;
  for (auto& [phrase, n] : counts) vocab.entries.push_back({phrase, std::max(n, 1)});
  std::stable_sort(vocab.entries.begin(), vocab.entries.end(),
                   [](const ConceptEntry& a, const ConceptEntry& b) { return a.frequency > b.frequency; });
  return vocab;
}

void write_concepts_file(const std::filesystem::path& path, const ConceptVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write concepts file " + path.string());
  for (const ConceptEntry& e : vocab.entries) out << e.phrase << '\n';
}

ConceptBank embed_concepts(const ConceptVocabulary& vocab, const TextEmbedder& embedder) {
  std::vector<Concept> concepts;
  concepts.reserve(vocab.entries.size());
  std::unordered_set<std::string> seen;
  for (const ConceptEntry& e : vocab.entries) {
    if (!seen.insert(e.phrase).second) throw Error(ErrorKind::data, "embed_concepts: duplicate phrase '" + e.phrase + "'");
    try {
      concepts.push_back({e.phrase, embedder.embed(tokenize(e.phrase))});
    } catch (const Error& err) {
      throw Error(err.kind(), "embed_concepts: phrase '" + e.phrase + "': " + err.what());
    }
    if (concepts.back().feature.dim() != embedder.dim()) {
      throw Error(ErrorKind::dimension, "embed_concepts: embedder returned wrong dimension for '" + e.phrase + "'");
    }
  }
  return ConceptBank(std::move(concepts));
}

}  // namespace promptcap
