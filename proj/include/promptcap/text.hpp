#pragma once

#include "promptcap/core.hpp"
#include "promptcap/embedding_space.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace promptcap {

using Tokens = std::vector<std::string>;

// NFC-normalize, then split on Unicode whitespace.
Tokens tokenize(std::string_view text);
std::string nfc(std::string_view text);
std::string to_lower(std::string_view text);
// True when every code point of `token` is punctuation or a symbol.
bool is_punctuation(std::string_view token);
std::string join(std::span<const std::string> tokens, std::string_view sep = " ");

// One corpus entry: source text S, optional target T, and the language of the
// text the decoder should produce.
struct CaptionRecord {
  std::string id;
  Tokens source;
  std::optional<Tokens> target;
  std::string lang = "en";

  // T in translation mode, otherwise S.
  const Tokens& output() const { return target ? *target : source; }
};

// Parses JSON Lines {"source": ..., "target": ... (optional), "lang": ..., "id": ... (optional)}.
// Records without an id get their zero-based line number.
std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path);
std::vector<CaptionRecord> parse_corpus(std::string_view jsonl);
void write_corpus(const std::filesystem::path& path, std::span<const CaptionRecord> records);

class LanguageSet {
 public:
  LanguageSet() : LanguageSet(std::vector<std::string>{"en"}) {}
  explicit LanguageSet(std::vector<std::string> codes);

  int id(std::string_view code) const;
  const std::string& code(int id) const { return codes_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(codes_.size()); }
  const std::vector<std::string>& codes() const { return codes_; }

 private:
  std::vector<std::string> codes_;
};

// Throws a data error naming the record if its language is not configured or its source is empty.
void validate(const CaptionRecord& record, const LanguageSet& languages);

class Vocabulary {
 public:
  Vocabulary() = default;
  // `tokens` excludes the four specials, which are prepended.
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // kUnk when unknown
  const std::string& token(int id) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Stops at EOS; drops specials.
  Tokens decode(std::span<const int> ids) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  const std::string& fingerprint() const { return fingerprint_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::string fingerprint_;
};

// Whitespace tokens with frequency >= min_freq, most frequent first (ties
// lexicographic), at most max_size of them, after the specials.
Vocabulary build_vocab(std::span<const Tokens> texts, int min_freq, int max_size);
Vocabulary build_vocab(std::span<const CaptionRecord> corpus, int min_freq, int max_size);

// Source of unit-normalized text features phi_t.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Index dim() const = 0;
  virtual UnitVector embed(std::span<const std::string> tokens) const = 0;
};

// Precomputed features keyed by the space-joined text.
class TableEmbedder final : public TextEmbedder {
 public:
  TableEmbedder(std::vector<std::string> keys, const Matrix& rows);

  Index dim() const override { return dim_; }
  UnitVector embed(std::span<const std::string> tokens) const override;

 private:
  Index dim_ = 0;
  std::unordered_map<std::string, UnitVector> table_;
};

}  // namespace promptcap
