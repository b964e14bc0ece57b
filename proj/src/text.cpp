#include "promptcap/text.hpp"

#include <nlohmann/json.hpp>
#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace promptcap {

using json = nlohmann::json;

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::data, "NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::data, "NFC normalization failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

Tokens tokenize(std::string_view text) {
  const std::string normalized = nfc(text);
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(normalized);
  Tokens tokens;
  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string s;
    current.toUTF8String(s);
    tokens.push_back(std::move(s));
    current.remove();
  };
  for (int32_t i = 0; i < u.length();) {
    const UChar32 c = u.char32At(i);
    if (u_isUWhiteSpace(c)) {
      flush();
    } else {
      current.append(c);
    }
    i += U16_LENGTH(c);
  }
  flush();
  return tokens;
}

std::string to_lower(std::string_view text) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  u.toLower(icu::Locale::getRoot());
  std::string out;
  u.toUTF8String(out);
  return out;
}

bool is_punctuation(std::string_view token) {
  if (token.empty()) return false;
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(token.data(), static_cast<int32_t>(token.size())));
  for (int32_t i = 0; i < u.length();) {
    const UChar32 c = u.char32At(i);
    const auto mask = U_GET_GC_MASK(c);
    if (!(mask & (U_GC_P_MASK | U_GC_S_MASK))) return false;
    i += U16_LENGTH(c);
  }
  return true;
}

std::string join(std::span<const std::string> tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

std::vector<CaptionRecord> parse_corpus(std::string_view jsonl) {
  std::vector<CaptionRecord> records;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::data, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("source") || !obj["source"].is_string()) {
      throw Error(ErrorKind::data, "corpus line " + std::to_string(line_no) + ": missing string field \"source\"");
    }
    for (const auto& [key, _] : obj.items()) {
      if (key != "source" && key != "target" && key != "lang" && key != "id") {
        throw Error(ErrorKind::data, "corpus line " + std::to_string(line_no) + ": unknown field \"" + key + "\"");
      }
    }
    CaptionRecord r;
    r.id = obj.contains("id") ? (obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump())
                              : std::to_string(records.size());
    r.source = tokenize(obj["source"].get<std::string>());
    if (obj.contains("target") && !obj["target"].is_null()) r.target = tokenize(obj["target"].get<std::string>());
    if (obj.contains("lang")) r.lang = obj["lang"].get<std::string>();
    if (r.source.empty()) throw Error(ErrorKind::data, "corpus line " + std::to_string(line_no) + ": empty source");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

void write_corpus(const std::filesystem::path& path, std::span<const CaptionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write corpus " + path.string());
  for (const CaptionRecord& r : records) {
    json obj{{"id", r.id}, {"source", join(r.source)}, {"lang", r.lang}};
    if (r.target) obj["target"] = join(*r.target);
    out << obj.dump() << '\n';
  }
}

LanguageSet::LanguageSet(std::vector<std::string> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw Error(ErrorKind::argument, "language set is empty");
}

int LanguageSet::id(std::string_view code) const {
  auto it = std::find(codes_.begin(), codes_.end(), code);
  if (it == codes_.end()) throw Error(ErrorKind::data, "language '" + std::string(code) + "' is not configured");
  return static_cast<int>(it - codes_.begin());
}

void validate(const CaptionRecord& record, const LanguageSet& languages) {
  if (record.source.empty()) throw Error(ErrorKind::data, "record " + record.id + ": empty source");
  languages.id(record.lang);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  id_to_token_.insert(id_to_token_.end(), std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
  std::uint64_t h = fnv1a64("vocab");
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::vocabulary, "duplicate vocabulary token '" + id_to_token_[i] + "'");
    }
    h = fnv1a64(id_to_token_[i], h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  fingerprint_ = to_hex(h);
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error(ErrorKind::vocabulary, "token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id < kNumSpecial) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write vocabulary " + path.string());
  for (int i = kNumSpecial; i < size(); ++i) out << id_to_token_[static_cast<std::size_t>(i)] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const Tokens> texts, int min_freq, int max_size) {
  if (texts.empty()) throw Error(ErrorKind::empty_input, "build_vocab: empty corpus");
  std::map<std::string, int> counts;
  for (const Tokens& t : texts) {
    for (const std::string& tok : t) ++counts[tok];
  }
  std::vector<std::pair<std::string, int>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  // std::map iteration is lexicographic, so stable_sort keeps ties in that order
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size >= 0 && static_cast<int>(ranked.size()) > max_size) ranked.resize(static_cast<std::size_t>(max_size));
  if (ranked.empty()) throw Error(ErrorKind::vocabulary, "build_vocab: no token reaches min_freq " + std::to_string(min_freq));
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, _] : ranked) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const CaptionRecord> corpus, int min_freq, int max_size) {
  std::vector<Tokens> texts;
  texts.reserve(corpus.size());
  for (const CaptionRecord& r : corpus) texts.push_back(r.output());
  return build_vocab(texts, min_freq, max_size);
}

TableEmbedder::TableEmbedder(std::vector<std::string> keys, const Matrix& rows) : dim_(rows.cols()) {
  if (static_cast<Index>(keys.size()) != rows.rows()) {
    throw Error(ErrorKind::dimension, "TableEmbedder: " + std::to_string(keys.size()) + " keys for " +
                                          std::to_string(rows.rows()) + " rows");
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    table_.insert_or_assign(keys[i], normalize(Vector(rows.row(static_cast<Index>(i)).transpose())));
  }
}

UnitVector TableEmbedder::embed(std::span<const std::string> tokens) const {
  const std::string key = join(tokens);
  auto it = table_.find(key);
  if (it == table_.end()) throw Error(ErrorKind::data, "no precomputed feature for text '" + key + "'");
  return it->second;
}

}  // namespace promptcap
