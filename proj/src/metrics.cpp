#include "promptcap/metrics.hpp"

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace promptcap {

namespace {

constexpr int kMaxN = 4;
constexpr real kCiderSigma = 6;

using NgramCounts = std::unordered_map<std::string, int>;

// n-gram key: tokens joined by U+001F
std::string ngram_key(const Tokens& t, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += t[start + i];
  }
  return key;
}

NgramCounts count_ngrams(const Tokens& t, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[ngram_key(t, i, n)];
  return counts;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

void EvalCorpus::validate() const {
  if (items.empty()) throw Error(ErrorKind::empty_input, "evaluation corpus is empty");
  std::unordered_set<std::string> ids;
  for (const EvalItem& item : items) {
    if (!ids.insert(item.id).second) throw Error(ErrorKind::data, "evaluation id '" + item.id + "' repeats");
    if (item.references.empty()) throw Error(ErrorKind::data, "evaluation item '" + item.id + "' has no reference");
  }
}

Tokens eval_tokenize(std::string_view text) {
  Tokens out;
  for (const std::string& raw : tokenize(text)) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(to_lower(raw));
    icu::UnicodeString kept;
    for (int32_t i = 0; i < u.length();) {
      const UChar32 c = u.char32At(i);
      if (!(U_GET_GC_MASK(c) & U_GC_P_MASK)) kept.append(c);
      i += U16_LENGTH(c);
    }
    if (kept.isEmpty()) continue;
    std::string s;
    kept.toUTF8String(s);
    out.push_back(std::move(s));
  }
  return out;
}

real bleu4(const EvalCorpus& corpus) {
  corpus.validate();
  std::array<long long, kMaxN> matched{}, guessed{};
  long long test_len = 0, ref_len = 0;
  for (const EvalItem& item : corpus.items) {
    const auto c_len = static_cast<long long>(item.candidate.size());
    test_len += c_len;
    // closest reference length, ties to the shorter reference
    long long best = -1;
    for (const Tokens& ref : item.references) {
      const auto r = static_cast<long long>(ref.size());
      if (best < 0 || std::llabs(r - c_len) < std::llabs(best - c_len) ||
          (std::llabs(r - c_len) == std::llabs(best - c_len) && r < best)) {
        best = r;
      }
    }
    ref_len += best;
    for (int n = 1; n <= kMaxN; ++n) {
      NgramCounts max_ref;
      for (const Tokens& ref : item.references) {
        for (const auto& [g, k] : count_ngrams(ref, static_cast<std::size_t>(n))) max_ref[g] = std::max(max_ref[g], k);
      }
      for (const auto& [g, k] : count_ngrams(item.candidate, static_cast<std::size_t>(n))) {
        guessed[n - 1] += k;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  if (test_len == 0) return 0;
  real log_sum = 0;
  for (int n = 0; n < kMaxN; ++n) {
    if (matched[n] == 0 || guessed[n] == 0) return 0;
    log_sum += std::log(static_cast<real>(matched[n]) / static_cast<real>(guessed[n]));
  }
  const real bp = test_len < ref_len ? std::exp(real(1) - static_cast<real>(ref_len) / static_cast<real>(test_len)) : real(1);
  return bp * std::exp(log_sum / kMaxN);
}

real rouge_l(const EvalCorpus& corpus) {
  corpus.validate();
  constexpr real beta = real(1.2);
  real total = 0;
  for (const EvalItem& item : corpus.items) {
    real best_p = 0, best_r = 0;
    for (const Tokens& ref : item.references) {
      const auto lcs = static_cast<real>(lcs_length(item.candidate, ref));
      if (!item.candidate.empty()) best_p = std::max(best_p, lcs / static_cast<real>(item.candidate.size()));
      if (!ref.empty()) best_r = std::max(best_r, lcs / static_cast<real>(ref.size()));
    }
    if (best_p > 0 && best_r > 0) {
      total += (1 + beta * beta) * best_p * best_r / (best_r + beta * beta * best_p);
    }
  }
  return total / static_cast<real>(corpus.items.size());
}

CiderResult cider_d(const EvalCorpus& corpus) {
  corpus.validate();
  struct Doc {
    std::array<NgramCounts, kMaxN> counts;
    real length = 0;  // number of bigrams, as in the reference implementation
  };
  auto make_doc = [](const Tokens& t) {
    Doc d;
    for (int n = 1; n <= kMaxN; ++n) d.counts[n - 1] = count_ngrams(t, static_cast<std::size_t>(n));
    d.length = t.size() >= 2 ? static_cast<real>(t.size() - 1) : real(0);
    return d;
  };

  std::unordered_map<std::string, int> doc_freq;
  std::vector<std::vector<Doc>> refs;
  std::vector<Doc> cands;
  for (const EvalItem& item : corpus.items) {
    std::unordered_set<std::string> seen;
    std::vector<Doc> item_refs;
    for (const Tokens& r : item.references) {
      item_refs.push_back(make_doc(r));
      for (const NgramCounts& c : item_refs.back().counts) {
        for (const auto& [g, _] : c) seen.insert(g);
      }
    }
    for (const std::string& g : seen) ++doc_freq[g];
    refs.push_back(std::move(item_refs));
    cands.push_back(make_doc(item.candidate));
  }

  const real log_docs = std::log(static_cast<real>(corpus.items.size()));
  struct Vec {
    std::array<std::unordered_map<std::string, real>, kMaxN> w;
    std::array<real, kMaxN> norm{};
    real length = 0;
  };
  auto to_vec = [&](const Doc& d) {
    Vec v;
    v.length = d.length;
    for (int n = 0; n < kMaxN; ++n) {
      for (const auto& [g, tf] : d.counts[n]) {
        auto it = doc_freq.find(g);
        const real df = it == doc_freq.end() ? real(0) : std::log(std::max(real(1), static_cast<real>(it->second)));
        const real w = static_cast<real>(tf) * (log_docs - df);
        v.w[n][g] = w;
        v.norm[n] += w * w;
      }
      v.norm[n] = std::sqrt(v.norm[n]);
    }
    return v;
  };

  CiderResult result;
  result.degenerate_idf = corpus.items.size() < 2;
  real total = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const Vec hyp = to_vec(cands[i]);
    std::array<real, kMaxN> score{};
    for (const Doc& rd : refs[i]) {
      const Vec ref = to_vec(rd);
      const real delta = hyp.length - ref.length;
      const real penalty = std::exp(-(delta * delta) / (2 * kCiderSigma * kCiderSigma));
      for (int n = 0; n < kMaxN; ++n) {
        real val = 0;
        for (const auto& [g, wh] : hyp.w[n]) {
          auto it = ref.w[n].find(g);
          if (it != ref.w[n].end()) val += std::min(wh, it->second) * it->second;
        }
        if (hyp.norm[n] != 0 && ref.norm[n] != 0) val /= hyp.norm[n] * ref.norm[n];
        score[n] += val * penalty;
      }
    }
    real mean = 0;
    for (real s : score) mean += s;
    mean /= kMaxN;
    mean /= static_cast<real>(refs[i].size());
    mean *= 10;
    result.per_item.push_back(mean);
    total += mean;
  }
  result.score = total / static_cast<real>(cands.size());
  return result;
}

MetricReport evaluate(const EvalCorpus& corpus) {
  MetricReport r;
  r.bleu4 = bleu4(corpus);
  r.rouge_l = rouge_l(corpus);
  CiderResult c = cider_d(corpus);
  r.cider = c.score;
  if (c.degenerate_idf) r.warnings.push_back("single-item corpus: CIDEr document frequencies are degenerate");
  r.n_items = corpus.items.size();
  return r;
}

EvalCorpus parse_eval_corpus(std::string_view jsonl) {
  EvalCorpus corpus;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      EvalItem item;
      const auto& id = obj.at("id");
      item.id = id.is_string() ? id.get<std::string>() : id.dump();
      item.candidate = eval_tokenize(obj.at("candidate").get<std::string>());
      for (const auto& ref : obj.at("references")) item.references.push_back(eval_tokenize(ref.get<std::string>()));
      corpus.items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::data, "evaluation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

EvalCorpus read_eval_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open evaluation file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_eval_corpus(buf.str());
}

std::string report_json(const MetricReport& report) {
  nlohmann::json j{{"bleu4", report.bleu4}, {"rouge_l", report.rouge_l}, {"cider", report.cider},
                   {"n_items", report.n_items}};
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  return j.dump();
}

}  // namespace promptcap
