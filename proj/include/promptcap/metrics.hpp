#pragma once

#include "promptcap/text.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace promptcap {

struct EvalItem {
  std::string id;
  Tokens candidate;
  std::vector<Tokens> references;
};

struct EvalCorpus {
  std::vector<EvalItem> items;

  // Ids unique, every item has at least one reference.
  void validate() const;
};

// Lowercase and strip punctuation from each whitespace token; empty tokens drop out.
Tokens eval_tokenize(std::string_view text);

// Corpus BLEU@4: pooled clipped n-gram precisions (n = 1..4, uniform weights)
// with the brevity penalty against the closest reference length. No smoothing.
real bleu4(const EvalCorpus& corpus);

// Mean over items of the LCS F-measure (beta = 1.2), using the best precision
// and the best recall over an item's references.
real rouge_l(const EvalCorpus& corpus);

struct CiderResult {
  real score = 0;
  std::vector<real> per_item;
  bool degenerate_idf = false;  // fewer than two items: every idf is zero
};

// CIDEr-D: tf-idf n-gram vectors (n = 1..4, document frequency over reference
// sets), clipped candidate weights, Gaussian length penalty with sigma 6,
// averaged over n and references, times 10.
CiderResult cider_d(const EvalCorpus& corpus);
inline real cider(const EvalCorpus& corpus) { return cider_d(corpus).score; }

struct MetricReport {
  real bleu4 = 0;
  real rouge_l = 0;
  real cider = 0;
  std::size_t n_items = 0;
  std::vector<std::string> warnings;
};

MetricReport evaluate(const EvalCorpus& corpus);

// JSON Lines {"id": ..., "candidate": "...", "references": [...]}, tokenized with eval_tokenize.
EvalCorpus read_eval_corpus(const std::filesystem::path& path);
EvalCorpus parse_eval_corpus(std::string_view jsonl);
std::string report_json(const MetricReport& report);

}  // namespace promptcap
