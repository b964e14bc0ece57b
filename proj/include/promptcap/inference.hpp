#pragma once

#include "promptcap/decoder.hpp"
#include "promptcap/text.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace promptcap {

// Log-distribution over the vocabulary for the next token after `prefix`
// (generated tokens only, BOS implied). Entries may be -inf.
using StepFn = std::function<Vector(std::span<const int> prefix)>;

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS excluded
  real logprob = 0;         // includes the EOS step when finished
  bool finished = false;    // false: stopped by max_len
  real score = 0;           // logprob / length^penalty

  // Scored length: tokens plus EOS when finished.
  Index length() const { return static_cast<Index>(tokens.size()) + (finished ? 1 : 0); }
};

// Hypotheses ranked best first. max_len caps the generated tokens, EOS
// included. Candidates are ordered by score, then parent beam, then token id.
std::vector<Hypothesis> beam_search(const StepFn& step, int beam_size, int max_len, real length_penalty = 0);
// Argmax at every step, lowest id on ties.
Hypothesis greedy_search(const StepFn& step, int max_len);

struct DecodeOptions {
  int k_prompts = 16;
  int beam_size = 3;
  int max_len = 30;
  real length_penalty = 0;
  bool greedy = false;
};

struct CaptionResult {
  Hypothesis best;
  PromptSet prompts;
};

// Decoder step function for a fixed feature and prompt set. PAD, BOS and UNK
// are never produced.
StepFn decoder_step_fn(const DecoderParameters& params, const PromptSet& prompts, int lang,
                       const UnitVector& feature);

// V -> P -> S for one feature (already pooled).
CaptionResult caption_feature(const UnitVector& feature, int lang, const ConceptBank& bank,
                              const DecoderParameters& params, const DecodeOptions& options);
// Pools the frames first.
CaptionResult caption(std::span<const UnitVector> vision_rows, int lang, const ConceptBank& bank,
                      const DecoderParameters& params, const DecodeOptions& options);

struct CaptionLine {
  std::string id;
  std::string caption;
  std::vector<std::string> prompts;
  real logprob = 0;
};

CaptionLine caption_line(const std::string& id, const CaptionResult& result, const Vocabulary& vocab,
                         const ConceptBank& bank);
// JSON Lines {"id", "caption", "prompts", "logprob"}.
void write_captions(const std::filesystem::path& path, std::span<const CaptionLine> lines);
std::vector<CaptionLine> read_captions(const std::filesystem::path& path);

}  // namespace promptcap
