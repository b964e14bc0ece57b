#include "promptcap/inference.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace promptcap {

namespace {

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

real ranked_score(real logprob, Index length, real penalty) {
  if (penalty == 0 || length == 0) return logprob;
  return logprob / std::pow(static_cast<real>(length), penalty);
}

struct Candidate {
  real logprob;
  std::size_t parent;
  int token;
};

}  // namespace

std::vector<Hypothesis> beam_search(const StepFn& step, int beam_size, int max_len, real length_penalty) {
  if (max_len <= 0) throw Error(ErrorKind::argument, "beam_search: max_len must be positive");
  if (beam_size <= 0) throw Error(ErrorKind::argument, "beam_search: beam_size must be positive");

  std::vector<Hypothesis> active(1), done;
  for (int t = 0; t < max_len && !active.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < active.size(); ++p) {
      const Vector lp = step(active[p].tokens);
      for (Index v = 0; v < lp.size(); ++v) {
        if (lp(v) == kNegInf) continue;
        if (!std::isfinite(lp(v))) throw Error(ErrorKind::numeric, "beam_search: non-finite log-probability");
        cands.push_back({active[p].logprob + lp(v), p, static_cast<int>(v)});
      }
    }
    if (cands.empty()) throw Error(ErrorKind::numeric, "beam_search: every continuation has zero probability");
    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h;
      h.tokens = active[cands[i].parent].tokens;
      h.logprob = cands[i].logprob;
      if (cands[i].token == kEos) {
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        h.tokens.push_back(cands[i].token);
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);

    // Without a length penalty a longer hypothesis can only lose probability.
    if (length_penalty == 0 && !done.empty() && !active.empty()) {
      real best_done = kNegInf, best_active = kNegInf;
      for (const Hypothesis& h : done) best_done = std::max(best_done, h.logprob);
      for (const Hypothesis& h : active) best_active = std::max(best_active, h.logprob);
      if (best_done >= best_active) active.clear();
    }
  }
  for (Hypothesis& h : active) done.push_back(std::move(h));  // length-capped

  for (Hypothesis& h : done) h.score = ranked_score(h.logprob, h.length(), length_penalty);
  std::stable_sort(done.begin(), done.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return done;
}

Hypothesis greedy_search(const StepFn& step, int max_len) {
  if (max_len <= 0) throw Error(ErrorKind::argument, "greedy_search: max_len must be positive");
  Hypothesis h;
  for (int t = 0; t < max_len; ++t) {
    const Vector lp = step(h.tokens);
    Index best = -1;
    for (Index v = 0; v < lp.size(); ++v) {
      if (lp(v) == kNegInf) continue;
      if (!std::isfinite(lp(v))) throw Error(ErrorKind::numeric, "greedy_search: non-finite log-probability");
      if (best < 0 || lp(v) > lp(best)) best = v;
    }
    if (best < 0) throw Error(ErrorKind::numeric, "greedy_search: every continuation has zero probability");
    h.logprob += lp(best);
    if (best == kEos) {
      h.finished = true;
      break;
    }
    h.tokens.push_back(static_cast<int>(best));
  }
  h.score = h.logprob;
  return h;
}

StepFn decoder_step_fn(const DecoderParameters& params, const PromptSet& prompts, int lang,
                       const UnitVector& feature) {
  return [&params, &prompts, lang, &feature](std::span<const int> prefix) {
    std::vector<int> input;
    input.reserve(prefix.size() + 1);
    input.push_back(kBos);
    input.insert(input.end(), prefix.begin(), prefix.end());
    const Matrix lp = forward_log_probs(params, prompts, input, lang, feature);
    Vector last = lp.row(lp.rows() - 1).transpose();
    last(kPad) = kNegInf;
    last(kBos) = kNegInf;
    last(kUnk) = kNegInf;
    return last;
  };
}

CaptionResult caption_feature(const UnitVector& feature, int lang, const ConceptBank& bank,
                              const DecoderParameters& params, const DecodeOptions& options) {
  if (options.beam_size < 1) throw Error(ErrorKind::argument, "caption: beam_size must be at least 1");
  CaptionResult result;
  result.prompts = options.k_prompts > 0 ? retrieve_prompts(feature, bank, options.k_prompts)
                                         : PromptSet::empty(feature.dim());
  if (result.prompts.size() + options.max_len > params.config.max_len) {
    throw Error(ErrorKind::capacity, "caption: " + std::to_string(result.prompts.size()) + " prompts plus " +
                                         std::to_string(options.max_len) + " tokens exceed decoder length " +
                                         std::to_string(params.config.max_len));
  }
  const StepFn step = decoder_step_fn(params, result.prompts, lang, feature);
  if (options.greedy) {
    result.best = greedy_search(step, options.max_len);
  } else {
    result.best = beam_search(step, options.beam_size, options.max_len, options.length_penalty).front();
  }
  return result;
}

CaptionResult caption(std::span<const UnitVector> vision_rows, int lang, const ConceptBank& bank,
                      const DecoderParameters& params, const DecodeOptions& options) {
  if (vision_rows.empty()) throw Error(ErrorKind::empty_input, "caption: no vision rows");
  return caption_feature(pool_frames(vision_rows), lang, bank, params, options);
}

CaptionLine caption_line(const std::string& id, const CaptionResult& result, const Vocabulary& vocab,
                         const ConceptBank& bank) {
  CaptionLine line;
  line.id = id;
  line.caption = join(vocab.decode(result.best.tokens));
  for (Index i : result.prompts.indices) line.prompts.push_back(bank[i].surface);
  line.logprob = result.best.logprob;
  return line;
}

void write_captions(const std::filesystem::path& path, std::span<const CaptionLine> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write captions " + path.string());
  for (const CaptionLine& l : lines) {
    out << nlohmann::json{{"id", l.id}, {"caption", l.caption}, {"prompts", l.prompts}, {"logprob", l.logprob}}.dump()
        << '\n';
  }
}

std::vector<CaptionLine> read_captions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open captions " + path.string());
  std::vector<CaptionLine> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(text);
      lines.push_back({obj.at("id").get<std::string>(), obj.at("caption").get<std::string>(),
                       obj.at("prompts").get<std::vector<std::string>>(), obj.at("logprob").get<real>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::data, "captions " + path.string() + ": " + e.what());
    }
  }
  return lines;
}

}  // namespace promptcap
