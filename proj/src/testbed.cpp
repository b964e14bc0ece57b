#include "promptcap/testbed.hpp"

#include "promptcap/concept_extraction.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace promptcap {

ToyEmbedder::ToyEmbedder(Index dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw Error(ErrorKind::argument, "ToyEmbedder: dimension must be positive");
}

Vector ToyEmbedder::gram_vector(std::string_view key) const {
  std::uint64_t state = fnv1a64(key, splitmix64(seed_ ^ 0x746f79656d626564ULL));
  Vector v(dim_);
  double sq = 0;
  for (Index i = 0; i < dim_; ++i) {
    state = splitmix64(state);
    // top 53 bits -> [0, 1) -> [-1, 1)
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;
    const double c = 2 * u - 1;
    v(i) = static_cast<real>(c);
    sq += c * c;
  }
  const double n = std::sqrt(sq);
  for (Index i = 0; i < dim_; ++i) v(i) = static_cast<real>(static_cast<double>(v(i)) / n);
  return v;
}

UnitVector ToyEmbedder::embed(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw Error(ErrorKind::argument, "toy_embed: empty text");
  std::vector<double> sum(static_cast<std::size_t>(dim_), 0.0);
  auto add = [&](const std::string& key) {
    const Vector g = gram_vector(key);
    for (Index i = 0; i < dim_; ++i) sum[static_cast<std::size_t>(i)] += static_cast<double>(g(i));
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + '\x1f' + tokens[i + 1]);
  }
  double sq = 0;
  for (double x : sum) sq += x * x;
  const double n = std::sqrt(sq);
  if (!(n > kDegenerateNorm)) throw Error(ErrorKind::degenerate_vector, "toy_embed: n-gram vectors cancel");
  Vector out(dim_);
  for (Index i = 0; i < dim_; ++i) out(i) = static_cast<real>(sum[static_cast<std::size_t>(i)] / n);
  return UnitVector::from_normalized(std::move(out));
}

void GapSpec::validate() const {
  if (!(offset_scale >= 0)) throw Error(ErrorKind::argument, "gap: offset_scale must be non-negative");
  if (!(noise_scale >= 0)) throw Error(ErrorKind::argument, "gap: noise_scale must be non-negative");
}

Vector gap_offset(const GapSpec& spec, Index dim) {
  Rng rng = make_stream(spec.rotation_seed, "gap-offset");
  std::normal_distribution<real> gauss(0, 1);
  Vector u(dim);
  for (Index i = 0; i < dim; ++i) u(i) = gauss(rng);
  return normalize(u).values();
}

UnitVector synth_vision(const UnitVector& text_feature, const GapSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.offset_scale == 0 && spec.noise_scale == 0) return text_feature;
  Vector v = text_feature.values();
  if (spec.offset_scale > 0) v += spec.offset_scale * gap_offset(spec, v.size());
  if (spec.noise_scale > 0) {
    std::normal_distribution<real> gauss(0, spec.noise_scale);
    for (Index i = 0; i < v.size(); ++i) v(i) += gauss(rng);
  }
  return normalize(v);
}

namespace {

const std::vector<std::string> kAdjectives{"black", "white", "brown", "small", "young", "large"};
const std::vector<std::string> kNouns{"dog", "cat", "horse", "bird", "man", "woman", "child", "boy", "girl"};
const std::vector<std::string> kVerbs{"running", "sitting", "standing", "jumping", "sleeping", "playing", "walking"};
const std::vector<std::string> kPlaces{"beach", "grass", "street", "table", "field", "road", "snow", "bed"};

}  // namespace

std::vector<CaptionRecord> toy_corpus(std::size_t size, std::uint64_t seed) {
  const std::size_t total = kAdjectives.size() * kNouns.size() * kVerbs.size() * kPlaces.size();
  if (size > total) {
    throw Error(ErrorKind::argument, "toy_corpus: at most " + std::to_string(total) + " distinct sentences");
  }
  std::vector<std::size_t> codes(total);
  std::iota(codes.begin(), codes.end(), std::size_t{0});
  Rng rng = make_stream(seed, "toy-corpus");
  std::shuffle(codes.begin(), codes.end(), rng);
  std::vector<CaptionRecord> out;
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t c = codes[i];
    const std::string& place = kPlaces[c % kPlaces.size()];
    c /= kPlaces.size();
    const std::string& verb = kVerbs[c % kVerbs.size()];
    c /= kVerbs.size();
    const std::string& noun = kNouns[c % kNouns.size()];
    c /= kNouns.size();
    const std::string& adj = kAdjectives[c];
    CaptionRecord r;
    r.id = "toy" + std::to_string(i);
    r.source = {"a", adj, noun, "is", verb, "on", "the", place};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AblationArm> default_ablation_arms() {
  return {{"base", false, false, false}, {"ia_fa", false, true, true}, {"full", true, true, true}};
}

MetricReport run_ablation_cell(const AblationSetup& setup, const AblationArm& arm, std::uint64_t seed) {
  if (setup.train.empty() || setup.test.empty()) throw Error(ErrorKind::empty_input, "ablation: empty train or test split");
  const ToyEmbedder embedder(setup.embed_dim, setup.embed_seed);
  const LanguageSet languages;

  TrainConfig cfg = setup.train_config;
  cfg.seed = seed;
  cfg.mode = TrainMode::text_only;
  cfg.use_cp = arm.use_cp;
  cfg.use_ia = arm.use_ia;
  cfg.use_fa = arm.use_fa;

  const Vocabulary vocab = build_vocab(std::span<const CaptionRecord>(setup.train), 1, -1);
  const ConceptVocabulary concepts =
      extract_concepts(setup.train, setup.concept_cap, default_stopwords("en"), setup.concept_max_len);
  const ConceptBank bank = embed_concepts(concepts, embedder);

  DecoderConfig model = setup.model;
  model.vocab_size = vocab.size();
  model.d_clip = static_cast<int>(embedder.dim());
  Rng init_rng = make_stream(seed, "init");
  const TrainingSet set = make_text_training_set(setup.train, embedder, vocab, languages, cfg);
  const TrainResult trained = train(set, bank, init_decoder(model, init_rng), cfg);

  DecodeOptions decode = setup.decode;
  decode.k_prompts = cfg.prompts();
  Rng vision_rng = make_stream(seed, "vision");
  EvalCorpus corpus;
  for (const CaptionRecord& r : setup.test) {
    const UnitVector v = synth_vision(embedder.embed(r.source), setup.gap, vision_rng);
    const CaptionResult c = caption_feature(v, 0, bank, trained.params, decode);
    corpus.items.push_back({r.id, eval_tokenize(join(vocab.decode(c.best.tokens))), {eval_tokenize(join(r.source))}});
  }
  return evaluate(corpus);
}

AblationReport run_ablation(const AblationSetup& setup, std::span<const AblationArm> arms,
                            std::span<const std::uint64_t> seeds) {
  AblationReport report;
  for (const AblationArm& arm : arms) {
    for (std::uint64_t seed : seeds) {
      AblationCell cell;
      cell.arm = arm.name;
      cell.seed = seed;
      try {
        cell.report = run_ablation_cell(setup, arm, seed);
      } catch (const Error& e) {
        cell.error = std::string(to_string(e.kind())) + ": " + e.what();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::pair<real, real> AblationReport::stats(const std::string& arm, real MetricReport::* metric) const {
  std::vector<real> xs;
  for (const AblationCell& c : cells) {
    if (c.arm == arm && c.report) xs.push_back((*c.report).*metric);
  }
  if (xs.empty()) return {std::numeric_limits<real>::quiet_NaN(), std::numeric_limits<real>::quiet_NaN()};
  const real mean = std::accumulate(xs.begin(), xs.end(), real(0)) / static_cast<real>(xs.size());
  real var = 0;
  for (real x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<real>(xs.size()))};
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json results = nlohmann::json::object();
  std::vector<std::string> arms;
  for (const AblationCell& c : cells) {
    if (std::find(arms.begin(), arms.end(), c.arm) == arms.end()) arms.push_back(c.arm);
    nlohmann::json entry;
    if (c.report) {
      entry = {{"bleu4", c.report->bleu4}, {"rouge_l", c.report->rouge_l}, {"cider", c.report->cider}};
    } else {
      entry = {{"error", c.error}};
    }
    results[c.arm][std::to_string(c.seed)] = entry;
  }
  nlohmann::json summary = nlohmann::json::object();
  for (const std::string& arm : arms) {
    for (auto [name, metric] : {std::pair{"bleu4", &MetricReport::bleu4}, std::pair{"rouge_l", &MetricReport::rouge_l},
                                std::pair{"cider", &MetricReport::cider}}) {
      const auto [mean, sd] = stats(arm, metric);
      summary[arm][std::string(name) + "_mean"] = mean;
      summary[arm][std::string(name) + "_std"] = sd;
    }
  }
  return {{"results", results}, {"summary", summary}};
}

}  // namespace promptcap
