#pragma once

#include "promptcap/inference.hpp"
#include "promptcap/metrics.hpp"
#include "promptcap/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace promptcap {

// Sum of seeded pseudo-random unit vectors, one per unigram and bigram,
// normalized. Integer hashing plus IEEE arithmetic only, so results are
// bit-identical everywhere.
class ToyEmbedder final : public TextEmbedder {
 public:
  explicit ToyEmbedder(Index dim = 64, std::uint64_t seed = 0);

  Index dim() const override { return dim_; }
  std::uint64_t seed() const { return seed_; }
  UnitVector embed(std::span<const std::string> tokens) const override;
  // Unit hash vector of one n-gram (tokens joined by U+001F).
  Vector gram_vector(std::string_view key) const;

 private:
  Index dim_;
  std::uint64_t seed_;
};

struct GapSpec {
  real offset_scale = 0;
  std::uint64_t rotation_seed = 0;
  real noise_scale = 0;  // per-dimension standard deviation

  void validate() const;
};

// The shared unit offset direction u of a gap.
Vector gap_offset(const GapSpec& spec, Index dim);

// normalize(text + offset_scale * u + N(0, noise_scale^2) per dimension).
UnitVector synth_vision(const UnitVector& text_feature, const GapSpec& spec, Rng& rng);

// Distinct template sentences "a <adj> <noun> is <verb> on the <place>" drawn without replacement.
std::vector<CaptionRecord> toy_corpus(std::size_t size, std::uint64_t seed);

struct AblationArm {
  std::string name;
  bool use_cp = true;
  bool use_ia = true;
  bool use_fa = true;
};

// base (no CP/IA/FA), ia_fa, full.
std::vector<AblationArm> default_ablation_arms();

struct AblationSetup {
  std::vector<CaptionRecord> train;
  std::vector<CaptionRecord> test;  // held out; sources double as references
  TrainConfig train_config;
  DecoderConfig model;  // vocab_size and d_clip are filled per run
  DecodeOptions decode;
  Index embed_dim = 64;
  std::uint64_t embed_seed = 0;
  GapSpec gap;
  int concept_cap = 1000;
  int concept_max_len = 3;
};

struct AblationCell {
  std::string arm;
  std::uint64_t seed = 0;
  std::optional<MetricReport> report;
  std::string error;
};

struct AblationReport {
  std::vector<AblationCell> cells;

  // Mean and population std of a metric over an arm's successful seeds.
  std::pair<real, real> stats(const std::string& arm, real MetricReport::* metric) const;
  nlohmann::json to_json() const;
};

// One text-only model per (arm, seed); captions synthetic vision features
// of the held-out items. A failing cell records its error; the rest still run.
AblationReport run_ablation(const AblationSetup& setup, std::span<const AblationArm> arms,
                            std::span<const std::uint64_t> seeds);

// One ablation cell (also used by the CLI).
MetricReport run_ablation_cell(const AblationSetup& setup, const AblationArm& arm, std::uint64_t seed);

}  // namespace promptcap
