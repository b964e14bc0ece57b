#pragma once

#include "promptcap/augmentation.hpp"
#include "promptcap/decoder.hpp"
#include "promptcap/text.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace promptcap {

enum class TrainMode { text_only, paired };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  real lr = real(1e-4);
  real warmup_fraction = real(0.10);
  int epochs = 10;
  int batch_size = 32;
  real weight_decay = real(0.01);
  real label_smoothing = real(0.1);
  int k_prompts = 16;
  int n_candidates = 5;
  real epsilon = real(0.01);
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::text_only;
  real grad_clip = 1;  // global norm; 0 disables
  // Ablation switches: concept prompts, input augmentation, feature augmentation.
  bool use_cp = true;
  bool use_ia = true;
  bool use_fa = true;

  void validate() const;
  int prompts() const { return use_cp ? k_prompts : 0; }
  int candidates() const { return use_ia && mode == TrainMode::text_only ? n_candidates : 1; }
  real noise_variance() const { return use_fa && mode == TrainMode::text_only ? epsilon : real(0); }
};

inline constexpr real kAdamBeta1 = real(0.9);
inline constexpr real kAdamBeta2 = real(0.999);
inline constexpr real kAdamEps = real(1e-8);

struct OptimizerState {
  std::vector<Matrix> first, second;  // per tensor, same shapes
  long long step = 0;                 // updates applied so far
};

std::vector<Tensor*> parameter_list(DecoderParameters& params);
OptimizerState make_optimizer_state(std::span<Tensor* const> params);
OptimizerState make_optimizer_state(DecoderParameters& params);

// w <- w - lr*wd*w, then the bias-corrected Adam step on tensor.grad (an
// empty grad counts as zero).
void adamw_step(std::span<Tensor* const> params, OptimizerState& state, real lr_t, real weight_decay);
void adamw_step(DecoderParameters& params, OptimizerState& state, real lr_t, const TrainConfig& cfg);

// Scales every gradient so the global L2 norm is at most max_norm. Returns the norm before scaling.
real clip_grad_norm(std::span<Tensor* const> params, real max_norm);

// Linear ramp from 0 over the first ceil(warmup_fraction * total) steps, then lr.
real lr_at(long long step, long long total_steps, const TrainConfig& cfg);

// Decoder-side view of a corpus: one global feature, target ids and language
// per record. In text mode the features are f_t of the sources; in paired
// mode they are pooled vision features.
struct TrainingSet {
  std::vector<UnitVector> features;
  std::vector<std::vector<int>> targets;  // without BOS/EOS
  std::vector<int> langs;
  std::vector<CandidateSet> candidates;  // text mode with IA only

  std::size_t size() const { return features.size(); }
  void validate(const DecoderConfig& config) const;
};

// Pairs each record with a precomputed feature; in text mode with IA, also
// builds same-language candidate sets.
TrainingSet make_training_set(std::span<const CaptionRecord> corpus, std::vector<UnitVector> features,
                              const Vocabulary& vocab, const LanguageSet& languages, const TrainConfig& cfg);
// Same with every source embedded by `embedder`.
TrainingSet make_text_training_set(std::span<const CaptionRecord> corpus, const TextEmbedder& embedder,
                                   const Vocabulary& vocab, const LanguageSet& languages, const TrainConfig& cfg);

// One record after augmentation: the feature the decoder sees, its prompts, the clean target.
struct PreparedExample {
  UnitVector feature;
  PromptSet prompts;
  std::vector<int> target;
  int lang = 0;
};

struct TrainStreams {
  Rng ia, fa, shuffle;
  std::uint64_t seed = 0;

  explicit TrainStreams(std::uint64_t run_seed);
};

// IA draw, then FA noise, then prompt retrieval from the augmented feature.
PreparedExample prepare_example(std::size_t index, const TrainingSet& set, const ConceptBank& bank,
                                const TrainConfig& cfg, Rng& ia_rng, Rng& fa_rng);

// Smoothed cross-entropy over all target tokens (EOS included) of the examples, pooled.
real examples_loss(const DecoderParameters& params, std::span<const PreparedExample> examples, real smoothing);

// One AdamW update on a batch of record indices; returns the pre-update loss.
real train_step(std::span<const std::size_t> batch, const TrainingSet& set, const ConceptBank& bank,
                DecoderParameters& params, OptimizerState& opt, const TrainConfig& cfg, TrainStreams& streams,
                long long total_steps);

// Shuffled batches of records with similar target lengths.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> lengths, int batch_size, Rng& rng);

struct TrainLogEntry {
  long long step = 0;
  real lr = 0;
  real loss = 0;
  double wall_ms = 0;
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_step;
  // Validation CIDEr after each epoch; the best epoch's parameters are kept.
  std::function<real(const DecoderParameters&)> validate;
};

struct TrainResult {
  DecoderParameters params;
  std::vector<TrainLogEntry> log;
  long long steps = 0;
  std::optional<real> best_validation;
  int best_epoch = -1;
};

TrainResult train(const TrainingSet& set, const ConceptBank& bank, DecoderParameters params, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Paired fine-tuning: `set` carries pooled vision features; no IA or FA.
// An empty set returns the parameters unchanged.
TrainResult fine_tune_paired(const TrainingSet& set, const ConceptBank& bank, DecoderParameters params,
                             TrainConfig cfg, const TrainHooks& hooks = {});

// JSON Lines {step, lr, loss, wall_ms}.
std::string log_line(const TrainLogEntry& entry);

}  // namespace promptcap
