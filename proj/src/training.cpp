#include "promptcap/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace promptcap {

std::string to_string(TrainMode mode) { return mode == TrainMode::paired ? "paired" : "text_only"; }

TrainMode parse_train_mode(std::string_view name) {
  if (name == "text_only") return TrainMode::text_only;
  if (name == "paired") return TrainMode::paired;
  throw Error(ErrorKind::argument, "unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::argument, "train config: " + what); };
  if (!(lr > 0)) fail("lr must be positive");
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) fail("warmup_fraction outside [0,1]");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) fail("label_smoothing outside [0,1)");
  if (k_prompts < 0) fail("k_prompts must be non-negative");
  if (n_candidates < 1) fail("n_candidates must be positive");
  if (!(epsilon >= 0)) fail("epsilon must be non-negative");
  if (!(grad_clip >= 0)) fail("grad_clip must be non-negative");
}

std::vector<Tensor*> parameter_list(DecoderParameters& params) {
  std::vector<Tensor*> out;
  params.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

OptimizerState make_optimizer_state(std::span<Tensor* const> params) {
  OptimizerState s;
  for (const Tensor* t : params) {
    s.first.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
    s.second.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
  }
  return s;
}

OptimizerState make_optimizer_state(DecoderParameters& params) { return make_optimizer_state(parameter_list(params)); }

void adamw_step(std::span<Tensor* const> params, OptimizerState& state, real lr_t, real weight_decay) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw Error(ErrorKind::dimension, "adamw_step: optimizer state tracks " + std::to_string(state.first.size()) +
                                          " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = *params[i];
    const bool shapes_ok = state.first[i].rows() == t.value.rows() && state.first[i].cols() == t.value.cols() &&
                           (!t.has_grad() || (t.grad.rows() == t.value.rows() && t.grad.cols() == t.value.cols()));
    if (!shapes_ok) throw Error(ErrorKind::dimension, "adamw_step: shape mismatch for tensor " + std::to_string(i));
  }
  ++state.step;
  const auto t = static_cast<real>(state.step);
  const real c1 = 1 - std::pow(kAdamBeta1, t);
  const real c2 = 1 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.requires_grad) continue;
    p.value *= (1 - lr_t * weight_decay);
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    if (p.has_grad()) {
      m = kAdamBeta1 * m + (1 - kAdamBeta1) * p.grad;
      v = kAdamBeta2 * v + (1 - kAdamBeta2) * p.grad.cwiseProduct(p.grad);
    } else {
      m *= kAdamBeta1;
      v *= kAdamBeta2;
    }
    p.value.array() -= lr_t * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
  }
}

void adamw_step(DecoderParameters& params, OptimizerState& state, real lr_t, const TrainConfig& cfg) {
  adamw_step(parameter_list(params), state, lr_t, cfg.weight_decay);
}

real clip_grad_norm(std::span<Tensor* const> params, real max_norm) {
  real sq = 0;
  for (const Tensor* t : params) {
    if (t->has_grad()) sq += t->grad.squaredNorm();
  }
  const real norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw Error(ErrorKind::numeric, "gradient norm is not finite");
  if (max_norm > 0 && norm > max_norm) {
    const real factor = max_norm / norm;
    for (Tensor* t : params) {
      if (t->has_grad()) t->grad *= factor;
    }
  }
  return norm;
}

real lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps) {
    throw Error(ErrorKind::argument,
                "lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  // the small offset keeps e.g. 0.1 * 30 from rounding up to 4
  const auto warmup = static_cast<long long>(std::ceil(cfg.warmup_fraction * static_cast<real>(total_steps) - 1e-9));
  if (warmup <= 0 || step >= warmup) return cfg.lr;
  return cfg.lr * static_cast<real>(step) / static_cast<real>(warmup);
}

void TrainingSet::validate(const DecoderConfig& config) const {
  if (targets.size() != features.size() || langs.size() != features.size()) {
    throw Error(ErrorKind::dimension, "training set: features, targets and languages differ in length");
  }
  if (!candidates.empty() && candidates.size() != features.size()) {
    throw Error(ErrorKind::data, "training set: candidate sets do not cover every record");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].dim() != config.d_clip) {
      throw Error(ErrorKind::dimension, "training set: record " + std::to_string(i) + " has feature dimension " +
                                            std::to_string(features[i].dim()) + ", decoder expects " +
                                            std::to_string(config.d_clip));
    }
    if (langs[i] < 0 || langs[i] >= config.n_languages) {
      throw Error(ErrorKind::data, "training set: record " + std::to_string(i) + " has unknown language id");
    }
    for (int id : targets[i]) {
      if (id < 0 || id >= config.vocab_size) throw Error(ErrorKind::vocabulary, "training set: token id out of range");
    }
    if (!candidates.empty()) {
      const CandidateSet& c = candidates[i];
      if (c.anchor != static_cast<Index>(i) || c.members.empty()) {
        throw Error(ErrorKind::data, "training set: candidate set " + std::to_string(i) + " is not anchored at it");
      }
      for (Index m : c.members) {
        if (m < 0 || m >= static_cast<Index>(features.size())) {
          throw Error(ErrorKind::bound, "training set: candidate member out of range");
        }
      }
    }
  }
}

TrainingSet make_training_set(std::span<const CaptionRecord> corpus, std::vector<UnitVector> features,
                              const Vocabulary& vocab, const LanguageSet& languages, const TrainConfig& cfg) {
  if (features.size() != corpus.size()) {
    throw Error(ErrorKind::data, "training set: " + std::to_string(features.size()) + " features for " +
                                     std::to_string(corpus.size()) + " records");
  }
  TrainingSet set;
  set.features = std::move(features);
  for (const CaptionRecord& r : corpus) {
    validate(r, languages);
    set.targets.push_back(vocab.encode(r.output()));
    set.langs.push_back(languages.id(r.lang));
  }
  if (cfg.candidates() > 1) set.candidates = build_candidate_sets(set.features, cfg.candidates(), set.langs);
  return set;
}

TrainingSet make_text_training_set(std::span<const CaptionRecord> corpus, const TextEmbedder& embedder,
                                   const Vocabulary& vocab, const LanguageSet& languages, const TrainConfig& cfg) {
  if (corpus.empty()) throw Error(ErrorKind::empty_input, "training corpus is empty");
  std::vector<UnitVector> features;
  for (const CaptionRecord& r : corpus) features.push_back(embedder.embed(r.source));
  return make_training_set(corpus, std::move(features), vocab, languages, cfg);
}

TrainStreams::TrainStreams(std::uint64_t run_seed)
    : ia(make_stream(run_seed, "ia")),
      fa(make_stream(run_seed, "fa")),
      shuffle(make_stream(run_seed, "shuffle")),
      seed(run_seed) {}

PreparedExample prepare_example(std::size_t index, const TrainingSet& set, const ConceptBank& bank,
                                const TrainConfig& cfg, Rng& ia_rng, Rng& fa_rng) {
  PreparedExample ex;
  std::size_t source = index;
  if (cfg.candidates() > 1) {
    if (set.candidates.empty()) throw Error(ErrorKind::data, "input augmentation needs candidate sets");
    source = static_cast<std::size_t>(input_augment(set.candidates[index], ia_rng));
  }
  ex.feature = feature_augment(set.features[source], NoiseConfig{cfg.noise_variance(), 0}, fa_rng);
  ex.prompts = cfg.prompts() > 0 ? retrieve_prompts(ex.feature, bank, cfg.prompts()) : PromptSet::empty(ex.feature.dim());
  ex.target = set.targets[index];
  ex.lang = set.langs[index];
  return ex;
}

namespace {

std::vector<int> teacher_input(const std::vector<int>& target) {
  std::vector<int> in{kBos};
  in.insert(in.end(), target.begin(), target.end());
  return in;
}

std::vector<int> teacher_output(const std::vector<int>& target) {
  std::vector<int> out(target);
  out.push_back(kEos);
  return out;
}

}  // namespace

real examples_loss(const DecoderParameters& params, std::span<const PreparedExample> examples, real smoothing) {
  Graph g;
  DecoderGraph dg(g, params);
  std::vector<Var> parts;
  std::vector<int> targets;
  for (const PreparedExample& ex : examples) {
    const InputSequence in = dg.build_input(ex.prompts, teacher_input(ex.target), ex.lang);
    parts.push_back(dg.logits(in, ex.feature));
    const auto out = teacher_output(ex.target);
    targets.insert(targets.end(), out.begin(), out.end());
  }
  return softmax_cross_entropy_smoothed(concat_rows(parts), targets, smoothing, kPad).value()(0, 0);
}

real train_step(std::span<const std::size_t> batch, const TrainingSet& set, const ConceptBank& bank,
                DecoderParameters& params, OptimizerState& opt, const TrainConfig& cfg, TrainStreams& streams,
                long long total_steps) {
  if (batch.empty()) throw Error(ErrorKind::argument, "train_step: empty batch");
  const long long update = opt.step + 1;
  const real lr = lr_at(std::min(update, total_steps), std::max(total_steps, update), cfg);
  Rng dropout_rng = make_stream(streams.seed, "dropout", static_cast<std::uint64_t>(update));

  params.zero_grad();
  Graph g;
  DecoderGraph dg(g, params);
  const ForwardOptions fwd{true, &dropout_rng};
  std::vector<Var> parts;
  std::vector<int> targets;
  for (std::size_t index : batch) {
    if (index >= set.size()) throw Error(ErrorKind::bound, "train_step: record index out of range");
    const PreparedExample ex = prepare_example(index, set, bank, cfg, streams.ia, streams.fa);
    const InputSequence in = dg.build_input(ex.prompts, teacher_input(ex.target), ex.lang);
    parts.push_back(dg.logits(in, ex.feature, fwd));
    const auto out = teacher_output(ex.target);
    targets.insert(targets.end(), out.begin(), out.end());
  }
  const Var loss = softmax_cross_entropy_smoothed(concat_rows(parts), targets, cfg.label_smoothing, kPad);
  const real value = loss.value()(0, 0);
  if (!std::isfinite(value)) throw Error(ErrorKind::numeric, "train_step: loss is not finite");
  g.backward(loss);

  const std::vector<Tensor*> tensors = parameter_list(params);
  clip_grad_norm(tensors, cfg.grad_clip);
  adamw_step(tensors, opt, lr, cfg.weight_decay);
  return value;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> lengths, int batch_size, Rng& rng) {
  if (batch_size < 1) throw Error(ErrorKind::argument, "make_batches: batch_size must be positive");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t window = bs * 8;
  for (std::size_t start = 0; start < order.size(); start += window) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

TrainResult train(const TrainingSet& set, const ConceptBank& bank, DecoderParameters params, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (set.size() == 0) throw Error(ErrorKind::empty_input, "train: empty training set");
  set.validate(params.config);
  if (cfg.candidates() > 1 && set.candidates.empty()) {
    throw Error(ErrorKind::data, "train: input augmentation needs candidate sets");
  }

  const auto batches_per_epoch =
      static_cast<long long>((set.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size));
  const long long total = batches_per_epoch * cfg.epochs;
  std::vector<std::size_t> lengths;
  for (const auto& t : set.targets) lengths.push_back(t.size());

  TrainResult result;
  OptimizerState opt = make_optimizer_state(params);
  TrainStreams streams(cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : make_batches(lengths, cfg.batch_size, streams.shuffle)) {
      const real loss = train_step(batch, set, bank, params, opt, cfg, streams, total);
      TrainLogEntry entry;
      entry.step = opt.step;
      entry.lr = lr_at(opt.step, total, cfg);
      entry.loss = loss;
      entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back(entry);
      if (hooks.on_step) hooks.on_step(entry);
    }
    if (hooks.validate) {
      const real score = hooks.validate(params);
      if (!result.best_validation || score > *result.best_validation) {
        result.best_validation = score;
        result.best_epoch = epoch;
        result.params = params;
      }
    }
  }
  params.zero_grad();
  if (!hooks.validate) result.params = std::move(params);
  result.params.zero_grad();
  result.steps = opt.step;
  return result;
}

TrainResult fine_tune_paired(const TrainingSet& set, const ConceptBank& bank, DecoderParameters params,
                             TrainConfig cfg, const TrainHooks& hooks) {
  if (cfg.mode != TrainMode::paired) throw Error(ErrorKind::argument, "fine_tune_paired: mode must be paired");
  if (set.size() == 0) {
    TrainResult unchanged;
    unchanged.params = std::move(params);
    return unchanged;
  }
  if (!set.candidates.empty()) throw Error(ErrorKind::argument, "fine_tune_paired: candidate sets are not used");
  return train(set, bank, std::move(params), cfg, hooks);
}

std::string log_line(const TrainLogEntry& entry) {
  return nlohmann::json{{"step", entry.step}, {"lr", entry.lr}, {"loss", entry.loss}, {"wall_ms", entry.wall_ms}}.dump();
}

}  // namespace promptcap
