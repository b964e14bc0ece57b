#include "promptcap/decoder.hpp"

#include <cmath>
#include <numeric>

namespace promptcap {

DecoderConfig DecoderConfig::base_preset(int vocab_size, int n_languages, int d_clip) {
  DecoderConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 512;
  c.n_layers = 6;
  c.n_heads = 8;
  c.d_ff = 2048;
  c.max_len = 64;
  c.n_languages = n_languages;
  c.d_clip = d_clip;
  c.dropout = real(0.1);
  return c;
}

DecoderConfig DecoderConfig::test_preset(int vocab_size, int n_languages, int d_clip) {
  DecoderConfig c;
  c.vocab_size = vocab_size;
  c.n_languages = n_languages;
  c.d_clip = d_clip;
  return c;
}

void DecoderConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorKind::argument, "DecoderConfig: " + msg);
  };
  require(vocab_size > kNumSpecial, "vocab_size must exceed the special tokens");
  require(d_model > 0 && n_layers >= 0 && n_heads > 0 && d_ff > 0, "sizes must be positive");
  require(d_model % n_heads == 0, "d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                      std::to_string(n_heads));
  require(max_len > 0 && n_languages > 0 && d_clip > 0, "max_len, n_languages and d_clip must be positive");
  require(dropout >= 0 && dropout < 1, "dropout outside [0,1)");
}

namespace {

Matrix truncated_normal(Index rows, Index cols, real stddev, Rng& rng) {
  std::normal_distribution<real> gauss(real(0), stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    real x;
    do {
      x = gauss(rng);
    } while (std::abs(x) > 2 * stddev);
    m.data()[i] = x;
  }
  return m;
}

constexpr real kInitStd = real(0.02);

Tensor weight(Index rows, Index cols, Rng& rng) { return Tensor(truncated_normal(rows, cols, kInitStd, rng)); }
Tensor zeros(Index cols) { return Tensor(Matrix::Zero(1, cols)); }
Tensor ones(Index cols) { return Tensor(Matrix::Ones(1, cols)); }

Projector make_projector(Index d_in, Index d_out, Rng& rng) {
  return Projector{weight(d_in, d_out, rng), zeros(d_out), ones(d_out), zeros(d_out)};
}

AttentionWeights make_attention(Index d, Rng& rng) {
  AttentionWeights a;
  a.wq = weight(d, d, rng);
  a.bq = zeros(d);
  a.wk = weight(d, d, rng);
  a.bk = zeros(d);
  a.wv = weight(d, d, rng);
  a.bv = zeros(d);
  a.wo = weight(d, d, rng);
  a.bo = zeros(d);
  return a;
}

Var bind_one(Graph& g, Tensor& t) { return g.param(t); }
Var bind_one(Graph& g, const Tensor& t) { return g.frozen(t); }

}  // namespace

DecoderParameters init_decoder(const DecoderConfig& config, Rng& rng) {
  config.validate();
  const Index d = config.d_model;
  DecoderParameters p;
  p.config = config;
  p.token_embedding = weight(config.vocab_size, d, rng);
  p.position_embedding = weight(config.max_len, d, rng);
  p.language_embedding = weight(config.n_languages, d, rng);
  p.embed_ln_gain = ones(d);
  p.embed_ln_bias = zeros(d);
  p.prompt_proj = make_projector(config.d_clip, d, rng);
  p.feature_proj = make_projector(config.d_clip, d, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    DecoderBlock b;
    b.ln1_gain = ones(d);
    b.ln1_bias = zeros(d);
    b.self_attn = make_attention(d, rng);
    b.ln2_gain = ones(d);
    b.ln2_bias = zeros(d);
    b.cross_attn = make_attention(d, rng);
    b.ln3_gain = ones(d);
    b.ln3_bias = zeros(d);
    b.ff1_weight = weight(d, config.d_ff, rng);
    b.ff1_bias = zeros(config.d_ff);
    b.ff2_weight = weight(config.d_ff, d, rng);
    b.ff2_bias = zeros(d);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_gain = ones(d);
  p.final_ln_bias = zeros(d);
  p.out_weight = weight(d, config.vocab_size, rng);
  p.out_bias = zeros(config.vocab_size);
  return p;
}

void DecoderParameters::zero_grad() {
  visit([](const std::string&, Tensor& t) { t.zero_grad(); });
}

Index DecoderParameters::parameter_count() const {
  Index n = 0;
  visit([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

DecoderGraph::DecoderGraph(Graph& graph, DecoderParameters& params) : graph_(graph), config_(params.config) {
  bind(params);
}

DecoderGraph::DecoderGraph(Graph& graph, const DecoderParameters& params) : graph_(graph), config_(params.config) {
  bind(params);
}

template <typename Params>
void DecoderGraph::bind(Params& p) {
  Graph& g = graph_;
  token_embedding_ = bind_one(g, p.token_embedding);
  position_embedding_ = bind_one(g, p.position_embedding);
  language_embedding_ = bind_one(g, p.language_embedding);
  embed_ln_gain_ = bind_one(g, p.embed_ln_gain);
  embed_ln_bias_ = bind_one(g, p.embed_ln_bias);
  auto projector = [&](auto& src) {
    return BoundProjector{bind_one(g, src.weight), bind_one(g, src.bias), bind_one(g, src.ln_gain),
                          bind_one(g, src.ln_bias)};
  };
  auto attn = [&](auto& a) {
    return BoundAttention{bind_one(g, a.wq), bind_one(g, a.bq), bind_one(g, a.wk), bind_one(g, a.bk),
                          bind_one(g, a.wv), bind_one(g, a.bv), bind_one(g, a.wo), bind_one(g, a.bo)};
  };
  prompt_proj_ = projector(p.prompt_proj);
  feature_proj_ = projector(p.feature_proj);
  blocks_.clear();
  for (auto& b : p.blocks) {
    BoundBlock bb;
    bb.ln1_gain = bind_one(g, b.ln1_gain);
    bb.ln1_bias = bind_one(g, b.ln1_bias);
    bb.self_attn = attn(b.self_attn);
    bb.ln2_gain = bind_one(g, b.ln2_gain);
    bb.ln2_bias = bind_one(g, b.ln2_bias);
    bb.cross_attn = attn(b.cross_attn);
    bb.ln3_gain = bind_one(g, b.ln3_gain);
    bb.ln3_bias = bind_one(g, b.ln3_bias);
    bb.ff1_weight = bind_one(g, b.ff1_weight);
    bb.ff1_bias = bind_one(g, b.ff1_bias);
    bb.ff2_weight = bind_one(g, b.ff2_weight);
    bb.ff2_bias = bind_one(g, b.ff2_bias);
    blocks_.push_back(bb);
  }
  final_ln_gain_ = bind_one(g, p.final_ln_gain);
  final_ln_bias_ = bind_one(g, p.final_ln_bias);
  out_weight_ = bind_one(g, p.out_weight);
  out_bias_ = bind_one(g, p.out_bias);
}

Var DecoderGraph::embed_sequence(std::span<const int> tokens, int lang) {
  const auto length = static_cast<Index>(tokens.size());
  if (length == 0) throw Error(ErrorKind::empty_input, "embed_sequence: no tokens");
  if (length > config_.max_len) {
    throw Error(ErrorKind::capacity, "embed_sequence: " + std::to_string(length) + " tokens exceed max_len " +
                                         std::to_string(config_.max_len));
  }
  if (lang < 0 || lang >= config_.n_languages) {
    throw Error(ErrorKind::bound, "embed_sequence: language id " + std::to_string(lang) + " out of range");
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  const int lang_id[1] = {lang};
  Var sum = add(embedding_lookup(token_embedding_, tokens), embedding_lookup(position_embedding_, positions));
  sum = add(sum, embedding_lookup(language_embedding_, lang_id));
  return layer_norm(sum, embed_ln_gain_, embed_ln_bias_);
}

Var DecoderGraph::project(const BoundProjector& p, Var x) {
  return layer_norm(add(matmul(x, p.weight), p.bias), p.ln_gain, p.ln_bias);
}

Var DecoderGraph::project_prompts(const Matrix& prompt_features) {
  if (prompt_features.cols() != config_.d_clip) {
    throw Error(ErrorKind::dimension, "project_prompts: prompt dimension " + std::to_string(prompt_features.cols()) +
                                          " vs d_clip " + std::to_string(config_.d_clip));
  }
  return project(prompt_proj_, graph_.constant(prompt_features));
}

Var DecoderGraph::project_feature(const UnitVector& global_feature) {
  if (global_feature.dim() != config_.d_clip) {
    throw Error(ErrorKind::dimension, "project_feature: feature dimension " + std::to_string(global_feature.dim()) +
                                          " vs d_clip " + std::to_string(config_.d_clip));
  }
  return project(feature_proj_, graph_.constant(global_feature.values().transpose()));
}

InputSequence DecoderGraph::build_input(const PromptSet& prompts, std::span<const int> tokens, int lang) {
  const Index k = prompts.features.rows();
  const auto length = static_cast<Index>(tokens.size());
  if (k + length > config_.max_len) {
    throw Error(ErrorKind::capacity, "build_input: " + std::to_string(k) + " prompts + " + std::to_string(length) +
                                         " tokens exceed max_len " + std::to_string(config_.max_len));
  }
  InputSequence in;
  in.prompt_len = k;
  in.token_ids.assign(tokens.begin(), tokens.end());
  in.lang = lang;
  std::vector<Var> parts;
  if (k > 0) parts.push_back(project_prompts(prompts.features));
  if (length > 0) parts.push_back(embed_sequence(tokens, lang));
  if (parts.empty()) throw Error(ErrorKind::empty_input, "build_input: no prompts and no tokens");
  in.embeddings = parts.size() == 1 ? parts.front() : concat_rows(parts);
  return in;
}

Var DecoderGraph::drop(Var x, const ForwardOptions& options) {
  if (!options.training || config_.dropout == 0) return x;
  if (!options.dropout_rng) throw Error(ErrorKind::argument, "training forward with dropout needs a dropout stream");
  return dropout(x, config_.dropout, true, *options.dropout_rng);
}

Var DecoderGraph::multi_head(const BoundAttention& w, Var queries, Var memory, const Mask& mask) {
  Var q = add(matmul(queries, w.wq), w.bq);
  Var k = add(matmul(memory, w.wk), w.bk);
  Var v = add(matmul(memory, w.wv), w.bv);
  const Index head = config_.d_model / config_.n_heads;
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(config_.n_heads));
  for (int h = 0; h < config_.n_heads; ++h) {
    heads.push_back(attention(slice_cols(q, h * head, head), slice_cols(k, h * head, head),
                              slice_cols(v, h * head, head), mask));
  }
  Var joined = heads.size() == 1 ? heads.front() : concat_cols(heads);
  return add(matmul(joined, w.wo), w.bo);
}

Mask causal_prefix_mask(Index prompt_len, Index token_len) {
  const Index n = prompt_len + token_len;
  Mask m = Mask::Constant(n, n, false);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < prompt_len; ++c) m(r, c) = true;
    if (r >= prompt_len) {
      for (Index c = prompt_len; c <= r; ++c) m(r, c) = true;
    }
  }
  return m;
}

Var DecoderGraph::logits(const InputSequence& input, const UnitVector& global_feature, const ForwardOptions& options) {
  const Index k = input.prompt_len;
  const auto length = static_cast<Index>(input.token_ids.size());
  if (length == 0) throw Error(ErrorKind::empty_input, "logits: no token rows");
  const Mask self_mask = causal_prefix_mask(k, length);
  const Mask cross_mask = Mask::Constant(k + length, 1, true);

  Var memory = project_feature(global_feature);
  Var x = drop(input.embeddings, options);
  for (const BoundBlock& b : blocks_) {
    Var h = layer_norm(x, b.ln1_gain, b.ln1_bias);
    x = add(x, drop(multi_head(b.self_attn, h, h, self_mask), options));
    h = layer_norm(x, b.ln2_gain, b.ln2_bias);
    x = add(x, drop(multi_head(b.cross_attn, h, memory, cross_mask), options));
    h = layer_norm(x, b.ln3_gain, b.ln3_bias);
    h = gelu(add(matmul(h, b.ff1_weight), b.ff1_bias));
    h = add(matmul(h, b.ff2_weight), b.ff2_bias);
    x = add(x, drop(h, options));
  }
  Var tokens = k > 0 ? slice_rows(x, k, length) : x;
  Var h = layer_norm(tokens, final_ln_gain_, final_ln_bias_);
  Var out = add(matmul(h, out_weight_), out_bias_);
  if (!out.value().allFinite()) throw Error(ErrorKind::numeric, "decoder produced non-finite logits");
  return out;
}

Matrix forward_log_probs(const DecoderParameters& params, const PromptSet& prompts, std::span<const int> tokens,
                         int lang, const UnitVector& global_feature) {
  Graph g;
  DecoderGraph dg(g, params);
  InputSequence in = dg.build_input(prompts, tokens, lang);
  return log_softmax_rows(dg.logits(in, global_feature).value());
}

Matrix forward(const DecoderParameters& params, const PromptSet& prompts, std::span<const int> tokens, int lang,
               const UnitVector& global_feature) {
  return forward_log_probs(params, prompts, tokens, lang, global_feature).array().exp().matrix();
}

}  // namespace promptcap
