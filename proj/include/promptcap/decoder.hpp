#pragma once

#include "promptcap/autodiff.hpp"
#include "promptcap/embedding_space.hpp"

#include <span>
#include <string>
#include <vector>

namespace promptcap {

struct DecoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 64;  // prompt rows + token rows
  int n_languages = 1;
  int d_clip = 64;
  real dropout = 0;

  // Transformer-BASE sizes: 6 layers, 512 wide, 8 heads, 2048 FFN.
  static DecoderConfig base_preset(int vocab_size, int n_languages, int d_clip);
  // Desk-scale test sizes: 2 layers, 64 wide, 4 heads, 128 FFN.
  static DecoderConfig test_preset(int vocab_size, int n_languages, int d_clip);

  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

// Maps a d_clip feature to d_model: affine layer followed by layer norm.
struct Projector {
  Tensor weight, bias, ln_gain, ln_bias;
};

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct DecoderBlock {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights self_attn;
  Tensor ln2_gain, ln2_bias;
  AttentionWeights cross_attn;
  Tensor ln3_gain, ln3_bias;
  Tensor ff1_weight, ff1_bias, ff2_weight, ff2_bias;
};

// Every trainable weight: embedding layer e(.), prompt projector, feature
// projector (same structure, separate storage), decoder blocks, output head.
struct DecoderParameters {
  DecoderConfig config;
  Tensor token_embedding, position_embedding, language_embedding;
  Tensor embed_ln_gain, embed_ln_bias;
  Projector prompt_proj;
  Projector feature_proj;
  std::vector<DecoderBlock> blocks;
  Tensor final_ln_gain, final_ln_bias;
  Tensor out_weight, out_bias;

  // f(name, tensor) over all tensors in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  void zero_grad();
  Index parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f);
};

// Truncated normal (std 0.02, cut at 2 std) weights, zero biases, unit LN gains.
DecoderParameters init_decoder(const DecoderConfig& config, Rng& init_rng);

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

// E = Concat(prompt rows, token rows) recorded on a graph.
struct InputSequence {
  Var embeddings;  // (K + L) x d_model
  Index prompt_len = 0;
  std::vector<int> token_ids;
  int lang = 0;
};

// The decoder's parameters bound to one graph, either trainable (gradients
// flow into the tensors) or frozen.
class DecoderGraph {
 public:
  DecoderGraph(Graph& graph, DecoderParameters& params);
  DecoderGraph(Graph& graph, const DecoderParameters& params);

  Graph& graph() const { return graph_; }
  const DecoderConfig& config() const { return config_; }

  // Row i = LN(tok[s_i] + pos[i] + lang_emb[lang]).
  Var embed_sequence(std::span<const int> tokens, int lang);
  // Prompt projector applied row-wise to K x d_clip features.
  Var project_prompts(const Matrix& prompt_features);
  // Memory row f from the global feature.
  Var project_feature(const UnitVector& global_feature);
  InputSequence build_input(const PromptSet& prompts, std::span<const int> tokens, int lang);
  // L x vocab logits for the token rows of `input`.
  Var logits(const InputSequence& input, const UnitVector& global_feature, const ForwardOptions& options = {});

 private:
  struct BoundProjector {
    Var weight, bias, ln_gain, ln_bias;
  };
  struct BoundAttention {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct BoundBlock {
    Var ln1_gain, ln1_bias;
    BoundAttention self_attn;
    Var ln2_gain, ln2_bias;
    BoundAttention cross_attn;
    Var ln3_gain, ln3_bias;
    Var ff1_weight, ff1_bias, ff2_weight, ff2_bias;
  };

  template <typename Params>
  void bind(Params& params);
  Var project(const BoundProjector& p, Var x);
  Var multi_head(const BoundAttention& w, Var queries, Var memory, const Mask& mask);
  Var drop(Var x, const ForwardOptions& options);

  Graph& graph_;
  DecoderConfig config_;
  Var token_embedding_, position_embedding_, language_embedding_, embed_ln_gain_, embed_ln_bias_;
  BoundProjector prompt_proj_, feature_proj_;
  std::vector<BoundBlock> blocks_;
  Var final_ln_gain_, final_ln_bias_, out_weight_, out_bias_;
};

// Self-attention visibility over K prompt rows and L token rows: prompt rows
// see all prompt rows; token row i sees all prompts and tokens 0..i.
Mask causal_prefix_mask(Index prompt_len, Index token_len);

// p_theta(. | S_<i, P, f) for every token position: L x vocab probabilities.
Matrix forward(const DecoderParameters& params, const PromptSet& prompts, std::span<const int> tokens, int lang,
               const UnitVector& global_feature);
// Same as log-probabilities.
Matrix forward_log_probs(const DecoderParameters& params, const PromptSet& prompts, std::span<const int> tokens,
                         int lang, const UnitVector& global_feature);

template <typename Self, typename F>
void DecoderParameters::visit_impl(Self& self, F& f) {
  f("token_embedding", self.token_embedding);
  f("position_embedding", self.position_embedding);
  f("language_embedding", self.language_embedding);
  f("embed_ln_gain", self.embed_ln_gain);
  f("embed_ln_bias", self.embed_ln_bias);
  auto projector = [&](const std::string& prefix, auto& p) {
    f(prefix + ".weight", p.weight);
    f(prefix + ".bias", p.bias);
    f(prefix + ".ln_gain", p.ln_gain);
    f(prefix + ".ln_bias", p.ln_bias);
  };
  projector("prompt_proj", self.prompt_proj);
  projector("feature_proj", self.feature_proj);
  auto attn = [&](const std::string& prefix, auto& a) {
    f(prefix + ".wq", a.wq);
    f(prefix + ".bq", a.bq);
    f(prefix + ".wk", a.wk);
    f(prefix + ".bk", a.bk);
    f(prefix + ".wv", a.wv);
    f(prefix + ".bv", a.bv);
    f(prefix + ".wo", a.wo);
    f(prefix + ".bo", a.bo);
  };
  for (std::size_t i = 0; i < self.blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i);
    auto& b = self.blocks[i];
    f(p + ".ln1_gain", b.ln1_gain);
    f(p + ".ln1_bias", b.ln1_bias);
    attn(p + ".self_attn", b.self_attn);
    f(p + ".ln2_gain", b.ln2_gain);
    f(p + ".ln2_bias", b.ln2_bias);
    attn(p + ".cross_attn", b.cross_attn);
    f(p + ".ln3_gain", b.ln3_gain);
    f(p + ".ln3_bias", b.ln3_bias);
    f(p + ".ff1_weight", b.ff1_weight);
    f(p + ".ff1_bias", b.ff1_bias);
    f(p + ".ff2_weight", b.ff2_weight);
    f(p + ".ff2_bias", b.ff2_bias);
  }
  f("final_ln_gain", self.final_ln_gain);
  f("final_ln_bias", self.final_ln_bias);
  f("out_weight", self.out_weight);
  f("out_bias", self.out_bias);
}

}  // namespace promptcap
