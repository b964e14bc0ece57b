#include "promptcap/config.hpp"

#include <fstream>
#include <set>

namespace promptcap {

using json = nlohmann::json;

namespace {

// Reads the known keys of one object and rejects the rest.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw Error(ErrorKind::argument, "config: " + where_ + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    known_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::argument, "config: " + where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    known_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return;
    T value{};
    read(key, value);
    out = value;
  }

  const json* section(const std::string& key) {
    known_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!known_.count(key)) throw Error(ErrorKind::argument, "config: unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> known_;
};

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

TrainConfig read_train(const json& doc, TrainConfig cfg, const std::string& where) {
  Fields f(doc, where);
  f.read("lr", cfg.lr);
  f.read("warmup_fraction", cfg.warmup_fraction);
  f.read("epochs", cfg.epochs);
  f.read("batch_size", cfg.batch_size);
  f.read("weight_decay", cfg.weight_decay);
  f.read("label_smoothing", cfg.label_smoothing);
  f.read("k_prompts", cfg.k_prompts);
  f.read("n_candidates", cfg.n_candidates);
  f.read("epsilon", cfg.epsilon);
  f.read("seed", cfg.seed);
  std::string mode = to_string(cfg.mode);
  f.read("mode", mode);
  cfg.mode = parse_train_mode(mode);
  f.read("grad_clip", cfg.grad_clip);
  f.read("use_cp", cfg.use_cp);
  f.read("use_ia", cfg.use_ia);
  f.read("use_fa", cfg.use_fa);
  f.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

DecoderConfig ModelSettings::resolve(int vocab_size, int n_languages, int d_clip) const {
  DecoderConfig c;
  if (preset == "base") {
    c = DecoderConfig::base_preset(vocab_size, n_languages, d_clip);
  } else if (preset == "test") {
    c = DecoderConfig::test_preset(vocab_size, n_languages, d_clip);
  } else {
    throw Error(ErrorKind::argument, "config: unknown model preset '" + preset + "'");
  }
  if (d_model) c.d_model = *d_model;
  if (n_layers) c.n_layers = *n_layers;
  if (n_heads) c.n_heads = *n_heads;
  if (d_ff) c.d_ff = *d_ff;
  if (max_len) c.max_len = *max_len;
  if (dropout) c.dropout = *dropout;
  c.validate();
  return c;
}

DecodeOptions RunConfig::decode_options() const {
  DecodeOptions d = decode;
  d.k_prompts = train.prompts();
  return d;
}

json decoder_config_json(const DecoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},               {"max_len", c.max_len},
          {"n_languages", c.n_languages}, {"d_clip", c.d_clip},         {"dropout", c.dropout}};
}

DecoderConfig parse_decoder_config(const json& doc) {
  DecoderConfig c;
  Fields f(doc, "decoder");
  f.read("vocab_size", c.vocab_size);
  f.read("d_model", c.d_model);
  f.read("n_layers", c.n_layers);
  f.read("n_heads", c.n_heads);
  f.read("d_ff", c.d_ff);
  f.read("max_len", c.max_len);
  f.read("n_languages", c.n_languages);
  f.read("d_clip", c.d_clip);
  f.read("dropout", c.dropout);
  f.finish();
  c.validate();
  return c;
}

json train_config_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"warmup_fraction", c.warmup_fraction},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"label_smoothing", c.label_smoothing},
          {"k_prompts", c.k_prompts},
          {"n_candidates", c.n_candidates},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"mode", to_string(c.mode)},
          {"grad_clip", c.grad_clip},
          {"use_cp", c.use_cp},
          {"use_ia", c.use_ia},
          {"use_fa", c.use_fa}};
}

TrainConfig parse_train_config(const json& doc) { return read_train(doc, TrainConfig{}, "train"); }

json to_json(const RunConfig& cfg) {
  json train = train_config_json(cfg.train);
  train.erase("seed");  // the run seed is top-level
  return {
      {"seed", cfg.seed},
      {"languages", cfg.languages},
      {"vocab", {{"min_freq", cfg.vocab_min_freq}, {"max_size", cfg.vocab_max_size}}},
      {"embedder", {{"dim", cfg.embed_dim}, {"seed", cfg.embed_seed}}},
      {"concepts", {{"cap", cfg.concept_cap}, {"max_len", cfg.concept_max_len}}},
      {"model",
       {{"preset", cfg.model.preset},
        {"d_model", optional_json(cfg.model.d_model)},
        {"n_layers", optional_json(cfg.model.n_layers)},
        {"n_heads", optional_json(cfg.model.n_heads)},
        {"d_ff", optional_json(cfg.model.d_ff)},
        {"max_len", optional_json(cfg.model.max_len)},
        {"dropout", optional_json(cfg.model.dropout)}}},
      {"train", train},
      {"decode",
       {{"beam_size", cfg.decode.beam_size},
        {"max_len", cfg.decode.max_len},
        {"length_penalty", cfg.decode.length_penalty},
        {"greedy", cfg.decode.greedy}}},
      {"gap",
       {{"offset_scale", cfg.gap.offset_scale},
        {"rotation_seed", cfg.gap.rotation_seed},
        {"noise_scale", cfg.gap.noise_scale}}},
      {"ablation",
       {{"corpus_size", cfg.ablation.corpus_size},
        {"test_size", cfg.ablation.test_size},
        {"corpus_seed", cfg.ablation.corpus_seed},
        {"seeds", cfg.ablation.seeds},
        {"arms", cfg.ablation.arms}}},
  };
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Fields top(doc, "config");
  top.read("seed", cfg.seed);
  top.read("languages", cfg.languages);
  if (cfg.languages.empty()) throw Error(ErrorKind::argument, "config: languages must not be empty");
  if (const json* s = top.section("vocab")) {
    Fields f(*s, "vocab");
    f.read("min_freq", cfg.vocab_min_freq);
    f.read("max_size", cfg.vocab_max_size);
    f.finish();
  }
  if (const json* s = top.section("embedder")) {
    Fields f(*s, "embedder");
    f.read("dim", cfg.embed_dim);
    f.read("seed", cfg.embed_seed);
    f.finish();
  }
  if (const json* s = top.section("concepts")) {
    Fields f(*s, "concepts");
    f.read("cap", cfg.concept_cap);
    f.read("max_len", cfg.concept_max_len);
    f.finish();
  }
  if (const json* s = top.section("model")) {
    Fields f(*s, "model");
    f.read("preset", cfg.model.preset);
    f.read_optional("d_model", cfg.model.d_model);
    f.read_optional("n_layers", cfg.model.n_layers);
    f.read_optional("n_heads", cfg.model.n_heads);
    f.read_optional("d_ff", cfg.model.d_ff);
    f.read_optional("max_len", cfg.model.max_len);
    f.read_optional("dropout", cfg.model.dropout);
    f.finish();
    if (cfg.model.preset != "base" && cfg.model.preset != "test") {
      throw Error(ErrorKind::argument, "config: unknown model preset '" + cfg.model.preset + "'");
    }
  }
  if (const json* s = top.section("train")) {
    if (s->is_object() && s->contains("seed")) throw Error(ErrorKind::argument, "config: unknown key 'train.seed'");
    cfg.train = read_train(*s, cfg.train, "train");
  }
  if (const json* s = top.section("decode")) {
    Fields f(*s, "decode");
    f.read("beam_size", cfg.decode.beam_size);
    f.read("max_len", cfg.decode.max_len);
    f.read("length_penalty", cfg.decode.length_penalty);
    f.read("greedy", cfg.decode.greedy);
    f.finish();
    if (cfg.decode.beam_size < 1 || cfg.decode.max_len < 1) {
      throw Error(ErrorKind::argument, "config: decode.beam_size and decode.max_len must be positive");
    }
  }
  if (const json* s = top.section("gap")) {
    Fields f(*s, "gap");
    f.read("offset_scale", cfg.gap.offset_scale);
    f.read("rotation_seed", cfg.gap.rotation_seed);
    f.read("noise_scale", cfg.gap.noise_scale);
    f.finish();
    cfg.gap.validate();
  }
  if (const json* s = top.section("ablation")) {
    Fields f(*s, "ablation");
    f.read("corpus_size", cfg.ablation.corpus_size);
    f.read("test_size", cfg.ablation.test_size);
    f.read("corpus_seed", cfg.ablation.corpus_seed);
    f.read("seeds", cfg.ablation.seeds);
    f.read("arms", cfg.ablation.arms);
    f.finish();
    if (cfg.ablation.test_size >= cfg.ablation.corpus_size) {
      throw Error(ErrorKind::argument, "config: ablation.test_size must be smaller than corpus_size");
    }
  }
  top.finish();
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::argument, "config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

}  // namespace promptcap
