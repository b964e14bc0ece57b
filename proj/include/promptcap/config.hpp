#pragma once

#include "promptcap/decoder.hpp"
#include "promptcap/inference.hpp"
#include "promptcap/testbed.hpp"
#include "promptcap/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace promptcap {

// Decoder size: a named preset ("base" or "test") plus optional overrides.
struct ModelSettings {
  std::string preset = "base";
  std::optional<int> d_model, n_layers, n_heads, d_ff, max_len;
  std::optional<real> dropout;

  DecoderConfig resolve(int vocab_size, int n_languages, int d_clip) const;
};

struct AblationSettings {
  std::size_t corpus_size = 200;
  std::size_t test_size = 40;
  std::uint64_t corpus_seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> arms{"base", "ia_fa", "full"};
};

// One JSON document drives every subcommand. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<std::string> languages{"en"};
  int vocab_min_freq = 1;
  int vocab_max_size = -1;  // -1: unlimited
  Index embed_dim = 64;
  std::uint64_t embed_seed = 0;
  int concept_cap = 1000;
  int concept_max_len = 3;
  ModelSettings model;
  TrainConfig train;
  DecodeOptions decode;  // k_prompts follows train.k_prompts / use_cp
  GapSpec gap{real(0.5), 0, real(0.05)};
  AblationSettings ablation;

  // Decode options with the prompt count the model was trained with.
  DecodeOptions decode_options() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json decoder_config_json(const DecoderConfig& cfg);
DecoderConfig parse_decoder_config(const nlohmann::json& doc);
nlohmann::json train_config_json(const TrainConfig& cfg);
TrainConfig parse_train_config(const nlohmann::json& doc);

}  // namespace promptcap
