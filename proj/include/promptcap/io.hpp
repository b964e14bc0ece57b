#pragma once

#include "promptcap/decoder.hpp"
#include "promptcap/text.hpp"
#include "promptcap/training.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace promptcap {

// MCE1 embedding file, little-endian:
//   "MCE1" | u32 count | u32 dim | count*dim f32, row-major | u64 n | n bytes of JSON: array of ids
struct EmbeddingFile {
  std::vector<std::string> ids;
  Matrix rows;  // count x dim
};

void write_mce1(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_mce1(const std::filesystem::path& path);

struct UnitRows {
  std::vector<UnitVector> rows;
  std::size_t renormalized = 0;  // rows whose norm was off by more than 1e-3
};
UnitRows unit_rows(const EmbeddingFile& file);

// Groups frame rows "item#k" (or plain "item") by item id, in first-seen order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_frames(const std::vector<std::string>& ids);

// Everything needed to caption or resume: weights, vocabulary, languages, concept bank.
struct Checkpoint {
  DecoderParameters params;
  Vocabulary vocab;
  LanguageSet languages;
  ConceptBank bank;
  TrainConfig train_config;
  long long step = 0;
};

// Directory with manifest.json, vocab.txt, concepts.txt and weights.bin. The
// weight file holds every tensor (and the concept features) as f64:
//   "MCW1" | u32 n_tensors | u32 8 | u64 n_scalars | f64 data | u64 n | JSON [{name, shape, offset}]
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// FNV-1a 64 over the checkpoint files, in name order.
std::string checkpoint_hash(const std::filesystem::path& dir);

// Vocabulary error unless the fingerprints agree.
void require_vocabulary(const Checkpoint& ckpt, const Vocabulary& vocab);

}  // namespace promptcap
