#include "promptcap/io.hpp"

#include "promptcap/config.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace promptcap {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using json = nlohmann::json;

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw Error(ErrorKind::data, path.string() + ": truncated file");
  }
  return value;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& path) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw Error(ErrorKind::data, path.string() + ": not a " + std::string(magic, 4) + " file");
  }
}

}  // namespace

void write_mce1(const std::filesystem::path& path, const EmbeddingFile& file) {
  if (static_cast<Index>(file.ids.size()) != file.rows.rows()) {
    throw Error(ErrorKind::dimension, "write_mce1: " + std::to_string(file.ids.size()) + " ids for " +
                                          std::to_string(file.rows.rows()) + " rows");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  out.write("MCE1", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.rows.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.rows.cols()));
  for (Index r = 0; r < file.rows.rows(); ++r) {
    for (Index c = 0; c < file.rows.cols(); ++c) put<float>(out, static_cast<float>(file.rows(r, c)));
  }
  const std::string trailer = json(file.ids).dump();
  put<std::uint64_t>(out, trailer.size());
  out.write(trailer.data(), static_cast<std::streamsize>(trailer.size()));
}

EmbeddingFile read_mce1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  expect_magic(in, "MCE1", path);
  const auto count = get<std::uint32_t>(in, path);
  const auto dim = get<std::uint32_t>(in, path);
  EmbeddingFile file;
  file.rows.resize(count, dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) file.rows(r, c) = static_cast<real>(get<float>(in, path));
  }
  const auto n = get<std::uint64_t>(in, path);
  std::string trailer(n, '\0');
  if (!in.read(trailer.data(), static_cast<std::streamsize>(n))) {
    throw Error(ErrorKind::data, path.string() + ": truncated id trailer");
  }
  try {
    file.ids = json::parse(trailer).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, path.string() + ": bad id trailer: " + e.what());
  }
  if (file.ids.size() != count) {
    throw Error(ErrorKind::data, path.string() + ": " + std::to_string(file.ids.size()) + " ids for " +
                                     std::to_string(count) + " rows");
  }
  return file;
}

UnitRows unit_rows(const EmbeddingFile& file) {
  UnitRows out;
  for (Index r = 0; r < file.rows.rows(); ++r) {
    const Vector row = file.rows.row(r).transpose();
    if (std::abs(row.norm() - 1) > real(1e-3)) ++out.renormalized;
    try {
      out.rows.push_back(normalize(row));
    } catch (const Error& e) {
      throw Error(e.kind(), "embedding row '" + file.ids[static_cast<std::size_t>(r)] + "': " + e.what());
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> group_frames(const std::vector<std::string>& ids) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto hash = ids[i].rfind('#');
    const std::string item = hash == std::string::npos ? ids[i] : ids[i].substr(0, hash);
    auto [it, fresh] = where.emplace(item, groups.size());
    if (fresh) groups.push_back({item, {}});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

namespace {

constexpr const char* kConceptTensor = "concept_bank";

struct NamedTensor {
  std::string name;
  const Matrix* value;
};

void write_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  std::uint64_t total = 0;
  json trailer = json::array();
  for (const NamedTensor& t : tensors) {
    trailer.push_back({{"name", t.name}, {"shape", {t.value->rows(), t.value->cols()}}, {"offset", total}});
    total += static_cast<std::uint64_t>(t.value->size());
  }
  out.write("MCW1", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  put<std::uint32_t>(out, 8);
  put<std::uint64_t>(out, total);
  for (const NamedTensor& t : tensors) {
    for (Index r = 0; r < t.value->rows(); ++r) {
      for (Index c = 0; c < t.value->cols(); ++c) put<double>(out, static_cast<double>((*t.value)(r, c)));
    }
  }
  const std::string text = trailer.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::map<std::string, Matrix> read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  expect_magic(in, "MCW1", path);
  const auto n_tensors = get<std::uint32_t>(in, path);
  if (get<std::uint32_t>(in, path) != 8) throw Error(ErrorKind::data, path.string() + ": unsupported scalar width");
  const auto n_scalars = get<std::uint64_t>(in, path);
  std::vector<double> data(n_scalars);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n_scalars * sizeof(double)))) {
    throw Error(ErrorKind::data, path.string() + ": truncated weights");
  }
  const auto n = get<std::uint64_t>(in, path);
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) throw Error(ErrorKind::data, path.string() + ": truncated trailer");
  std::map<std::string, Matrix> out;
  try {
    const json trailer = json::parse(text);
    if (trailer.size() != n_tensors) throw Error(ErrorKind::data, path.string() + ": tensor count mismatch");
    for (const json& t : trailer) {
      const auto rows = t.at("shape").at(0).get<Index>();
      const auto cols = t.at("shape").at(1).get<Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (offset + static_cast<std::uint64_t>(rows * cols) > n_scalars) {
        throw Error(ErrorKind::data, path.string() + ": tensor extends past the data block");
      }
      Matrix m(rows, cols);
      for (Index i = 0; i < rows * cols; ++i) m.data()[i] = static_cast<real>(data[offset + static_cast<std::uint64_t>(i)]);
      out.emplace(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, path.string() + ": bad trailer: " + e.what());
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::vector<NamedTensor> tensors;
  ckpt.params.visit([&](const std::string& name, const Tensor& t) { tensors.push_back({name, &t.value}); });
  tensors.push_back({kConceptTensor, &ckpt.bank.features()});
  write_weights(dir / "weights.bin", tensors);
  ckpt.vocab.save(dir / "vocab.txt");
  {
    std::ofstream out(dir / "concepts.txt", std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write " + (dir / "concepts.txt").string());
    for (const Concept& c : ckpt.bank.concepts()) out << c.surface << '\n';
  }
  const json manifest{{"format", "promptcap-checkpoint"},
                      {"version", 1},
                      {"weights", "weights.bin"},
                      {"decoder", decoder_config_json(ckpt.params.config)},
                      {"train", train_config_json(ckpt.train_config)},
                      {"vocab_fingerprint", ckpt.vocab.fingerprint()},
                      {"vocab_size", ckpt.vocab.size()},
                      {"languages", ckpt.languages.codes()},
                      {"concepts", ckpt.bank.size()},
                      {"step", ckpt.step},
                      {"seed", ckpt.train_config.seed}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, "checkpoint manifest: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    if (manifest.at("format") != "promptcap-checkpoint") throw Error(ErrorKind::data, "not a checkpoint manifest");
    ckpt.vocab = Vocabulary::load(dir / "vocab.txt");
    if (ckpt.vocab.fingerprint() != manifest.at("vocab_fingerprint").get<std::string>()) {
      throw Error(ErrorKind::vocabulary, "checkpoint vocab.txt does not match the manifest fingerprint");
    }
    ckpt.languages = LanguageSet(manifest.at("languages").get<std::vector<std::string>>());
    ckpt.train_config = parse_train_config(manifest.at("train"));
    ckpt.step = manifest.at("step").get<long long>();
    const DecoderConfig config = parse_decoder_config(manifest.at("decoder"));
    Rng unused(0);
    ckpt.params = init_decoder(config, unused);
    std::map<std::string, Matrix> weights = read_weights(dir / manifest.at("weights").get<std::string>());
    ckpt.params.visit([&](const std::string& name, Tensor& t) {
      auto it = weights.find(name);
      if (it == weights.end()) throw Error(ErrorKind::data, "checkpoint lacks tensor " + name);
      if (it->second.rows() != t.value.rows() || it->second.cols() != t.value.cols()) {
        throw Error(ErrorKind::dimension, "checkpoint tensor " + name + " has the wrong shape");
      }
      t.value = std::move(it->second);
    });

    std::vector<std::string> surfaces;
    {
      std::ifstream in(dir / "concepts.txt", std::ios::binary);
      if (!in) throw Error(ErrorKind::data, "cannot open " + (dir / "concepts.txt").string());
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) surfaces.push_back(line);
      }
    }
    auto bank = weights.find(kConceptTensor);
    if (bank == weights.end() || bank->second.rows() != static_cast<Index>(surfaces.size())) {
      throw Error(ErrorKind::data, "checkpoint concept bank does not match concepts.txt");
    }
    std::vector<Concept> concepts;
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
      concepts.push_back({surfaces[i], UnitVector::from_normalized(bank->second.row(static_cast<Index>(i)).transpose())});
    }
    ckpt.bank = ConceptBank(std::move(concepts));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, "checkpoint manifest: " + std::string(e.what()));
  }
  return ckpt;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  std::uint64_t h = fnv1a64("checkpoint");
  for (const char* name : {"concepts.txt", "manifest.json", "vocab.txt", "weights.bin"}) {
    h = fnv1a64(name, h);
    h = fnv1a64(read_text(dir / name), h);
  }
  return to_hex(h);
}

void require_vocabulary(const Checkpoint& ckpt, const Vocabulary& vocab) {
  if (ckpt.vocab.fingerprint() != vocab.fingerprint()) {
    throw Error(ErrorKind::vocabulary, "vocabulary fingerprint " + vocab.fingerprint() +
                                           " does not match the checkpoint's " + ckpt.vocab.fingerprint());
  }
}

}  // namespace promptcap
