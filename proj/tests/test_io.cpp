#include "promptcap/config.hpp"
#include "promptcap/io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace promptcap {
namespace {

using test::random_unit;
using test::temp_dir;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::argument;
}

TEST(Mce1, RoundTrip) {
  const auto dir = temp_dir("mce1");
  Rng rng(0);
  EmbeddingFile f;
  f.ids = {"a", "b#0", "b#1"};
  f.rows.resize(3, 5);
  for (Index r = 0; r < 3; ++r) f.rows.row(r) = random_unit(5, rng).values().transpose();
  write_mce1(dir / "x.mce", f);
  const EmbeddingFile g = read_mce1(dir / "x.mce");
  EXPECT_EQ(g.ids, f.ids);
  ASSERT_EQ(g.rows.rows(), 3);
  ASSERT_EQ(g.rows.cols(), 5);
  // stored as f32
  EXPECT_LT((g.rows - f.rows).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(std::filesystem::file_size(dir / "x.mce"), 4 + 4 + 4 + 3 * 5 * 4 + 8 + std::string("[\"a\",\"b#0\",\"b#1\"]").size());
}

TEST(Mce1, Errors) {
  const auto dir = temp_dir("mce1_err");
  EXPECT_EQ(kind_of([&] { read_mce1(dir / "missing.mce"); }), ErrorKind::data);
  {
    std::ofstream out(dir / "bad.mce", std::ios::binary);
    out << "NOPE0000";
  }
  EXPECT_EQ(kind_of([&] { read_mce1(dir / "bad.mce"); }), ErrorKind::data);
  EmbeddingFile f;
  f.ids = {"a"};
  f.rows = Matrix::Ones(2, 3);
  EXPECT_EQ(kind_of([&] { write_mce1(dir / "y.mce", f); }), ErrorKind::dimension);
  f.ids = {"a", "b"};
  write_mce1(dir / "y.mce", f);
  std::filesystem::resize_file(dir / "y.mce", 20);
  EXPECT_EQ(kind_of([&] { read_mce1(dir / "y.mce"); }), ErrorKind::data);
}

TEST(Mce1, RenormalizesOffRows) {
  EmbeddingFile f;
  f.ids = {"unit", "long", "zero"};
  f.rows = Matrix::Zero(3, 2);
  f.rows(0, 0) = 1;
  f.rows(1, 0) = 3;
  f.rows(1, 1) = 4;
  f.rows(2, 0) = 0;
  EXPECT_EQ(kind_of([&] { unit_rows(f); }), ErrorKind::degenerate_vector);
  f.rows(2, 1) = real(1.0005);
  const UnitRows u = unit_rows(f);
  EXPECT_EQ(u.renormalized, 1u);
  EXPECT_NEAR(u.rows[1][0], 0.6, 1e-12);
  EXPECT_NEAR(u.rows[2][1], 1, 1e-12);
}

TEST(GroupFrames, ByItemInFirstSeenOrder) {
  const auto g = group_frames({"v2#0", "v1", "v2#1", "v3#0", "v2#2"});
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0].first, "v2");
  EXPECT_EQ(g[0].second, (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(g[1].first, "v1");
  EXPECT_EQ(g[2].second, (std::vector<std::size_t>{3}));
}

Checkpoint tiny_checkpoint(std::uint64_t seed) {
  auto c = test::tiny_decoder_case(seed);
  Rng rng(seed + 100);
  std::vector<Concept> concepts;
  for (const char* s : {"dog", "red ball", "grass"}) concepts.push_back({s, random_unit(6, rng)});
  Checkpoint ck{std::move(c.params), Vocabulary({"a", "b", "c", "d", "e", "f", "g"}), LanguageSet({"en", "de"}),
                ConceptBank(std::move(concepts)), TrainConfig{}, 42};
  ck.train_config.k_prompts = 2;
  return ck;
}

TEST(CheckpointIo, ForwardIsBitExactAfterReload) {
  const auto dir = temp_dir("ckpt");
  const Checkpoint ck = tiny_checkpoint(3);
  save_checkpoint(dir / "m", ck);
  const Checkpoint back = load_checkpoint(dir / "m");
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.vocab.tokens(), ck.vocab.tokens());
  EXPECT_EQ(back.languages.codes(), ck.languages.codes());
  EXPECT_EQ(back.bank.features(), ck.bank.features());
  EXPECT_EQ(back.train_config.k_prompts, 2);
  EXPECT_TRUE(back.params.config == ck.params.config);
  auto c = test::tiny_decoder_case(3);
  EXPECT_EQ(forward(back.params, c.prompts, c.input, 1, c.feature), forward(ck.params, c.prompts, c.input, 1, c.feature));
}

TEST(CheckpointIo, HashIsStable) {
  const auto dir = temp_dir("ckpt_hash");
  save_checkpoint(dir / "a", tiny_checkpoint(1));
  save_checkpoint(dir / "b", tiny_checkpoint(1));
  save_checkpoint(dir / "c", tiny_checkpoint(2));
  EXPECT_EQ(checkpoint_hash(dir / "a"), checkpoint_hash(dir / "b"));
  EXPECT_NE(checkpoint_hash(dir / "a"), checkpoint_hash(dir / "c"));
}

TEST(CheckpointIo, VocabularyMismatchRefused) {
  const auto dir = temp_dir("ckpt_vocab");
  const Checkpoint ck = tiny_checkpoint(4);
  EXPECT_EQ(kind_of([&] { require_vocabulary(ck, Vocabulary({"a", "b"})); }), ErrorKind::vocabulary);
  require_vocabulary(ck, Vocabulary({"a", "b", "c", "d", "e", "f", "g"}));
  save_checkpoint(dir / "m", ck);
  {
    std::ofstream out(dir / "m" / "vocab.txt", std::ios::app);
    out << "extra\n";
  }
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "m"); }), ErrorKind::vocabulary);
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "nowhere"); }), ErrorKind::data);
}

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfig d = parse_run_config(nlohmann::json::object());
  EXPECT_EQ(d.model.preset, "base");
  EXPECT_EQ(d.train.k_prompts, 16);
  EXPECT_EQ(d.train.n_candidates, 5);
  EXPECT_NEAR(d.train.epsilon, 0.01, 1e-12);
  EXPECT_NEAR(d.train.lr, 1e-4, 1e-12);
  EXPECT_EQ(d.decode.beam_size, 3);
  const RunConfig again = parse_run_config(to_json(d));
  EXPECT_EQ(to_json(again), to_json(d));
}

TEST(Config, OverridesApply) {
  const auto doc = nlohmann::json::parse(R"({"seed": 9, "model": {"preset": "test", "d_model": 32},
      "train": {"lr": 0.001, "use_fa": false}, "decode": {"greedy": true}})");
  const RunConfig c = parse_run_config(doc);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(c.train.use_fa);
  EXPECT_TRUE(c.decode.greedy);
  const DecoderConfig m = c.model.resolve(50, 1, 64);
  EXPECT_EQ(m.d_model, 32);
  EXPECT_EQ(m.n_layers, 2);
  EXPECT_EQ(m.vocab_size, 50);
}

TEST(Config, UnknownKeysRejected) {
  for (const char* text : {R"({"sede": 1})", R"({"train": {"learning_rate": 1}})", R"({"model": {"layers": 3}})",
                           R"({"gap": {"scale": 1}})"}) {
    EXPECT_EQ(kind_of([&] { parse_run_config(nlohmann::json::parse(text)); }), ErrorKind::argument) << text;
  }
  EXPECT_EQ(kind_of([&] { parse_run_config(nlohmann::json::parse(R"({"train": {"lr": "fast"}})")); }),
            ErrorKind::argument);
}

TEST(Config, LoadFromFile) {
  const auto dir = temp_dir("config");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"embedder": {"dim": 16}})";
  }
  EXPECT_EQ(load_run_config(dir / "c.json").embed_dim, 16);
  {
    std::ofstream out(dir / "bad.json");
    out << "{not json";
  }
  EXPECT_THROW(load_run_config(dir / "bad.json"), Error);
}

}  // namespace
}  // namespace promptcap
