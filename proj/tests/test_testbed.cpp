#include "promptcap/testbed.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <set>

namespace promptcap {
namespace {

using test::random_unit;

TEST(ToyEmbedder, Deterministic) {
  const ToyEmbedder a(32, 4), b(32, 4), other(32, 5);
  const Tokens s{"a", "dog", "runs"};
  EXPECT_EQ(a.embed(s).values(), b.embed(s).values());
  EXPECT_NE(a.embed(s).values(), other.embed(s).values());
  EXPECT_NEAR(a.embed(s).values().norm(), 1, 1e-12);
}

TEST(ToyEmbedder, SingleTokenIsItsGramVector) {
  const ToyEmbedder e(16, 0);
  const Tokens s{"zebra"};
  EXPECT_LT((e.embed(s).values() - normalize(e.gram_vector("zebra")).values()).norm(), 1e-12);
}

TEST(ToyEmbedder, TwoTokensSumThreeGrams) {
  const ToyEmbedder e(16, 0);
  const Tokens s{"red", "ball"};
  const Vector sum = e.gram_vector("red") + e.gram_vector("ball") + e.gram_vector(std::string("red") + '\x1f' + "ball");
  EXPECT_LT((e.embed(s).values() - sum.normalized()).norm(), 1e-12);
}

TEST(ToyEmbedder, SharedWordsRaiseCosine) {
  const ToyEmbedder e(64, 1);
  const auto corpus = toy_corpus(200, 2);
  real shared = 0, fresh = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& s = corpus[static_cast<std::size_t>(2 * i)].source;
    const auto& t = corpus[static_cast<std::size_t>(2 * i + 1)].source;
    shared += e.embed(s).dot(e.embed(t));
    const Tokens u{"q" + std::to_string(i), "w" + std::to_string(i), "z" + std::to_string(i)};
    fresh += e.embed(s).dot(e.embed(u));
  }
  EXPECT_GT(shared / 100, fresh / 100 + 0.2);
}

TEST(ToyEmbedder, RejectsEmptyText) {
  const ToyEmbedder e(8, 0);
  EXPECT_THROW(e.embed(Tokens{}), Error);
}

TEST(SynthVision, ZeroGapIsIdentity) {
  Rng rng(0);
  const UnitVector t = random_unit(16, rng);
  EXPECT_EQ(synth_vision(t, GapSpec{}, rng).values(), t.values());
}

TEST(SynthVision, OffsetOnlyArithmetic) {
  Rng rng(0);
  const GapSpec spec{real(0.5), 3, 0};
  const Vector u = gap_offset(spec, 2);
  EXPECT_NEAR(u.norm(), 1, 1e-12);
  Vector t(2);
  t << 1, 0;
  const Vector want = (t + 0.5 * u).normalized();
  EXPECT_LT((synth_vision(normalize(t), spec, rng).values() - want).norm(), 1e-12);
}

TEST(SynthVision, SharedOffsetAcrossItems) {
  const GapSpec spec{real(0.5), 7, 0};
  EXPECT_EQ(gap_offset(spec, 8), gap_offset(spec, 8));
  EXPECT_NE(gap_offset(spec, 8), gap_offset(GapSpec{real(0.5), 8, 0}, 8));
}

TEST(SynthVision, UnitNormAndGapSize) {
  Rng rng(1);
  const GapSpec spec{real(0.5), 0, real(0.05)};
  real mean_cos = 0;
  for (int i = 0; i < 200; ++i) {
    const UnitVector t = random_unit(64, rng);
    const UnitVector v = synth_vision(t, spec, rng);
    EXPECT_NEAR(v.values().norm(), 1, 1e-9);
    mean_cos += t.dot(v) / 200;
  }
  // |t + 0.5u + n|^2 ~ 1.25 + 64*0.0025, so cos ~ 1/sqrt(1.41)
  EXPECT_NEAR(mean_cos, 1 / std::sqrt(1.41), 0.06);
  EXPECT_THROW(synth_vision(random_unit(4, rng), GapSpec{-1, 0, 0}, rng), Error);
}

TEST(ToyCorpus, DistinctAndSeeded) {
  const auto a = toy_corpus(300, 5);
  std::set<Tokens> seen;
  for (const auto& r : a) {
    EXPECT_EQ(r.source.size(), 8u);
    EXPECT_TRUE(seen.insert(r.source).second);
  }
  const auto b = toy_corpus(300, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].source, b[i].source);
  EXPECT_NE(toy_corpus(10, 6)[0].source, a[0].source);
  EXPECT_THROW(toy_corpus(100000, 0), Error);
}

AblationSetup tiny_setup() {
  const auto corpus = toy_corpus(30, 1);
  AblationSetup s;
  s.train.assign(corpus.begin(), corpus.begin() + 24);
  s.test.assign(corpus.begin() + 24, corpus.end());
  s.train_config.epochs = 1;
  s.train_config.batch_size = 8;
  s.train_config.lr = real(1e-3);
  s.train_config.k_prompts = 3;
  s.train_config.n_candidates = 3;
  s.model = DecoderConfig::test_preset(0, 1, 0);
  s.model.d_model = 16;
  s.model.n_heads = 2;
  s.model.d_ff = 32;
  s.model.n_layers = 1;
  s.decode.greedy = true;
  s.decode.max_len = 10;
  s.embed_dim = 16;
  s.gap = GapSpec{real(0.5), 0, real(0.05)};
  return s;
}

TEST(Ablation, OneCellPerArmAndSeed) {
  const AblationSetup s = tiny_setup();
  const auto all = default_ablation_arms();
  ASSERT_EQ(all.size(), 3u);
  const std::vector<AblationArm> arms{all[0], all[2]};
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const AblationReport r = run_ablation(s, arms, seeds);
  ASSERT_EQ(r.cells.size(), 6u);
  for (const auto& c : r.cells) {
    ASSERT_TRUE(c.report) << c.error;
    EXPECT_EQ(c.report->n_items, 6u);
  }
  const auto j = r.to_json();
  EXPECT_EQ(j["results"].size(), 2u);
  EXPECT_EQ(j["results"]["base"].size(), 3u);
  EXPECT_TRUE(j["summary"]["full"].contains("cider_mean"));
  EXPECT_TRUE(j["summary"]["full"].contains("cider_std"));
  // same seed reruns the same cell
  const MetricReport again = run_ablation_cell(s, arms[1], 2);
  EXPECT_EQ(again.cider, r.cells[5].report->cider);
}

TEST(Ablation, FailingCellIsRecorded) {
  AblationSetup s = tiny_setup();
  s.train_config.k_prompts = 100000;  // larger than the concept bank
  const std::vector<AblationArm> arms{default_ablation_arms()[0], default_ablation_arms()[2]};
  const std::vector<std::uint64_t> seeds{0};
  const AblationReport r = run_ablation(s, arms, seeds);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_TRUE(r.cells[0].report);
  EXPECT_FALSE(r.cells[1].report);
  EXPECT_FALSE(r.cells[1].error.empty());
  EXPECT_TRUE(r.to_json()["results"]["full"]["0"].contains("error"));
}

TEST(Ablation, StatsArePopulationMoments) {
  AblationReport r;
  for (auto [seed, c] : {std::pair{0, 1.0}, std::pair{1, 2.0}, std::pair{2, 3.0}}) {
    MetricReport m;
    m.cider = c;
    r.cells.push_back({"x", static_cast<std::uint64_t>(seed), m, ""});
  }
  const auto [mean, sd] = r.stats("x", &MetricReport::cider);
  EXPECT_NEAR(mean, 2, 1e-12);
  EXPECT_NEAR(sd, std::sqrt(2.0 / 3), 1e-12);
  EXPECT_TRUE(std::isnan(r.stats("y", &MetricReport::cider).first));
}

}  // namespace
}  // namespace promptcap
