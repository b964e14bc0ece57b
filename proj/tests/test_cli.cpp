#include "promptcap/cli.hpp"
#include "promptcap/io.hpp"
#include "promptcap/testbed.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace promptcap {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct CliRun {
  int code;
  std::string out, err;
  json result() const { return json::parse(out); }
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A corpus, a small config and a scratch directory shared by the tests below.
struct Workspace {
  fs::path dir;
  std::string corpus, config;

  explicit Workspace(const std::string& name) : dir(test::temp_dir(name)) {
    corpus = (dir / "corpus.jsonl").string();
    write_corpus(corpus, toy_corpus(40, 3));
    config = (dir / "config.json").string();
    std::ofstream(config) << R"({"embedder": {"dim": 16},
      "model": {"preset": "test", "d_model": 16, "n_heads": 2, "d_ff": 32, "n_layers": 1, "max_len": 24},
      "train": {"epochs": 1, "batch_size": 8, "lr": 0.001, "k_prompts": 3, "n_candidates": 3},
      "decode": {"max_len": 10}})";
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

TEST(Cli, UnknownFlagIsUsageErrorWithHelp) {
  const CliRun r = cli({"evaluate", "--input", "x", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--input"), std::string::npos);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"train", "--config", "c.json"}).code, 1);  // missing required --corpus
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, MissingFileIsDataError) {
  const Workspace w("cli_missing");
  const CliRun r = cli({"evaluate", "--input", w.path("nope.jsonl")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data"), std::string::npos);
  std::ofstream(w.path("broken.jsonl")) << "{\"id\": 1, \"candidate\": 3}\n";
  EXPECT_EQ(cli({"evaluate", "--input", w.path("broken.jsonl")}).code, 2);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  const Workspace w("cli_badcfg");
  std::ofstream(w.path("bad.json")) << R"({"train": {"lr": 0.1, "momentum": 0.9}})";
  const CliRun r = cli({"extract-concepts", "--config", w.path("bad.json"), "--corpus", w.corpus, "--out", w.path("c.txt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("momentum"), std::string::npos);
}

TEST(Cli, EvaluatePerfectCaptions) {
  const Workspace w("cli_eval");
  std::ofstream(w.path("eval.jsonl")) << R"({"id": "1", "candidate": "a man rides a brown horse", "references": ["a man rides a brown horse"]})"
                                      << "\n"
                                      << R"({"id": "2", "candidate": "two dogs play in the snow", "references": ["two dogs play in the snow"]})"
                                      << "\n";
  const CliRun r = cli({"evaluate", "--input", w.path("eval.jsonl"), "--out", w.path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.result()["bleu4"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r.result()["cider"].get<double>(), 10.0, 1e-9);
  EXPECT_TRUE(fs::exists(w.path("report.json")));
}

TEST(Cli, PipelineEndToEnd) {
  const Workspace w("cli_pipeline");
  const std::vector<std::string> common{"--config", w.config, "--seed", "5"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return cli(args);
  };

  CliRun r = with({"extract-concepts", "--corpus", w.corpus, "--out", w.path("concepts.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(r.result()["concepts"].get<int>(), 3);

  r = with({"embed", "--corpus", w.corpus, "--out", w.path("text.mce")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.result()["rows"], 40);
  r = with({"embed", "--corpus", w.corpus, "--vision", "--frames", "2", "--out", w.path("vision.mce")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.result()["rows"], 80);
  r = with({"embed", "--concepts", w.path("concepts.txt"), "--out", w.path("concepts.mce")});
  ASSERT_EQ(r.code, 0) << r.err;

  r = with({"build-candidates", "--embeddings", w.path("text.mce"), "--corpus", w.corpus, "--out", w.path("cands.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.result()["sets"], 40);

  r = with({"gap-report", "--text", w.path("text.mce"), "--vision", w.path("vision.mce")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(r.result()["centroid_distance"].get<double>(), 0.1);
  EXPECT_EQ(r.result()["pairs"], 40);

  r = with({"train", "--corpus", w.corpus, "--concepts", w.path("concepts.txt"), "--candidates", w.path("cands.jsonl"),
            "--log", w.path("log.jsonl"), "--out", w.path("ckpt_a")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string hash_a = r.result()["hash"];
  EXPECT_EQ(r.result()["steps"], 5);
  r = with({"train", "--corpus", w.corpus, "--concepts", w.path("concepts.txt"), "--candidates", w.path("cands.jsonl"),
            "--out", w.path("ckpt_b")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.result()["hash"], hash_a);
  std::ifstream log(w.path("log.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    EXPECT_TRUE(json::parse(line).contains("loss"));
    ++lines;
  }
  EXPECT_EQ(lines, 5);

  r = with({"finetune", "--checkpoint", w.path("ckpt_a"), "--pairs", w.corpus, "--vision", w.path("vision.mce"), "--out",
            w.path("ckpt_ft")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.result()["hash"], hash_a);

  r = with({"caption", "--checkpoint", w.path("ckpt_ft"), "--vision", w.path("vision.mce"), "--greedy", "--out",
            w.path("greedy.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.result()["items"], 40);
  r = with({"caption", "--checkpoint", w.path("ckpt_ft"), "--vision", w.path("vision.mce"), "--beam", "1", "--out",
            w.path("beam1.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto greedy = read_captions(w.path("greedy.jsonl"));
  const auto beam1 = read_captions(w.path("beam1.jsonl"));
  ASSERT_EQ(greedy.size(), beam1.size());
  for (std::size_t i = 0; i < greedy.size(); ++i) {
    EXPECT_EQ(greedy[i].caption, beam1[i].caption);
    EXPECT_EQ(greedy[i].prompts, beam1[i].prompts);
    EXPECT_EQ(greedy[i].prompts.size(), 3u);
  }
}

TEST(Cli, TrainRefusesMismatchedInitVocabulary) {
  const Workspace w("cli_init");
  const std::vector<std::string> common{"--config", w.config};
  auto args = [&](std::vector<std::string> a) {
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  ASSERT_EQ(cli(args({"train", "--corpus", w.corpus, "--out", w.path("ckpt")})).code, 0);
  write_corpus(w.path("other.jsonl"), toy_corpus(40, 99));
  const CliRun r = cli(args({"train", "--corpus", w.path("other.jsonl"), "--init-from", w.path("ckpt"), "--out", w.path("ckpt2")}));
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("vocabulary"), std::string::npos);
}

TEST(Cli, AblateSmall) {
  const Workspace w("cli_ablate");
  std::ofstream(w.path("abl.json")) << R"({"embedder": {"dim": 16},
      "model": {"preset": "test", "d_model": 16, "n_heads": 2, "d_ff": 32, "n_layers": 1, "max_len": 24},
      "train": {"epochs": 1, "batch_size": 8, "lr": 0.001, "k_prompts": 3, "n_candidates": 3},
      "decode": {"max_len": 10, "greedy": true},
      "ablation": {"corpus_size": 30, "test_size": 5, "seeds": [0, 1], "arms": ["base", "full"]}})";
  const CliRun r = cli({"ablate", "--config", w.path("abl.json"), "--out", w.path("abl_report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.result()["summary"].contains("full"));
  json doc = json::parse(std::ifstream(w.path("abl_report.json")));
  EXPECT_EQ(doc["results"]["base"].size(), 2u);
}

}  // namespace
}  // namespace promptcap
