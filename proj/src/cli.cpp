#include "promptcap/cli.hpp"

#include "promptcap/concept_extraction.hpp"
#include "promptcap/config.hpp"
#include "promptcap/io.hpp"
#include "promptcap/metrics.hpp"
#include "promptcap/testbed.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <unordered_map>

namespace promptcap {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "JSON run configuration");
  cmd->add_option("--seed", common.seed, "run seed (overrides the config)");
}

RunConfig resolve_config(const Common& common) {
  RunConfig cfg = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (common.seed) {
    cfg.seed = *common.seed;
    cfg.train.seed = *common.seed;
  }
  return cfg;
}

ToyEmbedder make_embedder(const RunConfig& cfg) { return ToyEmbedder(cfg.embed_dim, cfg.embed_seed); }

StopwordSet load_stopwords(const std::string& path, const std::string& lang) {
  if (path.empty()) return default_stopwords(lang);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open stopword list " + path);
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    for (const std::string& t : tokenize(line)) words.insert(to_lower(t));
  }
  return words;
}

// Rows of an MCE1 file keyed by item id (frames pooled).
std::unordered_map<std::string, UnitVector> pooled_features(const fs::path& path, std::vector<std::string>* warnings) {
  const EmbeddingFile file = read_mce1(path);
  const UnitRows rows = unit_rows(file);
  if (rows.renormalized && warnings) {
    warnings->push_back(path.string() + ": renormalized " + std::to_string(rows.renormalized) + " rows");
  }
  std::unordered_map<std::string, UnitVector> out;
  for (const auto& [item, idx] : group_frames(file.ids)) {
    std::vector<UnitVector> frames;
    for (std::size_t i : idx) frames.push_back(rows.rows[i]);
    out.emplace(item, pool_frames(frames));
  }
  return out;
}

std::vector<UnitVector> features_for(std::span<const CaptionRecord> corpus,
                                     const std::unordered_map<std::string, UnitVector>& table, const std::string& what) {
  std::vector<UnitVector> out;
  for (const CaptionRecord& r : corpus) {
    auto it = table.find(r.id);
    if (it == table.end()) throw Error(ErrorKind::data, what + " has no feature for record '" + r.id + "'");
    out.push_back(it->second);
  }
  return out;
}

ConceptBank bank_from_file(const fs::path& path, std::vector<std::string>* warnings) {
  const EmbeddingFile file = read_mce1(path);
  const UnitRows rows = unit_rows(file);
  if (rows.renormalized && warnings) {
    warnings->push_back(path.string() + ": renormalized " + std::to_string(rows.renormalized) + " rows");
  }
  std::vector<Concept> concepts;
  for (std::size_t i = 0; i < file.ids.size(); ++i) concepts.push_back({file.ids[i], rows.rows[i]});
  return ConceptBank(std::move(concepts));
}

void write_log(const fs::path& path, const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write log " + path.string());
  for (const TrainLogEntry& e : log) out << log_line(e) << '\n';
}

json with_warnings(json j, const std::vector<std::string>& warnings) {
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

// Validation hook: CIDEr of captions of validation features against their texts.
std::function<real(const DecoderParameters&)> validation_hook(std::vector<UnitVector> features,
                                                               std::vector<Tokens> references, std::vector<int> langs,
                                                               const ConceptBank& bank, const Vocabulary& vocab,
                                                               DecodeOptions decode) {
  return [features = std::move(features), references = std::move(references), langs = std::move(langs), &bank, &vocab,
          decode](const DecoderParameters& params) {
    EvalCorpus corpus;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const CaptionResult c = caption_feature(features[i], langs[i], bank, params, decode);
      corpus.items.push_back({std::to_string(i), eval_tokenize(join(vocab.decode(c.best.tokens))),
                              {eval_tokenize(join(references[i]))}});
    }
    return cider(corpus);
  };
}

struct ExtractArgs {
  std::string corpus, out, stopwords, lang;
};

json cmd_extract(const RunConfig& cfg, const ExtractArgs& a) {
  const auto corpus = read_corpus(a.corpus);
  const std::string lang = a.lang.empty() ? cfg.languages.front() : a.lang;
  const ConceptVocabulary vocab =
      extract_concepts(corpus, cfg.concept_cap, load_stopwords(a.stopwords, lang), cfg.concept_max_len);
  write_concepts_file(a.out, vocab);
  return {{"command", "extract-concepts"}, {"concepts", vocab.size()}, {"out", a.out}};
}

struct EmbedArgs {
  std::string corpus, concepts, out;
  bool vision = false;
  int frames = 1;
};

json cmd_embed(const RunConfig& cfg, const EmbedArgs& a) {
  if (a.corpus.empty() == a.concepts.empty()) throw Error(ErrorKind::argument, "embed: give exactly one of --corpus, --concepts");
  if (a.frames < 1) throw Error(ErrorKind::argument, "embed: --frames must be positive");
  if (a.frames > 1 && !a.vision) throw Error(ErrorKind::argument, "embed: --frames needs --vision");
  const ToyEmbedder embedder = make_embedder(cfg);
  std::vector<std::pair<std::string, Tokens>> items;
  if (!a.corpus.empty()) {
    for (CaptionRecord& r : read_corpus(a.corpus)) items.emplace_back(r.id, std::move(r.source));
  } else {
    for (const ConceptEntry& e : read_concepts_file(a.concepts).entries) items.emplace_back(e.phrase, tokenize(e.phrase));
  }
  Rng rng = make_stream(cfg.seed, "vision");
  EmbeddingFile file;
  std::vector<Vector> rows;
  for (const auto& [id, tokens] : items) {
    const UnitVector text = embedder.embed(tokens);
    if (!a.vision) {
      file.ids.push_back(id);
      rows.push_back(text.values());
      continue;
    }
    for (int k = 0; k < a.frames; ++k) {
      file.ids.push_back(a.frames > 1 ? id + "#" + std::to_string(k) : id);
      rows.push_back(synth_vision(text, cfg.gap, rng).values());
    }
  }
  file.rows.resize(static_cast<Index>(rows.size()), embedder.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) file.rows.row(static_cast<Index>(i)) = rows[i].transpose();
  write_mce1(a.out, file);
  return {{"command", "embed"}, {"rows", file.ids.size()}, {"dim", embedder.dim()}, {"out", a.out}};
}

struct CandidateArgs {
  std::string embeddings, corpus, out;
};

json cmd_candidates(const RunConfig& cfg, const CandidateArgs& a) {
  const EmbeddingFile file = read_mce1(a.embeddings);
  std::vector<std::string> warnings;
  const UnitRows rows = unit_rows(file);
  if (rows.renormalized) warnings.push_back("renormalized " + std::to_string(rows.renormalized) + " rows");
  std::vector<int> groups;
  if (!a.corpus.empty()) {
    const auto corpus = read_corpus(a.corpus);
    const LanguageSet languages(cfg.languages);
    std::unordered_map<std::string, int> lang_of;
    for (const CaptionRecord& r : corpus) lang_of[r.id] = languages.id(r.lang);
    for (const std::string& id : file.ids) {
      auto it = lang_of.find(id);
      if (it == lang_of.end()) throw Error(ErrorKind::data, "build-candidates: embedding id '" + id + "' not in corpus");
      groups.push_back(it->second);
    }
  }
  const auto sets = build_candidate_sets(rows.rows, cfg.train.n_candidates, groups);
  write_candidates(a.out, sets);
  return with_warnings({{"command", "build-candidates"}, {"sets", sets.size()}, {"n", cfg.train.n_candidates}, {"out", a.out}},
                       warnings);
}

struct TrainArgs {
  std::string corpus, out, concepts, features, concept_features, candidates, validation, validation_features, log,
      init_from;
};

json cmd_train(const RunConfig& cfg, const TrainArgs& a) {
  std::vector<std::string> warnings;
  const auto corpus = read_corpus(a.corpus);
  const LanguageSet languages(cfg.languages);
  const ToyEmbedder embedder = make_embedder(cfg);
  TrainConfig tc = cfg.train;
  tc.mode = TrainMode::text_only;

  const Vocabulary vocab = build_vocab(std::span<const CaptionRecord>(corpus), cfg.vocab_min_freq, cfg.vocab_max_size);
  std::optional<Checkpoint> init;
  if (!a.init_from.empty()) {
    init = load_checkpoint(a.init_from);
    require_vocabulary(*init, vocab);
  }

  ConceptBank bank;
  if (!a.concept_features.empty()) {
    bank = bank_from_file(a.concept_features, &warnings);
  } else {
    const ConceptVocabulary concepts =
        a.concepts.empty()
            ? extract_concepts(corpus, cfg.concept_cap, default_stopwords(cfg.languages.front()), cfg.concept_max_len)
            : read_concepts_file(a.concepts, corpus);
    bank = embed_concepts(concepts, embedder);
  }
  if (tc.prompts() > bank.size()) {
    throw Error(ErrorKind::bound, "train: k_prompts " + std::to_string(tc.prompts()) + " exceeds the concept bank of " +
                                      std::to_string(bank.size()));
  }

  std::vector<UnitVector> features;
  if (!a.features.empty()) {
    features = features_for(corpus, pooled_features(a.features, &warnings), a.features);
  } else {
    for (const CaptionRecord& r : corpus) features.push_back(embedder.embed(r.source));
  }
  TrainConfig set_cfg = tc;
  if (!a.candidates.empty()) set_cfg.use_ia = false;  // loaded below instead of rebuilt
  TrainingSet set = make_training_set(corpus, std::move(features), vocab, languages, set_cfg);
  if (!a.candidates.empty() && tc.candidates() > 1) {
    set.candidates = read_candidates(a.candidates);
    if (set.candidates.size() != set.size()) throw Error(ErrorKind::data, "train: candidate file does not match the corpus");
    std::sort(set.candidates.begin(), set.candidates.end(),
              [](const CandidateSet& x, const CandidateSet& y) { return x.anchor < y.anchor; });
  }

  const DecoderConfig model = cfg.model.resolve(vocab.size(), languages.size(), static_cast<int>(bank.dim() ? bank.dim() : embedder.dim()));
  DecoderParameters params;
  if (init) {
    if (!(init->params.config == model)) throw Error(ErrorKind::data, "train: --init-from checkpoint has a different model shape");
    params = std::move(init->params);
  } else {
    Rng init_rng = make_stream(cfg.seed, "init");
    params = init_decoder(model, init_rng);
  }

  TrainHooks hooks;
  if (!a.validation.empty()) {
    const auto val = read_corpus(a.validation);
    std::vector<UnitVector> vf;
    if (!a.validation_features.empty()) {
      vf = features_for(val, pooled_features(a.validation_features, &warnings), a.validation_features);
    } else {
      for (const CaptionRecord& r : val) vf.push_back(embedder.embed(r.source));
    }
    std::vector<Tokens> refs;
    std::vector<int> langs;
    for (const CaptionRecord& r : val) {
      refs.push_back(r.output());
      langs.push_back(languages.id(r.lang));
    }
    hooks.validate = validation_hook(std::move(vf), std::move(refs), std::move(langs), bank, vocab, cfg.decode_options());
  }
  TrainResult result = train(set, bank, std::move(params), tc, hooks);
  if (!a.log.empty()) write_log(a.log, result.log);

  Checkpoint ckpt{std::move(result.params), vocab, languages, bank, tc, result.steps};
  save_checkpoint(a.out, ckpt);
  json j{{"command", "train"},
         {"checkpoint", a.out},
         {"hash", checkpoint_hash(a.out)},
         {"steps", result.steps},
         {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().loss)}};
  if (result.best_validation) {
    j["best_validation_cider"] = *result.best_validation;
    j["best_epoch"] = result.best_epoch;
  }
  return with_warnings(j, warnings);
}

struct FinetuneArgs {
  std::string checkpoint, pairs, vision, out, log;
};

json cmd_finetune(const RunConfig& cfg, const FinetuneArgs& a) {
  std::vector<std::string> warnings;
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto pairs = read_corpus(a.pairs);
  std::vector<UnitVector> features = features_for(pairs, pooled_features(a.vision, &warnings), a.vision);
  TrainConfig tc = cfg.train;
  tc.mode = TrainMode::paired;
  const TrainingSet set = make_training_set(pairs, std::move(features), ckpt.vocab, ckpt.languages, tc);
  TrainResult result = fine_tune_paired(set, ckpt.bank, std::move(ckpt.params), tc);
  if (!a.log.empty()) write_log(a.log, result.log);
  ckpt.params = std::move(result.params);
  ckpt.train_config = tc;
  ckpt.step += result.steps;
  save_checkpoint(a.out, ckpt);
  return with_warnings({{"command", "finetune"}, {"checkpoint", a.out}, {"hash", checkpoint_hash(a.out)}, {"steps", result.steps}},
                       warnings);
}

struct CaptionArgs {
  std::string checkpoint, vision, out, lang;
  bool greedy = false;
  std::optional<int> beam, max_len;
};

json cmd_caption(const RunConfig& cfg, const CaptionArgs& a) {
  std::vector<std::string> warnings;
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const EmbeddingFile file = read_mce1(a.vision);
  const UnitRows rows = unit_rows(file);
  if (rows.renormalized) warnings.push_back("renormalized " + std::to_string(rows.renormalized) + " rows");
  DecodeOptions decode = cfg.decode;
  decode.k_prompts = ckpt.train_config.prompts();
  if (a.greedy) decode.greedy = true;
  if (a.beam) decode.beam_size = *a.beam;
  if (a.max_len) decode.max_len = *a.max_len;
  const int lang = ckpt.languages.id(a.lang.empty() ? ckpt.languages.code(0) : a.lang);
  std::vector<CaptionLine> lines;
  for (const auto& [item, idx] : group_frames(file.ids)) {
    std::vector<UnitVector> frames;
    for (std::size_t i : idx) frames.push_back(rows.rows[i]);
    lines.push_back(caption_line(item, caption(frames, lang, ckpt.bank, ckpt.params, decode), ckpt.vocab, ckpt.bank));
  }
  write_captions(a.out, lines);
  return with_warnings({{"command", "caption"}, {"items", lines.size()}, {"out", a.out}}, warnings);
}

struct EvaluateArgs {
  std::string input, out;
};

json cmd_evaluate(const EvaluateArgs& a) {
  const MetricReport report = evaluate(read_eval_corpus(a.input));
  const std::string text = report_json(report);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write report " + a.out);
    out << text << '\n';
  }
  json j = json::parse(text);
  j["command"] = "evaluate";
  return j;
}

struct AblateArgs {
  std::string corpus, out;
};

json cmd_ablate(const RunConfig& cfg, const AblateArgs& a) {
  std::vector<CaptionRecord> records =
      a.corpus.empty() ? toy_corpus(cfg.ablation.corpus_size, cfg.ablation.corpus_seed) : read_corpus(a.corpus);
  if (cfg.ablation.test_size >= records.size()) throw Error(ErrorKind::data, "ablate: corpus too small for the test split");
  AblationSetup setup;
  const auto split = static_cast<std::ptrdiff_t>(records.size() - cfg.ablation.test_size);
  setup.train.assign(records.begin(), records.begin() + split);
  setup.test.assign(records.begin() + split, records.end());
  setup.train_config = cfg.train;
  setup.model = cfg.model.resolve(kNumSpecial + 1, 1, static_cast<int>(cfg.embed_dim));
  setup.decode = cfg.decode;
  setup.embed_dim = cfg.embed_dim;
  setup.embed_seed = cfg.embed_seed;
  setup.gap = cfg.gap;
  setup.concept_cap = cfg.concept_cap;
  setup.concept_max_len = cfg.concept_max_len;

  std::vector<AblationArm> arms;
  const auto known = default_ablation_arms();
  for (const std::string& name : cfg.ablation.arms) {
    auto it = std::find_if(known.begin(), known.end(), [&](const AblationArm& arm) { return arm.name == name; });
    if (it == known.end()) throw Error(ErrorKind::argument, "ablate: unknown arm '" + name + "'");
    arms.push_back(*it);
  }
  std::vector<std::uint64_t> seeds = cfg.ablation.seeds;
  const AblationReport report = run_ablation(setup, arms, seeds);
  const json doc = report.to_json();
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write report " + a.out);
    out << doc.dump(2) << '\n';
  }
  return {{"command", "ablate"}, {"summary", doc["summary"]}, {"out", a.out}};
}

struct GapArgs {
  std::string text, vision;
};

json cmd_gap(const GapArgs& a) {
  std::vector<std::string> warnings;
  const auto text = pooled_features(a.text, &warnings);
  const auto vision = pooled_features(a.vision, &warnings);
  std::vector<UnitVector> t, v;
  std::vector<std::pair<Index, Index>> pairing;
  std::vector<std::string> ids;
  for (const auto& [id, _] : text) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const std::string& id : ids) {
    t.push_back(text.at(id));
    auto it = vision.find(id);
    if (it == vision.end()) continue;
    v.push_back(it->second);
    pairing.emplace_back(static_cast<Index>(t.size() - 1), static_cast<Index>(v.size() - 1));
  }
  if (pairing.empty()) throw Error(ErrorKind::data, "gap-report: no ids shared by the two files");
  const GapReport r = gap_report(t, v, pairing);
  return with_warnings({{"command", "gap-report"},
                        {"centroid_distance", r.centroid_distance},
                        {"mean_paired_cosine", r.mean_paired_cosine},
                        {"pairs", pairing.size()}},
                       warnings);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept-prompted zero-shot captioning toolkit", "promptcap"};
  app.require_subcommand(1);

  std::map<std::string, Common> common;
  auto sub = [&](const std::string& name, const std::string& desc) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd, common[name]);
    return cmd;
  };

  ExtractArgs extract;
  auto* c_extract = sub("extract-concepts", "extract a ranked concept list from a corpus");
  c_extract->add_option("--corpus", extract.corpus, "corpus JSONL")->required();
  c_extract->add_option("--out", extract.out, "concept list (one phrase per line)")->required();
  c_extract->add_option("--stopwords", extract.stopwords, "stopword file, one word per line");
  c_extract->add_option("--lang", extract.lang, "language of the default stopword list");

  EmbedArgs embed;
  auto* c_embed = sub("embed", "embed corpus sources or concepts into an MCE1 file");
  c_embed->add_option("--corpus", embed.corpus, "corpus JSONL");
  c_embed->add_option("--concepts", embed.concepts, "concept list");
  c_embed->add_option("--out", embed.out, "MCE1 output")->required();
  c_embed->add_flag("--vision", embed.vision, "apply the configured synthetic modality gap");
  c_embed->add_option("--frames", embed.frames, "frames per item with --vision (ids item#k)");

  CandidateArgs cands;
  auto* c_cands = sub("build-candidates", "nearest-neighbour candidate sets for input augmentation");
  c_cands->add_option("--embeddings", cands.embeddings, "MCE1 features of the corpus")->required();
  c_cands->add_option("--corpus", cands.corpus, "corpus JSONL; restricts neighbours to the same language");
  c_cands->add_option("--out", cands.out, "candidate JSONL")->required();

  TrainArgs train_args;
  auto* c_train = sub("train", "text-only training");
  c_train->add_option("--corpus", train_args.corpus, "corpus JSONL")->required();
  c_train->add_option("--out", train_args.out, "checkpoint directory")->required();
  c_train->add_option("--concepts", train_args.concepts, "concept list (default: extracted from the corpus)");
  c_train->add_option("--features", train_args.features, "precomputed MCE1 text features keyed by record id");
  c_train->add_option("--concept-features", train_args.concept_features, "precomputed MCE1 concept features keyed by phrase");
  c_train->add_option("--candidates", train_args.candidates, "candidate JSONL (default: built from the features)");
  c_train->add_option("--validation", train_args.validation, "validation corpus for CIDEr checkpoint selection");
  c_train->add_option("--validation-features", train_args.validation_features, "MCE1 features of the validation items");
  c_train->add_option("--log", train_args.log, "training log JSONL");
  c_train->add_option("--init-from", train_args.init_from, "start from this checkpoint");

  FinetuneArgs ft;
  auto* c_ft = sub("finetune", "paired fine-tuning on vision features");
  c_ft->add_option("--checkpoint", ft.checkpoint, "checkpoint directory to start from")->required();
  c_ft->add_option("--pairs", ft.pairs, "captions JSONL")->required();
  c_ft->add_option("--vision", ft.vision, "MCE1 vision features keyed by record id")->required();
  c_ft->add_option("--out", ft.out, "output checkpoint directory")->required();
  c_ft->add_option("--log", ft.log, "training log JSONL");

  CaptionArgs cap;
  auto* c_cap = sub("caption", "caption vision features");
  c_cap->add_option("--checkpoint", cap.checkpoint, "checkpoint directory")->required();
  c_cap->add_option("--vision", cap.vision, "MCE1 vision features (ids item or item#k)")->required();
  c_cap->add_option("--out", cap.out, "captions JSONL")->required();
  c_cap->add_option("--lang", cap.lang, "output language");
  c_cap->add_flag("--greedy", cap.greedy, "greedy decoding");
  c_cap->add_option("--beam", cap.beam, "beam size");
  c_cap->add_option("--max-len", cap.max_len, "maximum caption length");

  EvaluateArgs ev;
  auto* c_eval = sub("evaluate", "BLEU@4, ROUGE-L and CIDEr-D");
  c_eval->add_option("--input", ev.input, "JSONL {id, candidate, references}")->required();
  c_eval->add_option("--out", ev.out, "report JSON");

  AblateArgs abl;
  auto* c_abl = sub("ablate", "component ablation on the synthetic-gap testbed");
  c_abl->add_option("--corpus", abl.corpus, "corpus JSONL (default: generated toy corpus)");
  c_abl->add_option("--out", abl.out, "report JSON");

  GapArgs gap;
  auto* c_gap = sub("gap-report", "centroid distance and paired cosine of two feature files");
  c_gap->add_option("--text", gap.text, "MCE1 text features")->required();
  c_gap->add_option("--vision", gap.vision, "MCE1 vision features")->required();

  std::string init_out;
  auto* c_init = sub("init-config", "print the default configuration");
  c_init->add_option("--out", init_out, "also write it to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return exit_code(ErrorKind::argument);
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const RunConfig cfg = resolve_config(common[name]);
    json result;
    if (cmd == c_extract) {
      result = cmd_extract(cfg, extract);
    } else if (cmd == c_embed) {
      result = cmd_embed(cfg, embed);
    } else if (cmd == c_cands) {
      result = cmd_candidates(cfg, cands);
    } else if (cmd == c_train) {
      result = cmd_train(cfg, train_args);
    } else if (cmd == c_ft) {
      result = cmd_finetune(cfg, ft);
    } else if (cmd == c_cap) {
      result = cmd_caption(cfg, cap);
    } else if (cmd == c_eval) {
      result = cmd_evaluate(ev);
    } else if (cmd == c_abl) {
      result = cmd_ablate(cfg, abl);
    } else if (cmd == c_gap) {
      result = cmd_gap(gap);
    } else {
      const json doc = to_json(cfg);
      if (!init_out.empty()) {
        std::ofstream f(init_out, std::ios::binary);
        if (!f) throw Error(ErrorKind::data, "cannot write " + init_out);
        f << doc.dump(2) << '\n';
      }
      result = doc;
    }
    out << result.dump() << '\n';
    return 0;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error (data): " << e.what() << '\n';
    return exit_code(ErrorKind::data);
  }
}

}  // namespace promptcap
