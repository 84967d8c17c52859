#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "mini_project.hpp"
#include "revdict/error.hpp"
#include "revdict/pipeline.hpp"
#include "support.hpp"

using namespace revdict;
namespace t = revdict::testing;
using nlohmann::json;

namespace {

std::string bytes_of(const fs::path& p) { return read_text_file(p); }

// One trained and searched project shared by the command tests.
struct Trained {
  t::TempDir dir{"pipeline"};
  t::MiniProject project;
  RunConfig cfg;
  TrainOutput train;
  SearchOutput search;

  Trained() {
    project = t::make_mini_project(dir.path());
    cfg = RunConfig::load(project.config);
    train = cmd_train(cfg);
    search = cmd_search(cfg, TargetKind::kElectra);
  }
};

Trained& trained() {
  static Trained t;
  return t;
}

json edit_config(const t::MiniProject& p) { return json::parse(read_text_file(p.config)); }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(REVDICT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("RunConfig: resolves paths against the config directory") {
  t::TempDir dir("cfg");
  const auto p = t::make_mini_project(dir.path());
  const RunConfig cfg = RunConfig::load(p.config);
  CHECK(cfg.encoders.size() == 4);
  CHECK(cfg.dictionary.at("train") == dir.path() / "dict" / "train.json");
  CHECK(cfg.encoders.at("feat_c").type == EncoderSpec::Type::kFeatures);
  CHECK(cfg.encoders.at("hg_b").dim == 24);
  CHECK(cfg.train.seed == 11);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.out == dir.path() / "out");
  CHECK(cfg.targets.size() == 2);
}

TEST_CASE("RunConfig: rejects unknown keys, bad types and missing files") {
  t::TempDir dir("cfgbad");
  const auto p = t::make_mini_project(dir.path());
  auto expect_config_error = [&](json doc, const std::string& fragment) {
    try {
      RunConfig::parse(doc, dir.path());
      FAIL("accepted: " << doc.dump());
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  auto doc = edit_config(p);
  doc["learning_rate"] = 1;
  expect_config_error(doc, "learning_rate");

  doc = edit_config(p);
  doc["dictionary"]["dev"] = "dict/nope.json";
  expect_config_error(doc, "nope.json");

  doc = edit_config(p);
  doc["encoders"]["feat_c"]["dev"] = "features/missing.jsonl";
  expect_config_error(doc, "missing.jsonl");

  doc = edit_config(p);
  doc["train"]["seed"] = 3;
  expect_config_error(doc, "seed");

  doc = edit_config(p);
  doc["train"]["epochs"] = "many";
  expect_config_error(doc, "epochs");

  doc = edit_config(p);
  doc["encoders"]["hg_a"]["type"] = "bert";
  expect_config_error(doc, "type");

  doc = edit_config(p);
  doc["encoders"]["hg_a"]["dim"] = 4;
  expect_config_error(doc, "dim");

  doc = edit_config(p);
  doc["targets"] = {"glove"};
  expect_config_error(doc, "glove");

  doc = edit_config(p);
  doc["serve"] = {{"port", 8080}, {"tls", true}};
  expect_config_error(doc, "tls");

  CHECK_THROWS_AS(RunConfig::load(dir / "absent.json"), ConfigError);
  write_text_file(dir / "broken.json", "{\"dictionary\": ");
  CHECK_THROWS_AS(RunConfig::load(dir / "broken.json"), ConfigError);
}

TEST_CASE("GlossEncoder: feature lookup order and fallback") {
  t::TempDir dir("enc");
  const auto p = t::make_mini_project(dir.path(), {.n_train = 20, .n_dev = 10, .n_test = 10});
  const RunConfig cfg = RunConfig::load(p.config);
  const DictionarySet test = load_dictionary(cfg.dictionary.at("test"), "ar", "test");
  const DictionarySet train = load_dictionary(cfg.dictionary.at("train"), "ar", "train");

  GlossEncoder enc("feat_c", cfg.encoders.at("feat_c"), 42);
  CHECK(enc.dim() == 16);
  enc.index_glosses("train", train);
  enc.index_glosses("test", test);
  Vector out(16);
  const auto& e = test.entries()[3];

  // Same id, same gloss: the stored row.
  CHECK_FALSE(enc.resolve(e.id, e.gloss, false, out));
  CHECK(out == hashgram_encode(e.gloss, 16, 3));
  // Unknown id with a known gloss: found by gloss.
  CHECK_FALSE(enc.resolve("elsewhere", train.entries()[0].gloss, false, out));
  CHECK(out == hashgram_encode(train.entries()[0].gloss, 16, 3));
  // Known id, different gloss, unseen text: hash-gram fallback at the encoder's width.
  CHECK(enc.resolve(e.id, "a gloss nobody wrote", false, out));
  CHECK(out == hashgram_encode("a gloss nobody wrote", 16, 42));

  Vector wrong(5);
  CHECK_THROWS_AS(enc.resolve(e.id, e.gloss, false, wrong), DimensionError);

  const GlossEncoder hg("hg_a", cfg.encoders.at("hg_a"), 42);
  Vector hv(32);
  CHECK_FALSE(hg.resolve("x", "any text at all", false, hv));
  CHECK(hv == hashgram_encode("any text at all", 32, 1));
}

TEST_CASE("GlossEncoder: malformed feature file names the file and line") {
  t::TempDir dir("encbad");
  const auto p = t::make_mini_project(dir.path(), {.n_train = 20, .n_dev = 10, .n_test = 10});
  const RunConfig cfg = RunConfig::load(p.config);
  const fs::path file = dir / "features" / "c.dev.jsonl";
  std::string text = read_text_file(file);
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = text.find('\n', pos) + 1;
  text.insert(pos, "{\"id\": \"oops\", \"features\": [1, 2]}\n");
  write_text_file(file, text);
  try {
    GlossEncoder enc("feat_c", cfg.encoders.at("feat_c"), 0);
    FAIL("malformed feature file accepted");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK_MESSAGE(msg.find("c.dev.jsonl:3") != std::string::npos, msg);
  }
}

TEST_CASE("train: one checkpoint per encoder and target, byte-identical on rerun") {
  auto& tr = trained();
  REQUIRE(tr.train.checkpoints.size() == 8);
  for (const auto& c : tr.train.checkpoints) {
    CHECK(fs::exists(c));
    const fs::path history = fs::path(c).replace_extension(".history.json");
    CHECK(fs::exists(history));
  }
  const TrainedHead head = load_head(tr.cfg.out / "heads" / "feat_d.sgns.head");
  CHECK(head.head.d_enc() == 20);
  CHECK(head.head.d_hidden() == 20);
  CHECK(head.head.d_out() == t::kMiniSgns);
  CHECK(head.head.target == TargetKind::kSgns);

  RunConfig again = tr.cfg;
  again.out = tr.dir / "out-again";
  const TrainOutput second = cmd_train(again);
  REQUIRE(second.checkpoints.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(tr.train.checkpoints[i].filename() == second.checkpoints[i].filename());
    CHECK(bytes_of(tr.train.checkpoints[i]) == bytes_of(second.checkpoints[i]));
  }

  RunConfig reseeded = tr.cfg;
  reseeded.out = tr.dir / "out-reseeded";
  reseeded.train.seed = 12;
  const TrainOutput third = cmd_train(reseeded);
  CHECK(bytes_of(tr.train.checkpoints[0]) != bytes_of(third.checkpoints[0]));
}

TEST_CASE("search: fifteen subsets, winner is the cosine maximum, manifest round trip") {
  auto& tr = trained();
  const auto& rows = tr.search.result.rows;
  REQUIRE(rows.size() == 15);
  double best = -2.0;
  for (const auto& r : rows) best = std::max(best, r.report.cosine);
  CHECK(tr.search.result.winner().report.cosine == best);

  const std::string csv = bytes_of(tr.search.csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 16);
  const Manifest m = Manifest::load(tr.search.manifest);
  CHECK(m.target == TargetKind::kElectra);
  CHECK(m.dev_cosine == best);
  REQUIRE(m.members.size() == tr.search.result.winner().members.size());
  for (std::size_t i = 0; i < m.members.size(); ++i) {
    CHECK(m.members[i].name == tr.search.result.winner().members[i]);
    CHECK(fs::exists(m.members[i].checkpoint));
  }

  const SearchOutput again = cmd_search(tr.cfg, TargetKind::kElectra);
  CHECK(bytes_of(again.csv) == csv);

  CHECK_THROWS_AS(cmd_search(tr.cfg, TargetKind::kElectra, {tr.cfg.out / "heads" / "hg_a.sgns.head"}), DataError);
  RunConfig fresh = tr.cfg;
  fresh.out = tr.dir / "never-trained";
  CHECK_THROWS_AS(cmd_search(fresh, TargetKind::kElectra), DataError);
}

TEST_CASE("search: explicit checkpoints, single head") {
  auto& tr = trained();
  const SearchOutput one = cmd_search(tr.cfg, TargetKind::kSgns, {tr.cfg.out / "heads" / "hg_b.sgns.head"});
  REQUIRE(one.result.rows.size() == 1);
  CHECK(one.result.winner().members == std::vector<std::string>{"hg_b"});
}

TEST_CASE("translate-test on target-language glosses equals the direct path bitwise") {
  auto& tr = trained();
  const Manifest m = Manifest::load(tr.search.manifest);
  const Predictions direct = predict_split(tr.cfg, m, "test");
  const fs::path translations = t::write_identity_translations(tr.project);
  const TranslateOutput out = cmd_translate_test(tr.cfg, translations, m, false);
  CHECK(out.fallbacks == 0);
  CHECK(out.missing.empty());
  CHECK(out.predictions.ids == direct.ids);
  CHECK(out.predictions.embeddings == direct.embeddings);
  REQUIRE(out.report);
  CHECK(out.report->n_items == tr.project.test.size());

  const Predictions reread = load_predictions(out.predictions_path);
  CHECK(reread.ids == direct.ids);
  CHECK(reread.embeddings == direct.embeddings);
}

TEST_CASE("translate-test: missing translations fail unless partial runs are allowed") {
  auto& tr = trained();
  const Manifest m = Manifest::load(tr.search.manifest);
  const fs::path translations = t::write_identity_translations(tr.project, 10);
  CHECK_THROWS_AS(cmd_translate_test(tr.cfg, translations, m, false), DataError);
  const TranslateOutput out = cmd_translate_test(tr.cfg, translations, m, true);
  CHECK(out.missing.size() == 10);
  CHECK(out.predictions.ids.size() == tr.project.test.size() - 10);
  CHECK(out.predictions.embeddings.rows() == tr.project.test.size() - 10);

  write_text_file(tr.dir / "bad-translations.jsonl", "{\"id\": \"test.0\", \"gloss\": 5}\n");
  CHECK_THROWS_AS(cmd_translate_test(tr.cfg, tr.dir / "bad-translations.jsonl", m, true), DataError);
}

TEST_CASE("translate-test: unseen translated glosses fall back to hash-gram features") {
  auto& tr = trained();
  const Manifest m = Manifest::load(tr.search.manifest);
  std::string text;
  for (const auto& e : tr.project.test) text += json({{"id", e.id}, {"gloss", "machine translated " + e.gloss}}).dump() + "\n";
  write_text_file(tr.dir / "mt.jsonl", text);
  const TranslateOutput out = cmd_translate_test(tr.cfg, tr.dir / "mt.jsonl", m, false);
  std::size_t feature_members = 0;
  for (const auto& mem : m.members) feature_members += mem.name.rfind("feat_", 0) == 0;
  CHECK(out.fallbacks == feature_members * tr.project.test.size());
  CHECK(all_finite(out.predictions.embeddings.values()));
}

TEST_CASE("eval: gold embeddings score perfectly") {
  auto& tr = trained();
  Predictions gold;
  std::vector<Vector> rows;
  for (const auto& e : tr.project.test) {
    gold.ids.push_back(e.id);
    rows.push_back(*e.electra);
  }
  gold.embeddings = Matrix::from_rows(rows);
  write_predictions(gold, tr.dir / "gold.jsonl");
  const EvalOutput out =
      cmd_eval(tr.dir / "gold.jsonl", tr.cfg.dictionary.at("test"), TargetKind::kElectra, {}, "Subtask 1", "test");
  CHECK(out.report.mse == 0.0);
  CHECK(out.report.cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.report.rank == 0.0);
  CHECK(*out.report.p_at_1 == 1.0);
  CHECK(*out.report.p_at_10 == 1.0);
  CHECK(out.json["split"] == "test");
  CHECK(out.table.find("1.000 / N/A") != std::string::npos);

  // A wider pool can only push the rank up.
  const EvalOutput pooled = cmd_eval(tr.dir / "gold.jsonl", tr.cfg.dictionary.at("test"), TargetKind::kElectra,
                                     {tr.cfg.dictionary.at("train"), tr.cfg.dictionary.at("test")}, "Subtask 1", "test");
  CHECK(pooled.report.rank == 0.0);
  CHECK(*pooled.report.p_at_1 == 1.0);
}

TEST_CASE("predictions files: line-numbered errors") {
  t::TempDir dir("preds");
  write_text_file(dir / "p.jsonl", "{\"id\": \"a\", \"embedding\": [1, 2]}\n\n{\"id\": \"b\", \"embedding\": [1]}\n");
  try {
    load_predictions(dir / "p.jsonl");
    FAIL("ragged predictions accepted");
  } catch (const DataError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(":3") != std::string::npos, e.what());
  }
  write_text_file(dir / "q.jsonl", "{\"id\": \"a\", \"embedding\": [1, 2]}\nnot json\n");
  try {
    load_predictions(dir / "q.jsonl");
    FAIL("garbage accepted");
  } catch (const DataError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(":2") != std::string::npos, e.what());
  }
  write_text_file(dir / "r.jsonl", "{\"id\": \"a\", \"embedding\": [1]}\n{\"id\": \"a\", \"embedding\": [2]}\n");
  CHECK_THROWS_AS(load_predictions(dir / "r.jsonl"), DataError);
  write_text_file(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(load_predictions(dir / "empty.jsonl"), DataError);
}

TEST_CASE("golden fixture: committed oracle metrics are reproduced") {
  const fs::path dir = fs::path(REVDICT_FIXTURES) / "golden";
  const json expected = json::parse(read_text_file(dir / "expected.json"));
  for (const std::string kind : {"electra", "sgns"}) {
    CAPTURE(kind);
    const json& e = expected.at(kind);
    const EvalOutput out = cmd_eval(dir / ("predictions." + kind + ".jsonl"), dir / "reference.json",
                                    target_kind_from_string(kind), {}, "golden", "test");
    CHECK(out.report.n_items == e.at("n").get<std::size_t>());
    CHECK(out.report.rank == e.at("rank").get<double>());
    CHECK(*out.report.p_at_1 == e.at("p1").get<double>());
    CHECK(*out.report.p_at_10 == e.at("p10").get<double>());
    CHECK(std::abs(out.report.mse - e.at("mse").get<double>()) <= 1e-12);
    CHECK(std::abs(out.report.cosine - e.at("cosine").get<double>()) <= 1e-12);
    const json& f = e.at("formatted");
    CHECK(format_metric(out.report.mse) == f.at("mse").get<std::string>());
    CHECK(format_metric(out.report.cosine) == f.at("cosine").get<std::string>());
    CHECK(format_metric(out.report.rank) == f.at("rank").get<std::string>());
    CHECK(format_metric(out.report.p_at_1) == f.at("p1").get<std::string>());
    CHECK(format_metric(out.report.p_at_10) == f.at("p10").get<std::string>());

    const VocabIndex index =
        VocabIndex::build(load_dictionary(dir / "reference.json", "ar", "test"), target_kind_from_string(kind));
    for (const auto& q : e.at("lookups")) {
      const auto hits = index.lookup(q.at("query").get<Vector>(), 10);
      const auto ids = q.at("top_ids").get<std::vector<std::string>>();
      const auto scores = q.at("top_scores").get<std::vector<double>>();
      REQUIRE(hits.size() == ids.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].id == ids[i]);
        CHECK(std::abs(hits[i].score - scores[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("align: trains the source head and aligner, reports held-out mapped splits") {
  t::TempDir dir("align");
  const auto p = t::make_mini_project(dir.path(), {.n_train = 120, .n_dev = 30, .n_test = 20, .with_align = true});
  const RunConfig cfg = RunConfig::load(p.config);
  REQUIRE(cfg.align);
  CHECK(cfg.align->width == 16);
  const AlignOutput out = cmd_align(cfg);
  CHECK(fs::exists(out.source_head));
  CHECK(fs::exists(out.aligner));
  CHECK(out.reports.count("train") == 0);
  CHECK(out.reports.count("dev") == 1);
  CHECK(out.reports.at("dev").n_items == 20);
  CHECK(out.reports.at("dev").p_at_1.has_value());

  RunConfig again = cfg;
  again.out = dir / "out-again";
  const AlignOutput second = cmd_align(again);
  CHECK(bytes_of(out.aligner) == bytes_of(second.aligner));
  CHECK(bytes_of(out.source_head) == bytes_of(second.source_head));

  RunConfig none = cfg;
  none.align.reset();
  CHECK_THROWS_AS(cmd_align(none), ConfigError);
}

TEST_CASE("cli: exit codes and outputs") {
  auto& tr = trained();
  const fs::path log = tr.dir / "cli.log";
  const fs::path golden = fs::path(REVDICT_FIXTURES) / "golden";

  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("", log) == 1);
  CHECK(run_cli("train", log) == 1);
  CHECK(run_cli("eval --predictions " + (golden / "predictions.electra.jsonl").string() + " --reference " +
                    (golden / "reference.json").string() + " --json " + (tr.dir / "report.json").string(),
                log) == 0);
  CHECK(bytes_of(log).find("0.833") != std::string::npos);
  CHECK(json::parse(bytes_of(tr.dir / "report.json"))["p1"] == 0.8);

  write_text_file(tr.dir / "broken.jsonl", "{\"id\": 1}\n");
  CHECK(run_cli("eval --predictions " + (tr.dir / "broken.jsonl").string() + " --reference " +
                    (golden / "reference.json").string(),
                log) == 2);
  CHECK(bytes_of(log).find("broken.jsonl:1") != std::string::npos);

  json bad = edit_config(tr.project);
  bad["surprise"] = true;
  write_text_file(tr.dir / "bad.json", bad.dump());
  CHECK(run_cli("train --config " + (tr.dir / "bad.json").string(), log) == 1);

  const std::string cfg_arg = " --config " + tr.project.config.string();
  CHECK(run_cli("lookup" + cfg_arg + " --definition \"" + tr.project.test[0].gloss + "\" -k 3", log) == 0);
  const json hits = json::parse(bytes_of(log));
  CHECK(hits["results"].size() == 3);
  CHECK(run_cli("lookup" + cfg_arg + " --definition \"\"", log) == 1);
  CHECK(run_cli("lookup" + cfg_arg + " --definition x -k 0", log) == 1);
  CHECK(run_cli("translate-test" + cfg_arg + " --translations " + (tr.dir / "broken.jsonl").string(), log) == 2);
  CHECK(run_cli("predict" + cfg_arg + " --split dev", log) == 0);
  CHECK(fs::exists(tr.cfg.out / "predict.dev.electra.predictions.jsonl"));
}
