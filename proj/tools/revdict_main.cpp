// revdict: command-line front end for training, ensemble search, alignment,
// evaluation and word lookup.
#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "revdict/error.hpp"
#include "revdict/pipeline.hpp"
#include "revdict/service.hpp"

namespace {

using namespace revdict;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--out", c.out, "Override the output directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = RunConfig::load(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
    if (cfg.align) cfg.align->train.seed = *c.seed;
  }
  if (c.out) cfg.out = *c.out;
  return cfg;
}

Manifest load_manifest(const RunConfig& cfg, const std::string& explicit_path, const std::string& target) {
  fs::path path = explicit_path;
  if (path.empty()) path = cfg.out / ("ensemble." + target + ".json");
  if (!fs::exists(path)) throw DataError("ensemble manifest not found: " + path.string() + " (run search first)");
  return Manifest::load(path);
}

void print_report(const std::string& label, const EvalReport& r) {
  std::cout << json{{"split", label},
                    {"mse", r.mse},
                    {"cosine", r.cosine},
                    {"rank", r.rank},
                    {"p1", r.p_at_1 ? json(*r.p_at_1) : json()},
                    {"p10", r.p_at_10 ? json(*r.p_at_10) : json()},
                    {"n", r.n_items}}
                   .dump()
            << "\n";
}

json hits_json(const std::vector<Hit>& hits) {
  json out = json::array();
  for (const auto& h : hits) out.push_back({{"id", h.id}, {"word", h.word}, {"score", h.score}});
  return out;
}

LookupServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reverse dictionary: definitions to word embeddings and back to words"};
  app.require_subcommand(1);

  Common train_c;
  auto* train = app.add_subcommand("train", "Train one head per (encoder, target)");
  add_common(train, train_c);

  Common search_c;
  std::string search_target = "electra";
  std::vector<std::string> search_ckpts;
  auto* search = app.add_subcommand("search", "Score every ensemble subset on dev and pick the best");
  add_common(search, search_c);
  search->add_option("--target", search_target, "electra or sgns");
  search->add_option("--checkpoint", search_ckpts, "Head checkpoints (default: all trained heads)");

  Common align_c;
  auto* align = app.add_subcommand("align", "Train the source head and the cross-lingual aligner");
  add_common(align, align_c);

  Common tt_c;
  std::string tt_translations;
  std::string tt_manifest;
  std::string tt_target = "electra";
  bool allow_partial = false;
  auto* tt = app.add_subcommand("translate-test", "Run the ensemble on translated test glosses");
  add_common(tt, tt_c);
  tt->add_option("--translations", tt_translations, "JSONL of {id, gloss}")->required()->check(CLI::ExistingFile);
  tt->add_option("--manifest", tt_manifest, "Ensemble manifest (default: out/ensemble.<target>.json)");
  tt->add_option("--target", tt_target, "electra or sgns");
  tt->add_flag("--allow-partial", allow_partial, "Skip test ids without a translation");

  std::string ev_predictions;
  std::string ev_reference;
  std::string ev_target = "electra";
  std::vector<std::string> ev_pool;
  std::string ev_subtask = "Subtask 1";
  std::string ev_split = "test";
  std::string ev_json;
  auto* ev = app.add_subcommand("eval", "Score a predictions file against a reference dictionary");
  ev->add_option("--predictions", ev_predictions, "JSONL of {id, embedding}")->required()->check(CLI::ExistingFile);
  ev->add_option("--reference", ev_reference, "Reference dictionary")->required()->check(CLI::ExistingFile);
  ev->add_option("--target", ev_target, "electra or sgns");
  ev->add_option("--pool", ev_pool, "Dictionaries forming the rank/P@k pool (default: the reference)")
      ->check(CLI::ExistingFile);
  ev->add_option("--subtask", ev_subtask, "Row label in the report table");
  ev->add_option("--split", ev_split, "test or dev");
  ev->add_option("--json", ev_json, "Also write the report JSON here");

  Common lk_c;
  std::string lk_manifest;
  std::string lk_target = "electra";
  std::string lk_definition;
  std::size_t lk_k = 10;
  auto* lk = app.add_subcommand("lookup", "Offline top-k words for a definition");
  add_common(lk, lk_c);
  lk->add_option("--manifest", lk_manifest, "Ensemble manifest (default: out/ensemble.<target>.json)");
  lk->add_option("--target", lk_target, "electra or sgns");
  lk->add_option("--definition", lk_definition, "Definition text")->required();
  lk->add_option("-k,--k", lk_k, "Number of results");

  Common sv_c;
  std::string sv_manifest;
  std::string sv_target = "electra";
  std::optional<std::string> sv_host;
  std::optional<int> sv_port;
  std::optional<std::string> sv_static;
  auto* sv = app.add_subcommand("serve", "HTTP lookup service");
  add_common(sv, sv_c);
  sv->add_option("--manifest", sv_manifest, "Ensemble manifest (default: out/ensemble.<target>.json)");
  sv->add_option("--target", sv_target, "electra or sgns");
  sv->add_option("--host", sv_host, "Bind address");
  sv->add_option("--port", sv_port, "Port (REVDICT_PORT overrides the config)");
  sv->add_option("--static", sv_static, "Directory served at /")->check(CLI::ExistingDirectory);

  Common pr_c;
  std::string pr_manifest;
  std::string pr_target = "electra";
  std::string pr_split = "dev";
  auto* pr = app.add_subcommand("predict", "Ensemble predictions for a dictionary split");
  add_common(pr, pr_c);
  pr->add_option("--manifest", pr_manifest, "Ensemble manifest (default: out/ensemble.<target>.json)");
  pr->add_option("--target", pr_target, "electra or sgns");
  pr->add_option("--split", pr_split, "Dictionary split to predict");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*train) {
      const RunConfig cfg = load_config(train_c);
      for (const auto& p : cmd_train(cfg).checkpoints) std::cout << p.string() << "\n";
    } else if (*search) {
      const RunConfig cfg = load_config(search_c);
      std::vector<fs::path> ckpts(search_ckpts.begin(), search_ckpts.end());
      const SearchOutput out = cmd_search(cfg, target_kind_from_string(search_target), ckpts);
      std::cout << read_text_file(out.csv);
      std::cerr << "selected: " << out.manifest.string() << "\n";
    } else if (*align) {
      const RunConfig cfg = load_config(align_c);
      const AlignOutput out = cmd_align(cfg);
      for (const auto& [split, r] : out.reports) print_report(split, r);
    } else if (*tt) {
      const RunConfig cfg = load_config(tt_c);
      const Manifest m = load_manifest(cfg, tt_manifest, tt_target);
      const TranslateOutput out = cmd_translate_test(cfg, tt_translations, m, allow_partial);
      std::cerr << "predictions: " << out.predictions_path.string() << " (" << out.predictions.ids.size() << ")\n";
      if (out.report) print_report("test", *out.report);
    } else if (*ev) {
      std::vector<fs::path> pool(ev_pool.begin(), ev_pool.end());
      const EvalOutput out =
          cmd_eval(ev_predictions, ev_reference, target_kind_from_string(ev_target), pool, ev_subtask, ev_split);
      std::cout << out.table;
      if (!ev_json.empty()) write_text_file(ev_json, out.json.dump(2) + "\n");
    } else if (*lk) {
      const RunConfig cfg = load_config(lk_c);
      const auto service = make_lookup_service(cfg, load_manifest(cfg, lk_manifest, lk_target));
      std::cout << json{{"results", hits_json(service->lookup(lk_definition, lk_k))}}.dump() << "\n";
    } else if (*sv) {
      const RunConfig cfg = load_config(sv_c);
      const Manifest m = load_manifest(cfg, sv_manifest, sv_target);
      const std::string host = sv_host.value_or(cfg.serve.host);
      const int port = port_from_env(sv_port.value_or(cfg.serve.port));
      std::optional<std::string> static_dir = sv_static;
      if (!static_dir && cfg.serve.static_dir) static_dir = cfg.serve.static_dir->string();
      LookupServer server([cfg, m] { return make_lookup_service(cfg, m); }, static_dir);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << port << "\n";
      server.listen(host, port);
      g_server = nullptr;
    } else if (*pr) {
      const RunConfig cfg = load_config(pr_c);
      const Manifest m = load_manifest(cfg, pr_manifest, pr_target);
      const Predictions p = predict_split(cfg, m, pr_split);
      const fs::path path = cfg.out / ("predict." + pr_split + "." + pr_target + ".predictions.jsonl");
      write_predictions(p, path);
      std::cout << path.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
